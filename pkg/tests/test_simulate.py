import numpy as np
import pytest
from scipy.linalg import solve_discrete_lyapunov

from invlqg.errors import SimulationExplosionError
from invlqg.model import GameDefinition, NoiseModel, StrategyProfile
from invlqg.simulate import (
    SimulationConfig,
    empirical_moments,
    simulate_bundle,
    wiener_increments,
)


def zero_gains(game):
    return StrategyProfile(game.grid, tuple(np.zeros((game.steps + 1, m, game.n)) for m in game.m))


def test_shapes_and_terminal_controls(game, truth, gt_bundle):
    b = gt_bundle
    assert b.x.shape == (20, 501, 2) and b.u[0].shape == (20, 501, 2)
    np.testing.assert_array_equal(b.x[:, 0], np.broadcast_to(game.x0, (20, 2)))
    # u = -K x at every node, including tN where K = 0
    np.testing.assert_allclose(b.u[1][:, 10], -b.x[:, 10] @ truth.K[1][10].T, atol=0)
    assert np.all(b.u[0][:, -1] == 0)


def test_determinism_and_stream_prefix(game, truth, noise, gt_bundle):
    again = simulate_bundle(game, truth, noise, SimulationConfig(D=20, seed=42))
    np.testing.assert_array_equal(again.x, gt_bundle.x)
    fewer = simulate_bundle(game, truth, noise, SimulationConfig(D=5, seed=42))
    np.testing.assert_array_equal(fewer.x, gt_bundle.x[:5])
    other = simulate_bundle(game, truth, noise, SimulationConfig(D=5, seed=43))
    assert not np.allclose(other.x, fewer.x)


def test_increment_statistics():
    dW = wiener_increments(0, 200, 500, 2, 0.01)
    assert dW.shape == (200, 500, 2)
    assert abs(dW.mean()) < 3 * 0.1 / np.sqrt(dW.size)
    assert dW.var() == pytest.approx(0.01, rel=0.02)
    pcg = wiener_increments(0, 2, 5, 2, 0.01, rng="pcg64")
    assert not np.allclose(pcg, dW[:2, :5])


def test_deterministic_mode_is_euler_recursion(game, truth, noise):
    b = simulate_bundle(game, truth, noise, SimulationConfig(D=2, deterministic=True))
    x = game.x0.copy()
    for k in range(game.steps):
        x = x + (truth.F[k] @ x) * game.dt
    np.testing.assert_allclose(b.x[0, -1], x, rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(b.x[0], b.x[1])


def test_supplied_increments_are_used(game, truth, noise):
    dW = wiener_increments(7, 3, game.steps, 2, game.dt)
    a = simulate_bundle(game, truth, noise, SimulationConfig(D=3, seed=99), increments=dW)
    b = simulate_bundle(game, truth, noise, SimulationConfig(D=3, seed=7))
    np.testing.assert_array_equal(a.x, b.x)


def test_stationary_covariance_matches_lyapunov():
    # open loop with stable drift; EM recursion x+ = (I + A dt) x + L dW
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    game = GameDefinition(A, (np.eye(2),), 0.0, 8.0, 800, [0.0, 0.0])
    noise = NoiseModel([0.3, 0.5], game.dt)
    b = simulate_bundle(game, zero_gains(game), noise, SimulationConfig(D=4000, seed=1))
    Phi = np.eye(2) + A * game.dt
    S = solve_discrete_lyapunov(Phi, noise.covariance_rate * game.dt)
    emp = np.cov(b.x[:, -1].T)
    np.testing.assert_allclose(emp, S, atol=4 * np.abs(S).max() * np.sqrt(2 / 4000))


def test_explosion_is_reported():
    game = GameDefinition([[500.0]], ([[1.0]],), 0.0, 10.0, 1000, [1.0])
    with pytest.raises(SimulationExplosionError) as info:
        simulate_bundle(game, zero_gains(game), NoiseModel([0.1], game.dt), SimulationConfig(D=3))
    assert info.value.exit_code == 3


def test_moments(gt_bundle):
    ms = empirical_moments(gt_bundle)
    np.testing.assert_allclose(ms.x_mean, gt_bundle.x.mean(axis=0))
    np.testing.assert_allclose(ms.u_var[1], gt_bundle.u[1].var(axis=0, ddof=1))
    assert ms.x_var[0].max() == 0  # shared initial state
    assert empirical_moments(gt_bundle, variance=False).x_var is None
    with pytest.raises(ValueError):
        empirical_moments(gt_bundle.subset([0]))


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(D=0)
    with pytest.raises(ValueError):
        SimulationConfig(rng="mt")
    with pytest.raises(ValueError):
        SimulationConfig(D=2, x0=np.zeros((3, 2)))
