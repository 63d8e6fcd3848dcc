import numpy as np
import pytest
from scipy.integrate import solve_ivp

from invlqg.errors import RiccatiDivergenceError, ValidationError
from invlqg.model import CostParameters, GameDefinition
from invlqg.riccati import (
    RiccatiSolverConfig,
    check_stability,
    closed_loop_matrix,
    solve_coupled_riccati,
)


def scalar_game(a=0.0, b=1.0, T=3.0, steps=300):
    return GameDefinition([[a]], ([[b]],), 0.0, T, steps, [1.0])


def test_scalar_tanh_closed_form():
    # q = r = b = 1, a = 0: P(t) = tanh(T - t)
    game = scalar_game()
    prof = solve_coupled_riccati(game, CostParameters(([[1.0]],), (([[1.0]],),)))
    np.testing.assert_allclose(prof.P[:, 0, 0, 0], np.tanh(game.tN - game.grid), atol=1e-12)
    np.testing.assert_allclose(prof.K[0][:, 0, 0], prof.P[:, 0, 0, 0], atol=0)


def test_terminal_condition_and_symmetry(truth):
    assert np.all(truth.P[-1] == 0)
    assert all(np.all(K[-1] == 0) for K in truth.K)
    np.testing.assert_array_equal(truth.P, np.swapaxes(truth.P, 2, 3))


def test_single_player_matches_scipy(game, costs):
    single = GameDefinition(game.A, game.B[:1], game.t0, game.tN, game.steps, game.x0)
    c = CostParameters(costs.Q[:1], ((costs.R[0][0],),))
    prof = solve_coupled_riccati(single, c)
    A, B, Q, R = game.A, game.B[0], costs.Q[0], costs.R[0][0]
    BRB = B @ np.linalg.solve(R, B.T)

    def f(t, y):
        P = y.reshape(2, 2)
        return (-(Q + P @ A + A.T @ P - P @ BRB @ P)).ravel()

    sol = solve_ivp(f, (game.tN, game.t0), np.zeros(4), t_eval=game.grid[::-1], rtol=1e-12, atol=1e-13, method="DOP853")
    ref = sol.y.T[::-1].reshape(-1, 2, 2)
    rel = np.abs(prof.P[:, 0] - ref).max() / np.abs(ref).max()
    assert rel < 1e-9


def _error_at(integrator, substeps):
    game = scalar_game(a=0.3, T=2.0, steps=20)
    c = CostParameters(([[2.0]],), (([[0.5]],),))
    P = solve_coupled_riccati(game, c, RiccatiSolverConfig(integrator, substeps)).P[0, 0, 0, 0]
    ref = solve_coupled_riccati(game, c, RiccatiSolverConfig("rk4", 400)).P[0, 0, 0, 0]
    return abs(P - ref)


@pytest.mark.parametrize("integrator, order", [("rk4", 4), ("euler", 1)])
def test_convergence_order(integrator, order):
    e1, e2 = _error_at(integrator, 2), _error_at(integrator, 4)
    assert 2 ** (order - 0.3) < e1 / e2 < 2 ** (order + 0.3)


def test_finite_difference_residual(game, costs, truth):
    # central differences of the stored P satisfy the ODE to O(dt^2)
    P, dt = truth.P, game.dt
    dP = (P[2:] - P[:-2]) / (2 * dt)
    Pk = P[1:-1]
    RinvBt = [np.linalg.solve(costs.R[j][j], game.B[j].T) for j in range(2)]
    worst = 0.0
    for k in range(0, Pk.shape[0], 25):
        F = game.A - sum(game.B[j] @ RinvBt[j] @ Pk[k, j] for j in range(2))
        for i in range(2):
            rhs = -costs.Q[i] - Pk[k, i] @ F - F.T @ Pk[k, i]
            for j in range(2):
                Kj = RinvBt[j] @ Pk[k, j]
                rhs = rhs - Kj.T @ costs.R[i][j] @ Kj
            worst = max(worst, np.abs(dP[k, i] - rhs).max())
    assert worst < 1e-3


def test_scale_invariance_of_gains(game, costs, truth):
    prof = solve_coupled_riccati(game, costs.scaled(0, 7.5))
    for a, b in zip(prof.K, truth.K):
        np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(prof.P[:, 0], 7.5 * truth.P[:, 0], rtol=1e-12, atol=1e-14)


def test_closed_loop_matrix(game, truth):
    np.testing.assert_allclose(closed_loop_matrix(game, truth.gains_at(0)), truth.F[0], atol=1e-15)
    np.testing.assert_array_equal(truth.F[-1], game.A)


def test_stability_report(truth):
    rep = check_stability(truth)
    # gains vanish at the terminal time, where F = A has eigenvalues 0.5 +/- 0.866i
    assert not rep.stable
    assert rep.max_real[-1] == pytest.approx(0.5)
    assert np.all(rep.max_real[:400] < 0)
    assert rep.first_unstable_time > 4.5
    assert rep.transition_norm < 1e-2


def test_divergence_reports_time():
    # r = -1 turns the quadratic term destabilizing: P = tan(T - t) blows up at T - pi/2
    game = scalar_game(T=5.0, steps=500)
    with pytest.raises(RiccatiDivergenceError) as info:
        solve_coupled_riccati(game, CostParameters(([[1.0]],), (([[-1.0]],),)))
    assert 5.0 - np.pi / 2 - 0.5 < info.value.t < 5.0 - np.pi / 2
    assert info.value.exit_code == 3


def test_singular_Rii_rejected(game, costs):
    Z = np.zeros((2, 2))
    bad = CostParameters(costs.Q, ((Z, Z), costs.R[1]))
    with pytest.raises(ValidationError, match="singular"):
        solve_coupled_riccati(game, bad)


def test_config_validation():
    with pytest.raises(ValueError):
        RiccatiSolverConfig("midpoint")
    with pytest.raises(ValueError):
        RiccatiSolverConfig(substeps=0)
