"""Acceptance criteria, one test per criterion.

Each test records a single ``criterion N: PASS|FAIL`` line, which is echoed
in the terminal summary. Tolerances are fixed by the criteria and are not
tuned to the results.
"""

import time

import numpy as np
import pytest

from invlqg.costs import identify_costs, select_nodes
from invlqg.experiments import (
    METRICS,
    StudyConfig,
    envelope_coverage,
    run_batch_study,
    trajectory_errors,
)
from invlqg.model import CostParameters, GameDefinition
from invlqg.noise import estimate_noise, log_likelihood, mle_covariance, residuals
from invlqg.pipeline import invert
from invlqg.riccati import solve_coupled_riccati
from invlqg.simulate import SimulationConfig, empirical_moments, simulate_bundle
from invlqg.strategy import estimate_gains


def _lqr_reference(game, Q, R, substeps):
    """Classical single-player Riccati, -dP/dt = Q + PA + A'P - P B R^-1 B' P, by RK4."""
    A, B = game.A, game.B[0]
    S = B @ np.linalg.solve(R, B.T)

    def f(P):
        return Q + P @ A + A.T @ P - P @ S @ P

    h = game.dt / substeps
    P = np.zeros_like(A)
    out = [P]
    for _ in range(game.steps):
        for _ in range(substeps):
            k1 = f(P)
            k2 = f(P + 0.5 * h * k1)
            k3 = f(P + 0.5 * h * k2)
            k4 = f(P + h * k3)
            P = P + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(P)
    return np.array(out[::-1])


def test_criterion_1_lqr_oracle(game, costs, acceptance):
    single = GameDefinition(game.A, game.B[:1], game.t0, game.tN, game.steps, game.x0)
    c = CostParameters(costs.Q[:1], ((costs.R[0][0],),))
    start = time.perf_counter()
    prof = solve_coupled_riccati(single, c)
    elapsed = time.perf_counter() - start
    ref = _lqr_reference(single, costs.Q[0], costs.R[0][0], substeps=100)
    rel = np.abs(prof.P[:, 0] - ref).max() / np.abs(ref).max()
    acceptance(1, rel <= 1e-6 and elapsed < 1.0, f"max rel error {rel:.2e} (<= 1e-6), {elapsed:.3f} s (< 1 s)")


def test_criterion_2_gain_recovery(gt_bundle, truth, acceptance):
    start = time.perf_counter()
    est, rep = estimate_gains(gt_bundle)
    elapsed = time.perf_counter() - start
    worst = 0.0
    for Ke, Kt in zip(est.K, truth.K):
        norm = np.linalg.norm(Kt, axis=(1, 2))
        # K(tN) = 0, where a relative error is undefined
        use = ~rep.flagged & (norm > 0)
        err = np.linalg.norm(Ke - Kt, axis=(1, 2))[use] / norm[use]
        worst = max(worst, err.max())
    ok = worst <= 1e-8 and elapsed < 1.0
    acceptance(2, ok, f"max rel gain error {worst:.2e} at unflagged nodes (<= 1e-8), {elapsed:.3f} s (< 1 s)")


def test_criterion_3_cost_recovery(game, costs, truth, acceptance):
    cid = identify_costs(game, truth, select_nodes(game.steps, 500))
    ranks = [d.rank for d in cid.diagnostics]
    angles = []
    for i, theta in enumerate(cid.thetas):
        a, b = theta / np.linalg.norm(theta), costs.theta(i) / np.linalg.norm(costs.theta(i))
        angles.append(float(np.arccos(min(1.0, abs(a @ b)))))
    prof = solve_coupled_riccati(game, cid.costs)
    repro = max(np.abs(Ke - Kt).max() / np.abs(Kt).max() for Ke, Kt in zip(prof.K, truth.K))
    ok = ranks == [11, 11] and max(angles) <= 1e-3 and repro <= 1e-4
    acceptance(
        3, ok,
        f"ranks {ranks} (== 11), angles {angles[0]:.1e}/{angles[1]:.1e} rad (<= 1e-3), "
        f"gain reproduction {repro:.1e} (<= 1e-4)",
    )


def _l_error(game, truth, noise, D, K, seed):
    b = simulate_bundle(game, truth, noise, SimulationConfig(D=D, seed=seed))
    est = estimate_noise(b, game, select_nodes(game.steps, K))
    return np.abs(est.noise.l - noise.l) / noise.l


def test_criterion_4_noise_consistency(game, truth, noise, acceptance):
    D, K = 20, 500
    bound = 3 * np.sqrt(2 / (D * K))
    within = sum(bool(np.all(_l_error(game, truth, noise, D, K, s) <= bound)) for s in range(10))
    DK = np.array([1e2, 1e3, 1e4])
    mean_err = [
        np.mean([_l_error(game, truth, noise, D, int(dk) // D, 100 + s).mean() for s in range(40)])
        for dk in DK
    ]
    slope = np.polyfit(np.log(DK), np.log(mean_err), 1)[0]
    ok = within >= 9 and abs(slope + 0.5) <= 0.15
    acceptance(4, ok, f"{within}/10 seeds within {bound:.3f} (>= 9), log-log slope {slope:.3f} (-0.5 +/- 0.15)")


@pytest.fixture(scope="module")
def study(game, costs, noise):
    start = time.perf_counter()
    res = run_batch_study(StudyConfig(), game, costs, noise)
    return res, time.perf_counter() - start


def test_criterion_5_table_reproduction(study, acceptance):
    res, elapsed = study
    avg = {a["K"]: a for a in res.averages}
    lo, hi = avg[20], avg[500]
    bounds = [
        ("e_mu_x", 5e-3, 5e-5),
        ("e_mu_u", 0.15, 5e-4),
        ("e_var_x", 0.3, 0.05),
        ("e_var_u", 0.3, 0.05),
    ]
    failed = []
    for key, b20, b500 in bounds:
        if not lo[key] <= b20:
            failed.append(f"{key}@20={lo[key]:.2e}>{b20:g}")
        if not hi[key] <= b500:
            failed.append(f"{key}@500={hi[key]:.2e}>{b500:g}")
    Ks = sorted(avg)
    for key in METRICS:
        seq = [avg[K][key] for K in Ks]
        if any(b > a for a, b in zip(seq, seq[1:])):
            failed.append(f"{key} not non-increasing " + "/".join(f"{v:.2e}" for v in seq))
    tc = [avg[K]["t_C"] for K in Ks]
    if any(b < a for a, b in zip(tc, tc[1:])):
        failed.append("t_C not increasing in K " + "/".join(f"{v * 1e3:.1f}ms" for v in tc))
    if any(a["n_failed"] for a in res.averages):
        failed.append("failed repetitions")
    if elapsed >= 300:
        failed.append(f"runtime {elapsed:.0f} s")
    table = "; ".join(
        f"K={K}: " + ",".join(f"{avg[K][m]:.2e}" for m in METRICS) for K in Ks
    )
    detail = f"[{table}] {elapsed:.0f} s" + ("" if not failed else " | failing: " + "; ".join(failed))
    acceptance(5, not failed, detail)


def test_criterion_6_scale_invariance(game, costs, truth, noise, acceptance):
    rng = np.random.default_rng(6)
    gt = empirical_moments(simulate_bundle(game, truth, noise, SimulationConfig(D=20, seed=3)))
    worst_gain = worst_metric = 0.0
    for _ in range(10):
        alpha = rng.uniform(0.1, 10)
        player = int(rng.integers(0, 2))
        prof = solve_coupled_riccati(game, costs.scaled(player, alpha))
        worst_gain = max(worst_gain, max(np.abs(a - b).max() for a, b in zip(prof.K, truth.K)))
        est = empirical_moments(simulate_bundle(game, prof, noise, SimulationConfig(D=20, seed=3)))
        rep = trajectory_errors(gt, est)
        worst_metric = max(worst_metric, max(getattr(rep, m) for m in METRICS))
    ok = worst_gain <= 1e-9 and worst_metric <= 1e-9
    acceptance(6, ok, f"max gain change {worst_gain:.1e}, max metric {worst_metric:.1e} (<= 1e-9)")


def test_criterion_7_mle_is_maximizer(game, truth, noise, acceptance):
    rng = np.random.default_rng(7)
    losses = 0
    for seed in range(5):
        b = simulate_bundle(game, truth, noise, SimulationConfig(D=20, seed=seed))
        res = residuals(b, game)
        cov = mle_covariance(res, game.dt)
        best = log_likelihood(res, cov, game.dt)
        root = np.linalg.cholesky(cov)
        for _ in range(100):
            E = rng.normal(size=(2, 2))
            E = (E + E.T) / 2
            E *= 1e-2 / np.linalg.norm(E, 2)
            alt = root @ (np.eye(2) + E) @ root.T
            losses += log_likelihood(res, alt, game.dt) >= best
    acceptance(7, losses == 0, f"{losses} of 500 perturbations reach the MLE likelihood (== 0)")


def test_criterion_8_envelopes(game, gt_bundle, noise, acceptance):
    gt = empirical_moments(gt_bundle)
    cover = {}
    for K in (20, 500):
        res = invert(gt_bundle, game, K)
        prof = solve_coupled_riccati(game, res.costs)
        est = simulate_bundle(game, prof, res.noise.noise, SimulationConfig(D=20, seed=gt_bundle.seed))
        cover[K] = envelope_coverage(gt, empirical_moments(est))
    ok = min(cover.values()) >= 0.95
    acceptance(8, ok, "coverage " + ", ".join(f"K={K}: {c:.3f}" for K, c in cover.items()) + " (>= 0.95)")
