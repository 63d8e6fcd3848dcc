"""Error metrics, cost evaluation and the repeated identification study."""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvLQGError
from .model import CostParameters, GameDefinition, NoiseModel, TrajectoryBundle
from .pipeline import invert
from .riccati import RiccatiSolverConfig, solve_coupled_riccati
from .simulate import MomentSeries, SimulationConfig, empirical_moments, simulate_bundle

log = logging.getLogger(__name__)

#: added to the ground-truth seed when estimation runs use independent noise
FRESH_SEED_OFFSET = 1_000_003
METRICS = ("e_mu_x", "e_mu_u", "e_var_x", "e_var_u")
ROW_FIELDS = ("K", "rep") + METRICS + ("t_C", "seed", "status", "error")


class UndefinedMetricError(ValueError):
    pass


def benchmark_game(steps: int = 500, t0: float = 0.0, tN: float = 5.0) -> GameDefinition:
    """Two players, two states, identity input matrices, ``x0 = (2, -2)``."""
    A = np.array([[1.0, -1.0], [1.0, 0.0]])
    return GameDefinition(A, (np.eye(2), np.eye(2)), t0, tN, steps, np.array([2.0, -2.0]))


def benchmark_costs() -> CostParameters:
    Z = np.zeros((2, 2))
    return CostParameters(
        (np.diag([1.0, 1.0]), np.diag([1.0, 10.0])),
        ((np.diag([1.0, 1.0]), Z), (Z, np.diag([1.0, 2.0]))),
    )


def benchmark_noise(dt: float = 0.01) -> NoiseModel:
    return NoiseModel(np.array([0.1, 0.2]), dt)


@dataclass
class ErrorReport:
    e_mu_x: float
    e_mu_u: float
    e_var_x: float
    e_var_u: float
    t_C: float = None
    K_eval: int = None
    D: int = None
    rep: int = None
    seed: int = None


def _rel_max(gt, est, what):
    denom = np.abs(gt).max()
    if not denom > 0:
        raise UndefinedMetricError(f"ground-truth {what} is identically zero")
    return float(np.abs(gt - est).max() / denom)


def trajectory_errors(gt: MomentSeries, est: MomentSeries) -> ErrorReport:
    """Maximum deviation over time and components, relative to the GT peak.

    Control metrics take the worst player. Only ``gt`` enters the
    normalization, so the metrics are not symmetric in their arguments.
    """
    if gt.x_mean.shape != est.x_mean.shape or len(gt.u_mean) != len(est.u_mean):
        raise ValueError("moment series have different shapes")
    if gt.x_var is None or est.x_var is None:
        raise ValueError("variance metrics need moment series with variances")
    return ErrorReport(
        e_mu_x=_rel_max(gt.x_mean, est.x_mean, "state mean"),
        e_mu_u=max(_rel_max(g, e, "control mean") for g, e in zip(gt.u_mean, est.u_mean)),
        e_var_x=_rel_max(gt.x_var, est.x_var, "state variance"),
        e_var_u=max(_rel_max(g, e, "control variance") for g, e in zip(gt.u_var, est.u_var)),
    )


def evaluate_cost(bundle: TrajectoryBundle, costs: CostParameters, player: int) -> float:
    """Sample average over demonstrations of the trapezoid-integrated running cost."""
    if not 0 <= player < costs.N:
        raise IndexError(f"player index {player} out of range")
    x = bundle.x
    run = np.einsum("dka,ab,dkb->dk", x, costs.Q[player], x)
    for uj, Rij in zip(bundle.u, costs.R[player]):
        run = run + np.einsum("dka,ab,dkb->dk", uj, Rij, uj)
    return float(np.trapezoid(run, bundle.t, axis=1).mean())


def envelope_table(gt: MomentSeries, est: MomentSeries):
    """Per-node mean and mean +/- 2 sigma of each state component, GT and estimate."""
    header = ["t"]
    cols = [gt.t]
    for label, ms in (("gt", gt), ("est", est)):
        sd = np.sqrt(ms.x_var)
        for s in range(ms.x_mean.shape[1]):
            header += [f"{label}_mean_{s + 1}", f"{label}_lo_{s + 1}", f"{label}_hi_{s + 1}"]
            cols += [ms.x_mean[:, s], ms.x_mean[:, s] - 2 * sd[:, s], ms.x_mean[:, s] + 2 * sd[:, s]]
    return header, np.column_stack(cols)


def envelope_coverage(gt: MomentSeries, est: MomentSeries) -> float:
    """Fraction of nodes where every component of the estimated mean lies in the GT 2-sigma band."""
    sd = np.sqrt(gt.x_var)
    inside = np.abs(est.x_mean - gt.x_mean) <= 2 * sd
    return float(np.all(inside, axis=1).mean())


@dataclass(frozen=True)
class StudyConfig:
    """Settings of the repeated forward-simulation / identification study.

    ``estimation_seeds`` selects the noise used when re-simulating with the
    estimated parameters: ``"common"`` reuses each repetition's ground-truth
    Wiener draws, ``"fresh"`` uses independent ones. ``inject_truth`` skips
    inference and re-simulates with the true parameters (a control run that
    isolates the Monte-Carlo floor).
    """

    K_values: tuple = (20, 50, 100, 500)
    D: int = 20
    repetitions: int = 10
    base_seed: int = 0
    threads: int = 1
    estimation_seeds: str = "common"
    inject_truth: bool = False
    solver: RiccatiSolverConfig = field(default_factory=RiccatiSolverConfig)

    def __post_init__(self):
        if self.estimation_seeds not in ("common", "fresh"):
            raise ValueError("estimation_seeds must be 'common' or 'fresh'")
        if self.repetitions < 1 or self.D < 1 or self.threads < 1:
            raise ValueError("repetitions, D and threads must be positive")
        if not self.K_values:
            raise ValueError("at least one K value is required")

    def gt_seed(self, rep: int) -> int:
        return self.base_seed + rep

    def estimation_seed(self, rep: int) -> int:
        offset = 0 if self.estimation_seeds == "common" else FRESH_SEED_OFFSET
        return self.gt_seed(rep) + offset


@dataclass
class StudyResult:
    rows: list
    averages: list


def _repetition(cfg, game, costs, noise, truth_profile, rep, todo, on_row):
    seed = cfg.gt_seed(rep)
    gt = simulate_bundle(game, truth_profile, noise, SimulationConfig(cfg.D, seed))
    gt_moments = empirical_moments(gt)
    rows = []
    for K in todo:
        row = {"K": K, "rep": rep, "seed": seed}
        try:
            if cfg.inject_truth:
                est_costs, est_noise, t_C = costs, noise, 0.0
            else:
                res = invert(gt, game, K)
                est_costs, est_noise, t_C = res.costs, res.noise.noise, res.t_C
            profile = solve_coupled_riccati(game, est_costs, cfg.solver)
            est = simulate_bundle(
                game, profile, est_noise, SimulationConfig(cfg.D, cfg.estimation_seed(rep))
            )
            rep_err = trajectory_errors(gt_moments, empirical_moments(est))
            row.update({k: getattr(rep_err, k) for k in METRICS})
            row.update(t_C=t_C, status="ok", error="")
        except (InvLQGError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("K=%s rep=%s failed: %s", K, rep, exc)
            row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        if on_row is not None:
            on_row(row)
        rows.append(row)
    return rows


def study_averages(rows, K_values) -> list:
    out = []
    for K in K_values:
        ok = [r for r in rows if int(r["K"]) == K and r["status"] == "ok"]
        failed = sum(1 for r in rows if int(r["K"]) == K and r["status"] != "ok")
        avg = {"K": K, "n_ok": len(ok), "n_failed": failed}
        for key in METRICS + ("t_C",):
            avg[key] = float(np.mean([float(r[key]) for r in ok])) if ok else float("nan")
        out.append(avg)
    return out


def run_batch_study(
    cfg: StudyConfig,
    game: GameDefinition = None,
    costs: CostParameters = None,
    noise: NoiseModel = None,
    completed=(),
    on_row=None,
) -> StudyResult:
    """Ground truth, inversion, re-simulation and metrics for every (K, repetition).

    Each repetition draws one ground-truth bundle shared by all K values.
    Pairs listed in ``completed`` (as ``(K, rep)`` tuples) are skipped;
    ``on_row`` is called with each finished row, serialized by a lock.
    Rows come back sorted by ``(K, rep)``.
    """
    game = game or benchmark_game()
    costs = costs or benchmark_costs()
    noise = noise or benchmark_noise(game.dt)
    truth = solve_coupled_riccati(game, costs, cfg.solver)
    done = {(int(K), int(r)) for K, r in completed}
    lock = threading.Lock()

    def emit(row):
        if on_row is not None:
            with lock:
                on_row(row)

    jobs = []
    for rep in range(cfg.repetitions):
        todo = [K for K in cfg.K_values if (K, rep) not in done]
        if todo:
            jobs.append((rep, todo))

    def run(job):
        rep, todo = job
        return _repetition(cfg, game, costs, noise, truth, rep, todo, emit)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            chunks = list(pool.map(run, jobs))
    else:
        chunks = [run(job) for job in jobs]
    rows = sorted((r for chunk in chunks for r in chunk), key=lambda r: (r["K"], r["rep"]))
    return StudyResult(rows, study_averages(rows, cfg.K_values))
