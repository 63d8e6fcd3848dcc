"""Backward integration of the coupled Riccati equations of a feedback Nash game.

Each player's matrix ``P_i`` obeys

    dP_i/dt = -Q_i - P_i F - F^T P_i - sum_j P_j B_j R_jj^{-1} R_ij R_jj^{-1} B_j^T P_j

with ``F = A - sum_j B_j K_j``, ``K_j = R_jj^{-1} B_j^T P_j`` and the terminal
value ``P_i(tN) = 0`` (the cost has no terminal term). The system is
integrated in reversed time ``tau = tN - t`` so the fixed-step schemes run
forward.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import RiccatiDivergenceError, ValidationError
from .model import CostParameters, GameDefinition, StrategyProfile, validate

log = logging.getLogger(__name__)

INTEGRATORS = ("rk4", "euler")


@dataclass(frozen=True)
class RiccatiSolverConfig:
    integrator: str = "rk4"
    substeps: int = 10
    stability_check: bool = False

    def __post_init__(self):
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be an integer >= 1, got {self.substeps}")


@dataclass(frozen=True)
class StabilityReport:
    t: np.ndarray
    max_real: np.ndarray
    stable: bool
    transition_norm: float

    @property
    def unstable_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.max_real >= 0)

    @property
    def first_unstable_time(self):
        idx = self.unstable_nodes
        return float(self.t[idx[0]]) if idx.size else None


def closed_loop_matrix(game: GameDefinition, gains) -> np.ndarray:
    """``A - sum_i B_i K_i`` for one set of per-player gains."""
    if len(gains) != game.N:
        raise ValueError(f"expected {game.N} gain matrices, got {len(gains)}")
    F = game.A.copy()
    for i, (B, K) in enumerate(zip(game.B, gains)):
        K = np.asarray(K, dtype=float)
        if K.shape != (B.shape[1], game.n):
            raise ValueError(f"K_{i + 1} must be {B.shape[1]} x {game.n}, got {K.shape}")
        F -= B @ K
    return F


def closed_loop_series(game: GameDefinition, K) -> np.ndarray:
    """Vectorized :func:`closed_loop_matrix` over a stack of grid nodes."""
    F = np.broadcast_to(game.A, (K[0].shape[0], game.n, game.n)).copy()
    for B, Ki in zip(game.B, K):
        F -= np.einsum("ab,kbc->kac", B, Ki)
    return F


def _gain_maps(game, costs):
    maps = []
    for i, B in enumerate(game.B):
        Rii = costs.R[i][i]
        try:
            cond = np.linalg.cond(Rii)
        except np.linalg.LinAlgError:
            cond = np.inf
        if not np.isfinite(cond) or cond > 1e14:
            raise ValidationError([f"R_{i + 1}{i + 1} singular"])
        maps.append(np.linalg.solve(Rii, B.T))
    return maps


def solve_coupled_riccati(
    game: GameDefinition, costs: CostParameters, cfg: RiccatiSolverConfig = RiccatiSolverConfig()
) -> StrategyProfile:
    """Feedback Nash strategy profile on the game's grid.

    Returns the Riccati solutions, gains and closed-loop matrices at all
    ``steps + 1`` nodes. ``P_i`` is re-symmetrized after every substep.

    Raises
    ------
    ValidationError
        If dimensions disagree or some ``R_ii`` is singular.
    RiccatiDivergenceError
        If the solution stops being finite; carries the blow-up time.
    """
    dims = [v for v in validate(game, costs).violations if "shape" in v or "lists" in v]
    if dims:
        raise ValidationError(dims)
    N, n = game.N, game.n
    RinvBt = _gain_maps(game, costs)
    A = game.A
    Q = np.stack(costs.Q)
    S = np.stack([B @ M for B, M in zip(game.B, RinvBt)])
    # cross term of player i is sum_j P_j G[i, j] P_j
    G = np.stack(
        [np.stack([RinvBt[j].T @ costs.R[i][j] @ RinvBt[j] for j in range(N)]) for i in range(N)]
    )

    def rhs(P):
        F = A - (S @ P).sum(axis=0)
        PF = P @ F
        return Q + PF + np.swapaxes(PF, 1, 2) + (P @ G @ P).sum(axis=1)

    h = game.dt / cfg.substeps
    P = np.zeros((N, n, n))
    out = np.empty((game.steps + 1, N, n, n))
    out[game.steps] = P
    t = game.grid
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(game.steps, 0, -1):
            for s in range(cfg.substeps):
                if cfg.integrator == "rk4":
                    k1 = rhs(P)
                    k2 = rhs(P + 0.5 * h * k1)
                    k3 = rhs(P + 0.5 * h * k2)
                    k4 = rhs(P + h * k3)
                    P = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                else:
                    P = P + h * rhs(P)
                P = 0.5 * (P + np.swapaxes(P, 1, 2))
                if not np.all(np.isfinite(P)):
                    raise RiccatiDivergenceError(t[k] - (s + 1) * h)
            out[k - 1] = P

    K = tuple(np.einsum("ab,kbc->kac", RinvBt[i], out[:, i]) for i in range(N))
    F = closed_loop_series(game, K)
    profile = StrategyProfile(t, K, P=out, F=F)
    if cfg.stability_check:
        report = check_stability(profile)
        if not report.stable:
            log.warning(
                "closed loop has eigenvalues with non-negative real part at %d of %d nodes "
                "(first at t=%.4g)",
                report.unstable_nodes.size,
                t.size,
                report.first_unstable_time,
            )
    return profile


def check_stability(profile: StrategyProfile) -> StabilityReport:
    """Frozen-time eigenvalue check of ``F(t_k)`` plus the horizon transition norm.

    ``stable`` is true only if every node has all eigenvalue real parts
    strictly negative. ``transition_norm`` is the spectral norm of the
    closed-loop state transition matrix from ``t0`` to ``tN`` (product of
    ``expm(F(t_k) dt)`` over the intervals), a horizon-level contraction
    measure that stays meaningful when the gains vanish near ``tN``.
    """
    if profile.F is None:
        raise ValueError("stability check needs a profile with closed-loop matrices")
    F = profile.F
    max_real = np.array([np.linalg.eigvals(Fk).real.max() for Fk in F])
    n = F.shape[1]
    Phi = np.eye(n)
    dts = np.diff(profile.t)
    for Fk, dt in zip(F[:-1], dts):
        Phi = scipy.linalg.expm(Fk * dt) @ Phi
    return StabilityReport(
        t=profile.t,
        max_real=max_real,
        stable=bool(np.all(max_real < 0)),
        transition_norm=float(np.linalg.norm(Phi, 2)),
    )
