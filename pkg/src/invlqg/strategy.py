"""Per-node least-squares identification of feedback gains from demonstrations."""

import warnings
from dataclasses import dataclass

import numpy as np

from .model import StrategyProfile, TrajectoryBundle

DEFAULT_COND_THRESHOLD = 1e8


class ExcitationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExcitationReport:
    """Condition number of ``X(t_k) X(t_k)^T`` at each node.

    ``flagged`` marks nodes above the threshold (or rank deficient);
    ``backfilled`` marks flagged leading nodes whose estimate was copied from
    the first well-excited node.
    """

    t: np.ndarray
    cond: np.ndarray
    flagged: np.ndarray
    backfilled: np.ndarray
    threshold: float

    @property
    def n_flagged(self) -> int:
        return int(self.flagged.sum())


def assemble_snapshot(bundle: TrajectoryBundle, k: int):
    """State matrix ``X`` (n x D) and control matrices ``U_i`` (m_i x D) at node ``k``."""
    if not 0 <= k <= bundle.steps:
        raise IndexError(f"node {k} is outside the grid 0..{bundle.steps}")
    X = bundle.x[:, k, :].T.copy()
    U = [ui[:, k, :].T.copy() for ui in bundle.u]
    return X, U


def estimate_gains(bundle: TrajectoryBundle, cond_threshold: float = DEFAULT_COND_THRESHOLD):
    """Recover ``K_i(t_k)`` from ``U_i = -K_i X`` at every node.

    Uses an SVD-based least-squares solve of ``X^T K_i^T = -U_i^T`` instead
    of forming ``(X X^T)^{-1}``. Rank-deficient nodes get the minimum-norm
    solution and an :class:`ExcitationWarning`; flagged nodes that precede
    the first well-excited node (typically ``t0`` when all demonstrations
    share ``x0``) take that node's estimate instead.

    Returns
    -------
    profile : StrategyProfile
        Estimated gains (no ``P`` or ``F``).
    report : ExcitationReport
    """
    if not cond_threshold > 0:
        raise ValueError(f"cond_threshold must be positive, got {cond_threshold}")
    D, nodes, n = bundle.x.shape
    m = bundle.m
    split = np.cumsum(m)[:-1]
    gains = np.empty((nodes, sum(m), n))
    cond = np.empty(nodes)
    for k in range(nodes):
        Xt = bundle.x[:, k, :]
        Ut = np.concatenate([ui[:, k, :] for ui in bundle.u], axis=1)
        sol, _, rank, sv = np.linalg.lstsq(Xt, -Ut, rcond=None)
        gains[k] = sol.T
        if rank < n or sv.size < n or sv[n - 1] == 0:
            cond[k] = np.inf
        else:
            cond[k] = (sv[0] / sv[n - 1]) ** 2

    flagged = ~(cond <= cond_threshold)
    backfilled = np.zeros(nodes, dtype=bool)
    good = np.flatnonzero(~flagged)
    if good.size == 0:
        warnings.warn(
            "no node satisfies the excitation threshold; returning minimum-norm gains",
            ExcitationWarning,
            stacklevel=2,
        )
    else:
        first = good[0]
        gains[:first] = gains[first]
        backfilled[:first] = True
        late = np.flatnonzero(flagged[first:]) + first
        if late.size:
            warnings.warn(
                f"{late.size} node(s) after t={bundle.t[first]:.4g} are poorly excited; "
                "their gains are minimum-norm estimates",
                ExcitationWarning,
                stacklevel=2,
            )

    K = tuple(np.split(gains, split, axis=1))
    report = ExcitationReport(bundle.t, cond, flagged, backfilled, float(cond_threshold))
    return StrategyProfile(bundle.t, K), report
