"""End-to-end inversion: gains, then cost weights per player, then noise scaling."""

import time
from dataclasses import dataclass

import numpy as np

from .costs import DEFAULT_PSD_TOL, DEFAULT_RANK_RTOL, CostIdentification, identify_costs, select_nodes
from .model import GameDefinition, StrategyProfile, TrajectoryBundle
from .noise import NoiseEstimate, estimate_noise
from .strategy import DEFAULT_COND_THRESHOLD, ExcitationReport, estimate_gains


@dataclass(frozen=True)
class InversionResult:
    nodes: np.ndarray
    gains: StrategyProfile
    excitation: ExcitationReport
    cost_id: CostIdentification
    noise: NoiseEstimate
    t_C: float

    @property
    def costs(self):
        return self.cost_id.costs


def invert(
    bundle: TrajectoryBundle,
    game: GameDefinition,
    n_nodes: int = None,
    cond_threshold: float = DEFAULT_COND_THRESHOLD,
    rank_rtol: float = DEFAULT_RANK_RTOL,
    psd_tol: float = DEFAULT_PSD_TOL,
) -> InversionResult:
    """Recover cost weights (up to scale) and ``L`` from demonstrations.

    Only ``game.A``, ``game.B`` and the grid are used. ``n_nodes`` evaluation
    nodes (default: all ``steps``) serve both the stacked cost system and the
    noise residuals. ``t_C`` is the wall-clock time of the whole call.
    """
    if bundle.steps != game.steps or bundle.n != game.n or bundle.m != game.m:
        raise ValueError("bundle does not match the game's grid or dimensions")
    if not np.allclose(bundle.t, game.grid, rtol=0, atol=1e-9 * (game.tN - game.t0)):
        raise ValueError("bundle time stamps differ from the game's grid")
    nodes = select_nodes(game.steps, game.steps if n_nodes is None else n_nodes)
    start = time.perf_counter()
    gains, excitation = estimate_gains(bundle, cond_threshold)
    cost_id = identify_costs(game, gains, nodes, rank_rtol, psd_tol)
    noise = estimate_noise(bundle, game, nodes)
    t_C = time.perf_counter() - start
    return InversionResult(nodes, gains, excitation, cost_id, noise, t_C)
