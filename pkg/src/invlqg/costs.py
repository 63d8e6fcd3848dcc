"""Recovery of each player's cost weights from identified Nash gains.

Pre- and post-multiplying player ``i``'s Riccati equation by ``B_i^T`` and
``B_i``, substituting ``B_i^T P_i = R_ii K_i`` and integrating from ``t`` to
``tN`` gives a matrix identity that is linear in ``Q_i`` and ``R_ij``.
Column-major vectorization turns it into ``M_i(t) theta_i = 0`` with

    M_Q(t)   = (tN - t) (B_i^T kron B_i^T)
    M_Rii(t) = int_t^tN [W kron I + I kron W + V_ii kron V_ii] ds - V_ii(t) kron I
    M_Rij(t) = int_t^tN V_ij kron V_ij ds                          (j != i)

where ``W = B_i^T F^T K_i^T`` and ``V_ij = B_i^T K_j^T``. Stacking the rows
for a set of nodes gives a homogeneous system whose null vector is
``theta_i`` up to scale.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousIdentificationError, IndefiniteEstimateError
from .model import CostParameters, GameDefinition, StrategyProfile, devectorize_costs
from .riccati import closed_loop_series

#: singular values below this fraction of the largest count as zero
DEFAULT_RANK_RTOL = 1e-5
#: negative eigenvalues of R_ij (j != i) above -tol * max|theta| are clipped to zero
DEFAULT_PSD_TOL = 1e-3


class InconsistencyWarning(UserWarning):
    """The stacked system has full column rank; no exact null vector exists."""


@dataclass(frozen=True)
class CostInferenceSystem:
    player: int
    nodes: np.ndarray
    M: np.ndarray
    singular_values: np.ndarray
    Vt: np.ndarray
    rank: int
    rank_tol: float

    @property
    def p(self) -> int:
        return self.M.shape[1]

    @property
    def nullity(self) -> int:
        return self.p - self.rank


@dataclass(frozen=True)
class NullSpaceDiagnostics:
    singular_values: np.ndarray
    rank: int
    nullity: int
    gap_ratio: float
    residual: float
    rank_ok: bool


@dataclass
class RecoveredCosts:
    Q: np.ndarray
    R: list
    violations: list = field(default_factory=list)
    clipped: list = field(default_factory=list)


def select_nodes(steps: int, count: int) -> np.ndarray:
    """``count`` equally spaced grid indices, starting at 0 and never ``steps``."""
    if not 1 <= count <= steps:
        raise ValueError(f"node count must be between 1 and {steps}, got {count}")
    return (np.arange(count) * steps) // count


def _backward_trapezoid(g, dt):
    """``out[k] = int_{t_k}^{tN} g`` by the composite trapezoid rule."""
    out = np.zeros_like(g)
    half = 0.5 * dt
    for k in range(g.shape[0] - 2, -1, -1):
        out[k] = out[k + 1] + half * (g[k] + g[k + 1])
    return out


def _batched_kron(X, Y):
    k, a, b = X.shape
    _, c, d = Y.shape
    return np.einsum("kab,kcd->kacbd", X, Y).reshape(k, a * c, b * d)


def m_matrix_series(game: GameDefinition, profile: StrategyProfile, player: int) -> np.ndarray:
    """``M_i(t_k)`` at every grid node, shape ``(steps + 1, m_i**2, p)``."""
    if profile.steps != game.steps or profile.N != game.N:
        raise ValueError("strategy profile does not live on the game's grid")
    i = player
    F = profile.F if profile.F is not None else closed_loop_series(game, profile.K)
    Bt = game.B[i].T
    mi = game.m[i]
    nodes = game.steps + 1
    eye = np.broadcast_to(np.eye(mi), (nodes, mi, mi))

    V = [np.einsum("ab,kcb->kac", Bt, Kj) for Kj in profile.K]
    W = np.einsum("ab,kcb,kdc->kad", Bt, F, profile.K[i])

    blocks = [(game.tN - game.grid)[:, None, None] * np.kron(Bt, Bt)[None]]
    for j in range(game.N):
        if j == i:
            g = _batched_kron(W, eye) + _batched_kron(eye, W) + _batched_kron(V[i], V[i])
            blocks.append(_backward_trapezoid(g, game.dt) - _batched_kron(V[i], eye))
        else:
            blocks.append(_backward_trapezoid(_batched_kron(V[j], V[j]), game.dt))
    return np.concatenate(blocks, axis=2)


def build_M_blocks(game: GameDefinition, profile: StrategyProfile, player: int, node: int):
    """``M_i(t_k)`` for a single grid node."""
    if not 0 <= node <= game.steps:
        raise IndexError(f"node {node} is outside the grid 0..{game.steps}")
    return m_matrix_series(game, profile, player)[node]


def stack_system(
    game: GameDefinition,
    profile: StrategyProfile,
    player: int,
    nodes,
    rank_rtol: float = DEFAULT_RANK_RTOL,
    series=None,
) -> CostInferenceSystem:
    """Stack ``M_i(t_k)`` over ``nodes`` (in the given order) and factor it.

    ``series`` may pass a precomputed :func:`m_matrix_series` result.
    """
    nodes = np.asarray(nodes, dtype=int)
    if nodes.size == 0:
        raise ValueError("at least one node is required")
    if nodes.min() < 0 or nodes.max() > game.steps:
        raise IndexError(f"nodes must lie in 0..{game.steps}")
    if series is None:
        series = m_matrix_series(game, profile, player)
    M = series[nodes].reshape(-1, series.shape[2])
    p = M.shape[1]
    _, s, Vt = np.linalg.svd(M, full_matrices=M.shape[0] < p)
    sv = np.zeros(p)
    sv[: s.size] = s
    tol = rank_rtol * sv[0]
    rank = int(np.count_nonzero(sv > tol)) if sv[0] > 0 else 0
    return CostInferenceSystem(player, nodes, M, sv, Vt, rank, tol)


def _normalize(theta, n, m, player):
    Q, R = devectorize_costs(theta, n, m)
    floor = 1e-12 * np.abs(theta).max()
    scale = None
    if abs(Q[0, 0]) > floor:
        scale = Q[0, 0]
    else:
        diag = np.diag(R[player])
        nz = np.flatnonzero(np.abs(diag) > floor)
        if nz.size:
            scale = diag[nz[0]]
    if scale is None:
        return theta
    return theta / scale


def solve_null_space(system: CostInferenceSystem, game: GameDefinition):
    """Null vector of the stacked system, normalized so ``Q_i[0, 0] = 1``.

    When ``Q_i[0, 0]`` vanishes the first nonzero diagonal entry of ``R_ii``
    is set to 1 instead.

    Raises
    ------
    AmbiguousIdentificationError
        If the numerical null space has dimension greater than one.
    """
    sv = system.singular_values
    p = system.p
    if system.nullity > 1:
        raise AmbiguousIdentificationError(system.player, system.nullity)
    if system.nullity == 0:
        warnings.warn(
            f"player {system.player + 1}: stacked system has full rank {p} "
            f"(smallest singular value {sv[-1]:.3g}); returning the least-squares null vector",
            InconsistencyWarning,
            stacklevel=2,
        )
    v = system.Vt[p - 1]
    theta = _normalize(v, game.n, game.m, system.player)
    gap = sv[p - 2] / sv[p - 1] if p >= 2 and sv[p - 1] > 0 else np.inf
    M_norm = sv[0]
    residual = float(np.linalg.norm(system.M @ v) / M_norm) if M_norm > 0 else 0.0
    diag = NullSpaceDiagnostics(
        singular_values=sv,
        rank=system.rank,
        nullity=system.nullity,
        gap_ratio=float(gap),
        residual=residual,
        rank_ok=system.rank == p - 1,
    )
    return theta, diag


def recover_costs(theta_hat, game: GameDefinition, player: int, psd_tol: float = DEFAULT_PSD_TOL):
    """Matrix form of a recovered parameter vector.

    Blocks are symmetrized; tiny negative eigenvalues of the ``R_ij``
    (``j != i``) blocks, no lower than ``-psd_tol * max|theta|``, are clipped
    to zero. Larger violations are listed in ``violations`` untouched.

    Raises
    ------
    IndefiniteEstimateError
        If ``Q_i`` or ``R_ii`` has a negative eigenvalue beyond tolerance.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    Q, R = devectorize_costs(theta_hat, game.n, game.m)
    tol = psd_tol * np.abs(theta_hat).max()
    tag = player + 1
    out = RecoveredCosts(Q, R)
    for name, M in [(f"Q_{tag}", Q), (f"R_{tag}{tag}", R[player])]:
        lo = np.linalg.eigvalsh(M).min()
        if lo < -tol:
            raise IndefiniteEstimateError(
                f"{name} estimate is indefinite (eigenvalue {lo:.3g}); "
                "the scale sign or the rank condition failed"
            )
        if lo <= 0:
            out.violations.append(f"{name} estimate is only semidefinite (eigenvalue {lo:.3g})")
    for j, Rij in enumerate(R):
        if j == player:
            continue
        w, U = np.linalg.eigh(Rij)
        if w.min() < -tol:
            out.violations.append(
                f"R_{tag}{j + 1} estimate not positive semidefinite (eigenvalue {w.min():.3g})"
            )
        elif w.min() < 0:
            w = np.where(w < 0, 0.0, w)
            R[j] = (U * w) @ U.T
            R[j] = (R[j] + R[j].T) / 2
            out.clipped.append(f"R_{tag}{j + 1}")
    return out


@dataclass(frozen=True)
class CostIdentification:
    costs: CostParameters
    thetas: list
    systems: list
    diagnostics: list
    recovered: list


def identify_costs(
    game: GameDefinition,
    profile: StrategyProfile,
    nodes,
    rank_rtol: float = DEFAULT_RANK_RTOL,
    psd_tol: float = DEFAULT_PSD_TOL,
) -> CostIdentification:
    """Run build, stack, null-space solve and recovery for every player."""
    thetas, systems, diags, recs = [], [], [], []
    for i in range(game.N):
        system = stack_system(game, profile, i, nodes, rank_rtol)
        theta, diag = solve_null_space(system, game)
        thetas.append(theta)
        systems.append(system)
        diags.append(diag)
        recs.append(recover_costs(theta, game, i, psd_tol))
    costs = CostParameters(tuple(r.Q for r in recs), tuple(tuple(r.R) for r in recs))
    return CostIdentification(costs, thetas, systems, diags, recs)
