"""Core domain types for finite-horizon LQG differential games.

All containers are frozen dataclasses holding read-only numpy arrays, so a
single instance can be shared between threads without copying.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

#: relative eigenvalue margin used by the definiteness checks
DEFINITENESS_RTOL = 1e-9


def _frozen(a, ndim=None, name="array"):
    arr = np.array(a, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GameDefinition:
    """System matrices, player structure, horizon and time grid.

    Parameters
    ----------
    A : (n, n) array_like
        Drift matrix.
    B : sequence of (n, m_i) array_like
        One input matrix per player.
    t0, tN : float
        Horizon endpoints, ``tN > t0``.
    steps : int
        Number of uniform grid intervals.
    x0 : (n,) array_like
        Initial state shared by all demonstrations.
    """

    A: np.ndarray
    B: tuple
    t0: float
    tN: float
    steps: int
    x0: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A, 2, "A")
        if A.shape[0] < 1 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square and non-empty, got shape {A.shape}")
        n = A.shape[0]
        if len(self.B) < 1:
            raise ValueError("at least one player is required")
        B = tuple(_frozen(b, 2, f"B_{i + 1}") for i, b in enumerate(self.B))
        for i, b in enumerate(B):
            if b.shape[0] != n or b.shape[1] < 1:
                raise ValueError(f"B_{i + 1} must be {n} x m with m >= 1, got {b.shape}")
        x0 = _frozen(self.x0, 1, "x0")
        if x0.shape != (n,):
            raise ValueError(f"x0 must have length {n}, got {x0.shape[0]}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if not (np.isfinite(self.t0) and np.isfinite(self.tN)) or self.tN <= self.t0:
            raise ValueError(f"need finite t0 < tN, got t0={self.t0}, tN={self.tN}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "tN", float(self.tN))
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return len(self.B)

    @property
    def m(self) -> tuple:
        return tuple(b.shape[1] for b in self.B)

    @property
    def dt(self) -> float:
        return (self.tN - self.t0) / self.steps

    @property
    def grid(self) -> np.ndarray:
        t = np.linspace(self.t0, self.tN, self.steps + 1)
        t.setflags(write=False)
        return t

    @property
    def p(self) -> int:
        """Length of each player's parameter vector."""
        return parameter_count(self.n, self.m)


@dataclass(frozen=True)
class CostParameters:
    """Quadratic weights ``Q[i]`` and ``R[i][j]`` for every player pair."""

    Q: tuple
    R: tuple

    def __post_init__(self):
        if len(self.Q) != len(self.R):
            raise ValueError("Q and R must list the same number of players")
        Q = tuple(_frozen(q, 2, f"Q_{i + 1}") for i, q in enumerate(self.Q))
        R = tuple(
            tuple(_frozen(r, 2, f"R_{i + 1}{j + 1}") for j, r in enumerate(row))
            for i, row in enumerate(self.R)
        )
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @property
    def N(self) -> int:
        return len(self.Q)

    def theta(self, player: int) -> np.ndarray:
        return vectorize_costs(self, player)

    def scaled(self, player: int, alpha: float) -> "CostParameters":
        """Copy with player ``player``'s whole cost tuple multiplied by ``alpha``."""
        Q = list(self.Q)
        R = [list(row) for row in self.R]
        Q[player] = alpha * Q[player]
        R[player] = [alpha * r for r in R[player]]
        return CostParameters(tuple(Q), tuple(tuple(row) for row in R))

    @classmethod
    def from_thetas(cls, thetas: Sequence[np.ndarray], n: int, m: Sequence[int]):
        Q, R = [], []
        for th in thetas:
            q, r = devectorize_costs(th, n, m)
            Q.append(q)
            R.append(tuple(r))
        return cls(tuple(Q), tuple(R))


@dataclass(frozen=True)
class NoiseModel:
    """Diagonal noise scaling ``L = diag(l)`` and Euler-Maruyama step ``dt``.

    Positivity of ``l`` is checked by :func:`validate`, not here, so that
    degenerate models can still be represented and reported.
    """

    l: np.ndarray
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "l", _frozen(self.l, 1, "l"))
        object.__setattr__(self, "dt", float(self.dt))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def L(self) -> np.ndarray:
        return np.diag(self.l)

    @property
    def covariance_rate(self) -> np.ndarray:
        """``L L^T``; the increment covariance is this times ``dt``."""
        return np.diag(self.l**2)


@dataclass(frozen=True)
class StrategyProfile:
    """Feedback gains on the time grid.

    ``K[i]`` has shape ``(steps + 1, m_i, n)``. ``P`` (shape
    ``(steps + 1, N, n, n)``) and ``F`` (shape ``(steps + 1, n, n)``) are
    present when the profile comes from the forward solver.
    """

    t: np.ndarray
    K: tuple
    P: Optional[np.ndarray] = None
    F: Optional[np.ndarray] = None

    def __post_init__(self):
        t = _frozen(self.t, 1, "t")
        K = tuple(_frozen(k, 3, f"K_{i + 1}") for i, k in enumerate(self.K))
        for i, k in enumerate(K):
            if k.shape[0] != t.shape[0]:
                raise ValueError(f"K_{i + 1} has {k.shape[0]} nodes, grid has {t.shape[0]}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "K", K)
        if self.P is not None:
            object.__setattr__(self, "P", _frozen(self.P, 4, "P"))
        if self.F is not None:
            object.__setattr__(self, "F", _frozen(self.F, 3, "F"))

    @property
    def N(self) -> int:
        return len(self.K)

    @property
    def steps(self) -> int:
        return self.t.shape[0] - 1

    def gains_at(self, k: int) -> list:
        return [Ki[k] for Ki in self.K]


@dataclass(frozen=True)
class TrajectoryBundle:
    """``D`` demonstrations on a shared grid.

    ``x`` has shape ``(D, steps + 1, n)`` and ``u[i]`` has shape
    ``(D, steps + 1, m_i)``.
    """

    t: np.ndarray
    x: np.ndarray
    u: tuple
    seed: Optional[int] = None

    def __post_init__(self):
        t = _frozen(self.t, 1, "t")
        x = _frozen(self.x, 3, "x")
        u = tuple(_frozen(ui, 3, f"u_{i + 1}") for i, ui in enumerate(self.u))
        if x.shape[0] < 1:
            raise ValueError("a bundle needs at least one demonstration")
        if x.shape[1] != t.shape[0]:
            raise ValueError("state trajectories do not match the grid length")
        for i, ui in enumerate(u):
            if ui.shape[:2] != x.shape[:2]:
                raise ValueError(f"controls of player {i + 1} do not match the state array")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)

    @property
    def D(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[2]

    @property
    def m(self) -> tuple:
        return tuple(ui.shape[2] for ui in self.u)

    @property
    def steps(self) -> int:
        return self.t.shape[0] - 1

    def subset(self, demos: Sequence[int]) -> "TrajectoryBundle":
        idx = list(demos)
        return TrajectoryBundle(self.t, self.x[idx], tuple(ui[idx] for ui in self.u), self.seed)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def parameter_count(n: int, m: Sequence[int]) -> int:
    return n * n + sum(mj * mj for mj in m)


def _sym_defect(M):
    scale = np.linalg.norm(M, 2)
    return np.abs(M - M.T).max() > DEFINITENESS_RTOL * max(scale, 1e-300)


def is_positive_definite(M) -> bool:
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)) or _sym_defect(M):
        return False
    scale = np.linalg.norm(M, 2)
    return bool(np.linalg.eigvalsh((M + M.T) / 2).min() > DEFINITENESS_RTOL * scale)


def is_positive_semidefinite(M) -> bool:
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)) or _sym_defect(M):
        return False
    scale = np.linalg.norm(M, 2)
    return bool(np.linalg.eigvalsh((M + M.T) / 2).min() >= -DEFINITENESS_RTOL * scale)


def validate(game: GameDefinition, costs: CostParameters, noise: Optional[NoiseModel] = None):
    """Collect every violated invariant of a parameter set.

    Nothing is raised; an empty report means the dimensions agree, all
    weights are symmetric, ``Q_i`` and ``R_ii`` are positive definite,
    ``R_ij`` is positive semidefinite and every ``l_s`` is positive.
    """
    out = []
    n, m = game.n, game.m
    if costs.N != game.N:
        out.append(f"cost parameters list {costs.N} players, game has {game.N}")
        return ValidationReport(out)
    for i in range(game.N):
        tag = i + 1
        Q = costs.Q[i]
        if Q.shape != (n, n):
            out.append(f"Q_{tag} has shape {Q.shape}, expected {(n, n)}")
        elif _sym_defect(Q):
            out.append(f"Q_{tag} not symmetric")
        elif not is_positive_definite(Q):
            out.append(f"Q_{tag} not positive definite")
        if len(costs.R[i]) != game.N:
            out.append(f"player {tag} lists {len(costs.R[i])} R blocks, expected {game.N}")
            continue
        for j, Rij in enumerate(costs.R[i]):
            name = f"R_{tag}{j + 1}"
            if Rij.shape != (m[j], m[j]):
                out.append(f"{name} has shape {Rij.shape}, expected {(m[j], m[j])}")
            elif _sym_defect(Rij):
                out.append(f"{name} not symmetric")
            elif i == j and not is_positive_definite(Rij):
                out.append(f"{name} not positive definite")
            elif i != j and not is_positive_semidefinite(Rij):
                out.append(f"{name} not positive semidefinite")
    if noise is not None:
        if noise.l.shape != (n,):
            out.append(f"L has {noise.l.shape[0]} diagonal entries, expected {n}")
        else:
            for s, ls in enumerate(noise.l):
                if not (np.isfinite(ls) and ls > 0):
                    out.append(f"l_{s + 1} not strictly positive")
        if not np.isclose(noise.dt, game.dt, rtol=1e-12, atol=0.0):
            out.append(f"noise dt={noise.dt} differs from grid step {game.dt}")
    return ValidationReport(out)


def vectorize_costs(costs: CostParameters, player: int) -> np.ndarray:
    """Column-major stacking ``[vec Q_i; vec R_i1; ...; vec R_iN]``."""
    if not 0 <= player < costs.N:
        raise IndexError(f"player index {player} out of range for {costs.N} players")
    parts = [costs.Q[player].ravel(order="F")]
    parts += [r.ravel(order="F") for r in costs.R[player]]
    return np.concatenate(parts)


def devectorize_costs(theta, n: int, m: Sequence[int]):
    """Inverse of :func:`vectorize_costs`; each block is symmetrized.

    Returns
    -------
    Q : (n, n) ndarray
    R : list of (m_j, m_j) ndarray
    """
    theta = np.asarray(theta, dtype=float)
    p = parameter_count(n, m)
    if theta.shape != (p,):
        raise ValueError(f"theta must have length {p}, got shape {theta.shape}")

    def block(start, k):
        X = theta[start : start + k * k].reshape((k, k), order="F")
        return (X + X.T) / 2

    Q = block(0, n)
    R, pos = [], n * n
    for mj in m:
        R.append(block(pos, mj))
        pos += mj * mj
    return Q, R
