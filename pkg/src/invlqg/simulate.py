"""Euler-Maruyama simulation of the closed-loop game and trajectory moments."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SimulationExplosionError
from .model import GameDefinition, NoiseModel, StrategyProfile, TrajectoryBundle

RNGS = {"philox": np.random.Philox, "pcg64": np.random.PCG64}


@dataclass(frozen=True)
class SimulationConfig:
    """How many demonstrations to draw and from which random streams.

    Each demonstration gets its own stream spawned from ``seed``, so demo
    ``d`` is identical whatever ``D`` is. ``x0`` optionally overrides the
    game's initial state per demonstration (shape ``(D, n)``).
    ``deterministic`` drops the noise term entirely; it exists for tests.
    """

    D: int = 20
    seed: int = 0
    rng: str = "philox"
    deterministic: bool = False
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.D) != self.D or self.D < 1:
            raise ValueError(f"D must be a positive integer, got {self.D}")
        if self.rng not in RNGS:
            raise ValueError(f"rng must be one of {sorted(RNGS)}, got {self.rng!r}")
        if self.x0 is not None:
            x0 = np.array(self.x0, dtype=float)
            if x0.ndim != 2 or x0.shape[0] != self.D:
                raise ValueError(f"x0 override must have shape (D, n), got {x0.shape}")
            x0.setflags(write=False)
            object.__setattr__(self, "x0", x0)


@dataclass(frozen=True)
class MomentSeries:
    t: np.ndarray
    x_mean: np.ndarray
    x_var: Optional[np.ndarray]
    u_mean: tuple
    u_var: Optional[tuple]


def wiener_increments(seed: int, D: int, steps: int, n: int, dt: float, rng: str = "philox"):
    """Standard Wiener increments, shape ``(D, steps, n)``, variance ``dt``."""
    children = np.random.SeedSequence(seed).spawn(D)
    out = np.empty((D, steps, n))
    for d, child in enumerate(children):
        gen = np.random.Generator(RNGS[rng](child))
        out[d] = gen.standard_normal((steps, n))
    return out * np.sqrt(dt)


def drift(game: GameDefinition, x, u):
    """``A x + sum_i B_i u_i`` for row-stacked states and controls."""
    out = x @ game.A.T
    for B, ui in zip(game.B, u):
        out = out + ui @ B.T
    return out


def simulate_bundle(
    game: GameDefinition,
    profile: StrategyProfile,
    noise: NoiseModel,
    cfg: SimulationConfig,
    increments: Optional[np.ndarray] = None,
) -> TrajectoryBundle:
    """Closed-loop demonstrations under ``u_i = -K_i(t_k) x_k``.

    ``increments`` may supply the Wiener draws directly (shape
    ``(D, steps, n)``); by default they come from :func:`wiener_increments`.
    Controls are recorded at every node, including ``tN``.
    """
    if profile.steps != game.steps or profile.N != game.N:
        raise ValueError("strategy profile does not live on the game's grid")
    if not np.isclose(noise.dt, game.dt, rtol=1e-12, atol=0.0):
        raise ValueError(f"noise dt={noise.dt} differs from grid step {game.dt}")
    D, n, steps, dt = cfg.D, game.n, game.steps, game.dt
    if cfg.deterministic:
        dW = np.zeros((D, steps, n))
    elif increments is not None:
        dW = np.asarray(increments, dtype=float)
        if dW.shape != (D, steps, n):
            raise ValueError(f"increments must have shape {(D, steps, n)}, got {dW.shape}")
    else:
        dW = wiener_increments(cfg.seed, D, steps, n, dt, cfg.rng)
    kicks = dW * noise.l  # L dW with diagonal L

    x = np.empty((D, steps + 1, n))
    u = [np.empty((D, steps + 1, m)) for m in game.m]
    x[:, 0] = game.x0 if cfg.x0 is None else cfg.x0
    t = game.grid
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps + 1):
            xk = x[:, k]
            uk = [-(xk @ Ki[k].T) for Ki in profile.K]
            for i in range(game.N):
                u[i][:, k] = uk[i]
            if k == steps:
                break
            x[:, k + 1] = xk + drift(game, xk, uk) * dt + kicks[:, k]
            bad = ~np.all(np.isfinite(x[:, k + 1]), axis=1)
            if bad.any():
                raise SimulationExplosionError(int(np.argmax(bad)), k + 1, float(t[k + 1]))
    return TrajectoryBundle(t, x, tuple(u), seed=None if cfg.deterministic else cfg.seed)


def empirical_moments(bundle: TrajectoryBundle, variance: bool = True) -> MomentSeries:
    """Per-node sample mean and unbiased sample variance across demonstrations."""
    if variance and bundle.D < 2:
        raise ValueError("sample variance needs at least two demonstrations")
    x_var = bundle.x.var(axis=0, ddof=1) if variance else None
    u_var = tuple(ui.var(axis=0, ddof=1) for ui in bundle.u) if variance else None
    return MomentSeries(
        t=bundle.t,
        x_mean=bundle.x.mean(axis=0),
        x_var=x_var,
        u_mean=tuple(ui.mean(axis=0) for ui in bundle.u),
        u_var=u_var,
    )
