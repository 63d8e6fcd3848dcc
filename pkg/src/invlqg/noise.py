"""Closed-form maximum-likelihood estimation of the diagonal noise scaling."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNoiseError
from .model import GameDefinition, NoiseModel, TrajectoryBundle
from .simulate import drift

#: residual RMS below this many ulps of the state scale is treated as zero
ROUNDING_STEPS = 64


@dataclass(frozen=True)
class NoiseEstimate:
    noise: NoiseModel
    covariance: np.ndarray
    mismatch: float
    samples: int


def residuals(bundle: TrajectoryBundle, game: GameDefinition, nodes=None) -> np.ndarray:
    """Euler-Maruyama residuals ``x_{k+1} - x_k - (A x_k + sum_i B_i u_{i,k}) dt``.

    Uses the recorded controls. Returns shape ``(D, len(nodes), n)``; by
    default all ``steps`` transitions are used.
    """
    if bundle.steps != game.steps or bundle.n != game.n or bundle.m != game.m:
        raise ValueError("bundle does not match the game's grid or dimensions")
    k = np.arange(game.steps) if nodes is None else np.asarray(nodes, dtype=int)
    if k.size and (k.min() < 0 or k.max() >= game.steps):
        raise IndexError(f"residual nodes must lie in 0..{game.steps - 1}")
    D = bundle.D
    xk = bundle.x[:, k, :].reshape(-1, game.n)
    uk = [ui[:, k, :].reshape(-1, ui.shape[2]) for ui in bundle.u]
    step = drift(game, xk, uk).reshape(D, k.size, game.n) * game.dt
    return bundle.x[:, k + 1, :] - bundle.x[:, k, :] - step


def mle_covariance(res, dt: float) -> np.ndarray:
    """``L L^T`` estimate: sum of residual outer products over ``D K dt``."""
    res = np.asarray(res, dtype=float)
    if res.ndim != 3 or res.shape[0] * res.shape[1] == 0:
        raise ValueError("need a non-empty residual tensor of shape (D, K, n)")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    D, K, n = res.shape
    flat = res.reshape(-1, n)
    S = np.sum(flat[:, :, None] * flat[:, None, :], axis=0)
    S = (S + S.T) / 2
    return S / (D * K * dt)


def recover_L(cov, dt: float, floor: float = 0.0):
    """Diagonal ``L`` from the covariance estimate, plus the off-diagonal ratio.

    Diagonal entries at or below ``floor`` count as degenerate.

    Returns
    -------
    noise : NoiseModel
    mismatch : float
        ``||offdiag(cov)||_F / ||diag(cov)||_F``.
    """
    cov = np.asarray(cov, dtype=float)
    d = np.diag(cov)
    bad = np.flatnonzero(~(d > floor))
    if bad.size:
        raise DegenerateNoiseError(
            "noise variance estimate is not positive for component(s) "
            + ", ".join(str(s + 1) for s in bad)
        )
    off = cov - np.diag(d)
    mismatch = float(np.linalg.norm(off) / np.linalg.norm(d))
    return NoiseModel(np.sqrt(d), dt), mismatch


def log_likelihood(res, cov, dt: float) -> float:
    """Gaussian log-likelihood of all residuals for increment covariance ``cov * dt``."""
    res = np.asarray(res, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    try:
        c = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance must be positive definite") from exc
    flat = res.reshape(-1, n)
    count = flat.shape[0]
    logdet = 2.0 * np.log(np.diag(c)).sum()
    z = np.linalg.solve(c, flat.T)
    quad = np.sum(z * z) / dt
    return float(-0.5 * (count * (n * np.log(2 * np.pi * dt) + logdet) + quad))


def estimate_noise(bundle: TrajectoryBundle, game: GameDefinition, nodes=None) -> NoiseEstimate:
    res = residuals(bundle, game, nodes)
    cov = mle_covariance(res, game.dt)
    # residuals no larger than the rounding of one forward step carry no noise
    scale = max(np.abs(bundle.x).max(), np.finfo(float).tiny)
    floor = (ROUNDING_STEPS * np.finfo(float).eps * scale) ** 2 / game.dt
    noise, mismatch = recover_L(cov, game.dt, floor)
    return NoiseEstimate(noise, cov, mismatch, res.shape[0] * res.shape[1])
