"""Read-only measurement helpers: disparity, optimal correction length,
cosine traces, and the uncertainty-contraction ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DisparityRecord",
    "gradient_disparity",
    "optimal_gamma",
    "cosine_similarity",
    "rho_estimate",
]


@dataclass(frozen=True)
class DisparityRecord:
    """One per-iteration measurement; ``cosine`` is None when undefined."""

    round_index: int
    iteration: int
    client: int
    disparity: float
    cosine: float | None
    gamma_used: float
    gamma_star: float | None


def gradient_disparity(g_hat, grad_true) -> float:
    """Squared distance between a realized update direction and the true gradient."""
    g_hat = np.asarray(g_hat, dtype=float)
    grad_true = np.asarray(grad_true, dtype=float)
    if g_hat.shape != grad_true.shape:
        raise ValueError(f"dimension mismatch: {g_hat.shape} vs {grad_true.shape}")
    diff = g_hat - grad_true
    return float(diff @ diff)


def optimal_gamma(grad_true, g, correction) -> float:
    """Closed-form minimizer of the disparity as a function of the correction length.

    ``(grad_true - g) . correction / ||correction||^2``; deliberately not
    clamped, the diagnostic value may leave [0, 1].
    """
    grad_true = np.asarray(grad_true, dtype=float)
    g = np.asarray(g, dtype=float)
    correction = np.asarray(correction, dtype=float)
    denom = float(correction @ correction)
    if denom == 0.0:
        raise ValueError("correction vector is zero; optimal length is undefined")
    return float((grad_true - g) @ correction / denom)


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def rho_estimate(uncertainty_sequence) -> float:
    """Max consecutive ratio of uncertainty norms along a growing trajectory.

    An empirical proxy for the worst-case contraction ratio: the true quantity
    takes a supremum over the whole domain, this one only over the probe points
    the sequence was recorded at.
    """
    seq = [float(s) for s in uncertainty_sequence]
    if len(seq) < 2:
        raise ValueError("need at least two uncertainty values")
    if any(s <= 0 for s in seq):
        raise ValueError("uncertainty norms must be positive")
    return max(b / a for a, b in zip(seq, seq[1:]))
