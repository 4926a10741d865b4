"""Squared exponential kernel, its input-gradients, and the shared random
Fourier feature basis.

All clients and the server share a single :class:`RFFBasis`, sampled once from
a seed before the federation loop starts.  Features use the amplitude
``sqrt(2/M)`` so that ``phi(x)^T phi(x')`` is an unbiased Monte-Carlo estimate
of ``k(x, x')``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "KernelParams",
    "RFFBasis",
    "kernel_eval",
    "kernel_matrix",
    "kernel_grad_first",
    "kernel_grad_first_batch",
    "cross_hessian_diag",
    "sample_rff_basis",
    "rff_features",
    "rff_features_matrix",
    "rff_feature_jacobian",
]


@dataclass(frozen=True)
class KernelParams:
    """Squared exponential kernel ``k(x, x') = exp(-||x - x'||^2 / (2 l^2))``.

    The output variance is fixed at one (``k(x, x) = 1``).  The curvature
    bound used by the theoretical correction-length schedule is
    ``kappa = 1 / lengthscale**2``; the kernel-gradient bound exists but is
    never consumed by any computation.
    """

    lengthscale: float = 1.0

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")

    @property
    def kappa(self) -> float:
        """Spectral norm of the cross-Hessian of k at coincident inputs."""
        return 1.0 / self.lengthscale**2


@dataclass(frozen=True)
class RFFBasis:
    """Random Fourier feature parameters shared by every client and the server.

    ``frequencies`` is an (M, d) matrix with rows drawn from N(0, I/l^2) and
    ``phases`` is an M-vector uniform on [0, 2*pi).  Frequencies and phases come
    from independent RNG streams spawned from ``seed``, so enlarging M extends a
    smaller basis without reshuffling its prefix.
    """

    frequencies: np.ndarray
    phases: np.ndarray
    seed: int

    @property
    def feature_count(self) -> int:
        return self.frequencies.shape[0]

    @property
    def dimension(self) -> int:
        return self.frequencies.shape[1]


def _check_dims(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")


def kernel_eval(x, y, params: KernelParams) -> float:
    """Evaluate ``k(x, y)``; always in (0, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dims(x, y)
    sq = float(np.dot(x - y, x - y))
    return float(np.exp(-sq / (2.0 * params.lengthscale**2)))


def kernel_matrix(X, Y, params: KernelParams) -> np.ndarray:
    """Gram matrix ``[k(x_i, y_j)]`` for row-stacked inputs."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    sq = cdist(X, Y, "sqeuclidean")
    return np.exp(-sq / (2.0 * params.lengthscale**2))


def kernel_grad_first(x, y, params: KernelParams) -> np.ndarray:
    """Gradient of ``k`` with respect to its first argument: ``-(x-y)/l^2 * k(x,y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dims(x, y)
    return -(x - y) / params.lengthscale**2 * kernel_eval(x, y, params)


def kernel_grad_first_batch(x, Y, params: KernelParams) -> np.ndarray:
    """(n, d) matrix whose rows are ``kernel_grad_first(x, y_j)`` over rows of Y."""
    x = np.asarray(x, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape} vs rows of {Y.shape}")
    diff = x[None, :] - Y
    k = np.exp(-np.sum(diff * diff, axis=1) / (2.0 * params.lengthscale**2))
    return -diff / params.lengthscale**2 * k[:, None]


def cross_hessian_diag(d: int, params: KernelParams) -> np.ndarray:
    """Analytic ``d_z d_z' k(z, z')`` at coincident inputs: ``(1/l^2) I``."""
    return np.eye(d) / params.lengthscale**2


def sample_rff_basis(M: int, d: int, params: KernelParams, seed: int) -> RFFBasis:
    """Draw the shared feature basis; deterministic in (M, d, params, seed)."""
    if M < 1:
        raise ValueError(f"feature count must be >= 1, got {M}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    freq_ss, phase_ss = np.random.SeedSequence(seed).spawn(2)
    frequencies = np.random.default_rng(freq_ss).standard_normal((M, d)) / params.lengthscale
    phases = np.random.default_rng(phase_ss).uniform(0.0, 2.0 * np.pi, M)
    frequencies.setflags(write=False)
    phases.setflags(write=False)
    return RFFBasis(frequencies=frequencies, phases=phases, seed=seed)


def rff_features(basis: RFFBasis, x) -> np.ndarray:
    """Feature map ``phi_j(x) = sqrt(2/M) cos(v_j . x + b_j)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (basis.dimension,):
        raise ValueError(f"dimension mismatch: {x.shape} vs basis d={basis.dimension}")
    M = basis.feature_count
    return np.sqrt(2.0 / M) * np.cos(basis.frequencies @ x + basis.phases)


def rff_features_matrix(basis: RFFBasis, X) -> np.ndarray:
    """(M, n) matrix stacking ``phi(x_tau)`` columnwise over rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != basis.dimension:
        raise ValueError(f"dimension mismatch: {X.shape} vs basis d={basis.dimension}")
    M = basis.feature_count
    return np.sqrt(2.0 / M) * np.cos(basis.frequencies @ X.T + basis.phases[:, None])


def rff_feature_jacobian(basis: RFFBasis, x) -> np.ndarray:
    """(M, d) Jacobian of the feature map, row j = ``-sqrt(2/M) sin(v_j.x+b_j) v_j``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (basis.dimension,):
        raise ValueError(f"dimension mismatch: {x.shape} vs basis d={basis.dimension}")
    M = basis.feature_count
    s = np.sin(basis.frequencies @ x + basis.phases)
    return -np.sqrt(2.0 / M) * s[:, None] * basis.frequencies
