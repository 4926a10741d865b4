"""Trajectory-conditioned gradient surrogates.

A Gaussian-process prior on each local function induces a Gaussian process on
its gradient once conditioned on the (input, noisy value) trajectory.  The
exact posterior gradient mean and covariance live here, together with the
random-feature compression that turns a client's surrogate into a single
M-vector of weights, and the server-side average of those weights.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError
from .kernels import (
    KernelParams,
    RFFBasis,
    cross_hessian_diag,
    kernel_grad_first_batch,
    kernel_matrix,
    rff_feature_jacobian,
    rff_features_matrix,
)

__all__ = [
    "TrajectoryDataset",
    "GradientPosterior",
    "WeightVector",
    "posterior_gradient",
    "posterior_mean_value",
    "batched_uncertainty_norms",
    "compute_weight_vector",
    "surrogate_gradient_from_weights",
    "aggregate_weight_vectors",
    "uncertainty_norm",
    "solve_spd",
]

_JITTER_SCALE = 1e-8


@dataclass
class TrajectoryDataset:
    """Per-client history of (input, noisy value) pairs.

    Append-only: entries are never mutated or removed.  ``window`` limits how
    many of the most recent points the surrogate conditions on (None keeps the
    full trajectory).  ``noise_variance`` must be positive so that the
    regularized Gram matrix stays invertible.
    """

    dimension: int
    noise_variance: float
    window: int | None = None
    _inputs: list = field(default_factory=list, repr=False)
    _values: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise ValueError(f"noise_variance must be positive, got {self.noise_variance}")
        if self.window is not None and self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")

    def __len__(self) -> int:
        return len(self._inputs)

    def append(self, x, y: float) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"dimension mismatch: {x.shape} vs d={self.dimension}")
        self._inputs.append(x.copy())
        self._values.append(float(y))

    def active_inputs(self) -> np.ndarray:
        """(n, d) array of the windowed inputs (most recent ``window`` points)."""
        if not self._inputs:
            return np.empty((0, self.dimension))
        X = np.asarray(self._inputs)
        return X if self.window is None else X[-self.window :]

    def active_values(self) -> np.ndarray:
        if not self._values:
            return np.empty(0)
        y = np.asarray(self._values)
        return y if self.window is None else y[-self.window :]


@dataclass(frozen=True)
class GradientPosterior:
    """Posterior gradient mean and covariance at a single query point."""

    mean: np.ndarray
    covariance: np.ndarray
    query_point: np.ndarray


@dataclass(frozen=True)
class WeightVector:
    """Compressed surrogate: ``w = Phi (K_hat + sigma^2 I)^{-1} y``.

    The gradient surrogate is recovered at any x as ``grad_phi(x)^T w``, which
    is the only payload a client ever sends to the server.
    """

    weights: np.ndarray
    basis_seed: int
    observation_count: int

    def to_bytes(self) -> bytes:
        """Debug/trace dump: (basis_seed u64, M u32, weights LE f64 array)."""
        w = np.asarray(self.weights, dtype="<f8")
        return struct.pack("<QI", self.basis_seed, w.size) + w.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, observation_count: int = 0) -> "WeightVector":
        seed, m = struct.unpack_from("<QI", data)
        w = np.frombuffer(data, dtype="<f8", count=m, offset=12).copy()
        return cls(weights=w, basis_seed=seed, observation_count=observation_count)


def solve_spd(K: np.ndarray, B: np.ndarray):
    """Solve ``K X = B`` for symmetric positive definite K via Cholesky.

    On factorization failure adds ``1e-8 * (trace/n) * I`` and retries once;
    a second failure raises :class:`NumericalError` with a condition estimate.
    Returns ``(X, cho)`` where ``cho`` is the (lower) Cholesky factor pair
    reusable with :func:`scipy.linalg.cho_solve`.
    """
    try:
        cho = sla.cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        n = K.shape[0]
        jitter = _JITTER_SCALE * np.trace(K) / n
        try:
            cho = sla.cho_factor(K + jitter * np.eye(n), lower=True)
        except np.linalg.LinAlgError as exc:
            cond = np.linalg.cond(K)
            raise NumericalError(
                f"Gram factorization failed after jitter retry (condition ~{cond:.3e})"
            ) from exc
    return sla.cho_solve(cho, B), cho


def posterior_gradient(traj: TrajectoryDataset, kernel: KernelParams, x) -> GradientPosterior:
    """Exact derived-GP gradient posterior at ``x``.

    Mean: ``d_x k(x, X)^T (K + sigma^2 I)^{-1} y``.  Covariance: the prior
    cross-Hessian minus the explained part.  With an empty trajectory the
    prior is returned (zero mean, ``(1/l^2) I`` covariance).
    """
    x = np.asarray(x, dtype=float)
    d = traj.dimension
    if x.shape != (d,):
        raise ValueError(f"dimension mismatch: {x.shape} vs d={d}")
    prior_cov = cross_hessian_diag(d, kernel)
    X = traj.active_inputs()
    n = X.shape[0]
    if n == 0:
        return GradientPosterior(mean=np.zeros(d), covariance=prior_cov, query_point=x)
    y = traj.active_values()
    K = kernel_matrix(X, X, kernel) + traj.noise_variance * np.eye(n)
    A = kernel_grad_first_batch(x, X, kernel)  # (n, d)
    sol, _ = solve_spd(K, np.column_stack([y, A]))
    alpha, W = sol[:, 0], sol[:, 1:]
    mean = A.T @ alpha
    cov = prior_cov - A.T @ W
    cov = 0.5 * (cov + cov.T)
    return GradientPosterior(mean=mean, covariance=cov, query_point=x)


def posterior_mean_value(traj: TrajectoryDataset, kernel: KernelParams, x) -> float:
    """Scalar value posterior mean ``k(x, X)^T (K + sigma^2 I)^{-1} y``.

    The gradient posterior mean is the exact derivative of this function;
    exposing it lets callers cross-check one against the other.
    """
    X = traj.active_inputs()
    if X.shape[0] == 0:
        return 0.0
    y = traj.active_values()
    K = kernel_matrix(X, X, kernel) + traj.noise_variance * np.eye(X.shape[0])
    alpha, _ = solve_spd(K, y)
    kx = kernel_matrix(np.asarray(x, dtype=float)[None, :], X, kernel)[0]
    return float(kx @ alpha)


def batched_uncertainty_norms(
    traj: TrajectoryDataset, kernel: KernelParams, points: np.ndarray
) -> np.ndarray:
    """Spectral norm of the gradient-posterior covariance at many points.

    One Gram factorization is shared by all query points; the per-point work is
    a batched triangular solve, which is what keeps the per-iteration active
    query ranking affordable.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, d = points.shape
    kappa = kernel.kappa
    X = traj.active_inputs()
    n = X.shape[0]
    if n == 0:
        return np.full(m, kappa)
    K = kernel_matrix(X, X, kernel) + traj.noise_variance * np.eye(n)
    _, cho = solve_spd(K, np.zeros(n))
    L = cho[0]
    # rows of A_all: kernel gradients of every candidate w.r.t. every
    # trajectory point, laid out (n, m*d) for a single triangular solve
    diff = points[:, None, :] - X[None, :, :]  # (m, n, d)
    kv = np.exp(-np.sum(diff * diff, axis=2) / (2.0 * kernel.lengthscale**2))
    A = -(diff / kernel.lengthscale**2) * kv[:, :, None]  # (m, n, d)
    Z = sla.solve_triangular(
        L, A.transpose(1, 0, 2).reshape(n, m * d), lower=True, check_finite=False
    )
    Zt = np.ascontiguousarray(Z.reshape(n, m, d).transpose(1, 0, 2))  # (m, n, d)
    G = Zt.transpose(0, 2, 1) @ Zt  # batched Z^T Z, (m, d, d)
    eig = np.linalg.eigvalsh(G)
    # covariance = kappa*I - Z^T Z is PSD, so its norm is kappa - lambda_min
    return np.abs(kappa - eig[:, 0])


def compute_weight_vector(
    traj: TrajectoryDataset, basis: RFFBasis, features: np.ndarray | None = None
) -> WeightVector:
    """RFF compression of the trajectory surrogate into an M-vector.

    Solves the n x n feature-Gram system (never the M x M one):
    ``w = Phi (Phi^T Phi + sigma^2 I)^{-1} y``.  ``features`` may carry a
    precomputed ``Phi`` (M, n) for the windowed inputs.
    """
    X = traj.active_inputs()
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot compress an empty trajectory")
    Phi = rff_features_matrix(basis, X) if features is None else features
    K_hat = Phi.T @ Phi + traj.noise_variance * np.eye(n)
    alpha, _ = solve_spd(K_hat, traj.active_values())
    return WeightVector(weights=Phi @ alpha, basis_seed=basis.seed, observation_count=n)


def surrogate_gradient_from_weights(basis: RFFBasis, w: WeightVector, x) -> np.ndarray:
    """Evaluate the compressed surrogate gradient ``grad_phi(x)^T w`` at any x."""
    if len(w.weights) != basis.feature_count:
        raise ValueError(
            f"weight length {len(w.weights)} does not match basis M={basis.feature_count}"
        )
    return rff_feature_jacobian(basis, x).T @ w.weights


def aggregate_weight_vectors(locals_: list[WeightVector]) -> WeightVector:
    """Server-side elementwise mean, summed in client-index order."""
    if not locals_:
        raise ValueError("no weight vectors to aggregate")
    seed = locals_[0].basis_seed
    length = len(locals_[0].weights)
    total = np.zeros(length)
    for w in locals_:
        if w.basis_seed != seed:
            raise ValueError(f"basis seed mismatch: {w.basis_seed} != {seed}")
        if len(w.weights) != length:
            raise ValueError("weight vector length mismatch")
        total = total + w.weights
    return WeightVector(
        weights=total / len(locals_),
        basis_seed=seed,
        observation_count=max(w.observation_count for w in locals_),
    )


def uncertainty_norm(posterior: GradientPosterior) -> float:
    """Spectral norm (largest-magnitude eigenvalue) of the gradient covariance."""
    return float(np.max(np.abs(np.linalg.eigvalsh(posterior.covariance))))
