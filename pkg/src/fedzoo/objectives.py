"""Synthetic federated quadratics and the pluggable black-box interface.

The suite draws Dirichlet coefficient columns over clients so the local
functions disagree (controlled by C) while their average stays exactly the
global quadratic.  Optimization happens in the normalized unit cube; the
affine map back to raw coordinates lives in :class:`DomainMap`, and every
gradient anyone compares (oracle, finite-difference, surrogate) is expressed
in normalized coordinates.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field

import numpy as np

__all__ = ["DomainMap", "QuadraticSuite", "make_quadratic_suite"]

_CLAMP_TOL = 1e-9


@dataclass(frozen=True)
class DomainMap:
    """Invertible affine map between a raw box and the unit cube."""

    lower: np.ndarray
    upper: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        return self.upper - self.lower

    def to_raw(self, x_norm) -> np.ndarray:
        return self.lower + self.scale * np.asarray(x_norm, dtype=float)

    def to_normalized(self, x_raw) -> np.ndarray:
        return (np.asarray(x_raw, dtype=float) - self.lower) / self.scale


def _validate_normalized(x_norm, d: int) -> np.ndarray:
    x = np.asarray(x_norm, dtype=float)
    if x.shape != (d,):
        raise ValueError(f"dimension mismatch: {x.shape} vs d={d}")
    if np.any(x < -_CLAMP_TOL) or np.any(x > 1.0 + _CLAMP_TOL):
        raise ValueError(f"input outside the unit cube by more than {_CLAMP_TOL}")
    return np.clip(x, 0.0, 1.0)


@dataclass
class QuadraticSuite:
    """N client quadratics over raw [-10, 10]^d whose average is the global target.

    Per-dimension coefficient columns over clients sum to one (Dirichlet), so
    ``(1/N) sum_i f_i == F`` holds at machine precision for every C.  The
    noisy evaluator adds N(0, noise_std^2) and counts queries per client.
    """

    dimension: int
    client_count: int
    heterogeneity: float
    noise_std: float
    seed: int
    quad_coeffs: np.ndarray = field(repr=False)  # (N, d) Dirichlet columns
    lin_coeffs: np.ndarray = field(repr=False)
    domain: DomainMap = field(repr=False)
    query_counts: np.ndarray = field(repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    # -- raw-coordinate pieces -------------------------------------------
    def _quad_weight(self, i: int) -> np.ndarray:
        return 1.0 + self.heterogeneity * (self.quad_coeffs[i] - 1.0 / self.client_count)

    def _lin_weight(self, i: int) -> np.ndarray:
        return 1.0 + self.heterogeneity * (self.lin_coeffs[i] - 1.0 / self.client_count)

    def local_value_raw(self, i: int, x_raw: np.ndarray) -> float:
        a, b = self._quad_weight(i), self._lin_weight(i)
        return float((np.sum(a * x_raw**2 + b * x_raw) + 1.0) / (10.0 * self.dimension))

    def global_value_raw(self, x_raw: np.ndarray) -> float:
        return float((np.sum(x_raw**2 + x_raw) + 1.0) / (10.0 * self.dimension))

    # -- normalized-coordinate interface ---------------------------------
    def evaluate_local(self, i: int, x_norm, rng) -> float:
        """Noisy local observation; increments this client's query counter."""
        if not 0 <= i < self.client_count:
            raise ValueError(f"client index {i} out of range")
        x = _validate_normalized(x_norm, self.dimension)
        value = self.local_value_raw(i, self.domain.to_raw(x))
        if self.noise_std > 0:
            value += self.noise_std * rng.standard_normal()
        with self._lock:
            self.query_counts[i] += 1
        return value

    def global_value(self, x_norm) -> float:
        """Noiseless global objective; reporting only, never counted."""
        x = _validate_normalized(x_norm, self.dimension)
        return self.global_value_raw(self.domain.to_raw(x))

    def local_gradient(self, i: int, x_norm) -> np.ndarray:
        """Analytic local gradient in normalized coordinates."""
        x = _validate_normalized(x_norm, self.dimension)
        x_raw = self.domain.to_raw(x)
        a, b = self._quad_weight(i), self._lin_weight(i)
        grad_raw = (2.0 * a * x_raw + b) / (10.0 * self.dimension)
        return grad_raw * self.domain.scale

    def true_global_gradient(self, x_norm) -> np.ndarray:
        """Analytic global gradient in normalized coordinates (chain rule included)."""
        x = _validate_normalized(x_norm, self.dimension)
        x_raw = self.domain.to_raw(x)
        grad_raw = (2.0 * x_raw + 1.0) / (10.0 * self.dimension)
        return grad_raw * self.domain.scale

    @property
    def optimum_value(self) -> float:
        """Global minimum value, attained at raw x_j = -1/2 for every j."""
        d = self.dimension
        return (1.0 - 0.25 * d) / (10.0 * d)

    @property
    def minimizer_normalized(self) -> np.ndarray:
        return self.domain.to_normalized(np.full(self.dimension, -0.5))

    def heterogeneity_bound(self, sample_count: int, rng) -> float:
        """Empirical G: max over sampled points of the mean squared gradient gap."""
        if sample_count < 1:
            raise ValueError(f"sample_count must be >= 1, got {sample_count}")
        worst = 0.0
        gF = self.true_global_gradient
        for _ in range(sample_count):
            x = rng.uniform(0.0, 1.0, self.dimension)
            gap = np.mean(
                [
                    np.sum((self.local_gradient(i, x) - gF(x)) ** 2)
                    for i in range(self.client_count)
                ]
            )
            worst = max(worst, float(gap))
        return worst

    def dump_coefficients(self, path) -> None:
        """CSV of the Dirichlet coefficient matrices for reproducibility audits."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "client"] + [f"dim_{j}" for j in range(self.dimension)])
            for i in range(self.client_count):
                writer.writerow(["quadratic", i] + [repr(float(v)) for v in self.quad_coeffs[i]])
            for i in range(self.client_count):
                writer.writerow(["linear", i] + [repr(float(v)) for v in self.lin_coeffs[i]])


def make_quadratic_suite(
    d: int, N: int, C: float, sigma: float, seed: int
) -> QuadraticSuite:
    """Sample a suite: per-dimension Dirichlet((1/N) 1) columns over clients."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if N < 1:
        raise ValueError(f"client count must be >= 1, got {N}")
    if C < 0:
        raise ValueError(f"heterogeneity must be >= 0, got {C}")
    if sigma < 0:
        raise ValueError(f"noise_std must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    alpha = np.full(N, 1.0 / N)
    if N == 1:
        quad = np.ones((1, d))
        lin = np.ones((1, d))
    else:
        quad = rng.dirichlet(alpha, size=d).T  # (N, d), columns sum to 1
        lin = rng.dirichlet(alpha, size=d).T
    domain = DomainMap(lower=np.full(d, -10.0), upper=np.full(d, 10.0))
    return QuadraticSuite(
        dimension=d,
        client_count=N,
        heterogeneity=C,
        noise_std=sigma,
        seed=seed,
        quad_coeffs=quad,
        lin_coeffs=lin,
        domain=domain,
        query_counts=np.zeros(N, dtype=np.int64),
    )
