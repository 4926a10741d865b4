"""Per-iteration gradient estimates.

Every estimator fits the unified form ``g + gamma * correction``: plain
finite differences (no correction), the proximal pull, both control-variate
corrections, and the surrogate-based estimate with its adaptive correction
length schedules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .kernels import RFFBasis
from .surrogate import WeightVector, surrogate_gradient_from_weights

__all__ = [
    "FDParams",
    "GammaSchedule",
    "AdamState",
    "fd_gradient",
    "fedzo_gradient",
    "fedprox_gradient",
    "scaffold1_gradient",
    "scaffold2_gradient",
    "fzoos_gradient",
    "gamma_value",
    "unified_gradient",
    "adam_step",
]


@dataclass(frozen=True)
class FDParams:
    """Forward finite differences along Q standard-normal directions."""

    smoothing: float = 0.01
    directions: int = 20

    def __post_init__(self):
        if not self.smoothing > 0:
            raise ValueError(f"smoothing must be positive, got {self.smoothing}")
        if self.directions < 1:
            raise ValueError(f"directions must be >= 1, got {self.directions}")


@dataclass(frozen=True)
class GammaSchedule:
    """Correction length schedule; produced values always lie in [0, 1].

    ``constant`` returns ``constant_value``; ``inverse_iteration`` returns
    ``1/t``; ``theoretical`` evaluates
    ``G / (G + 2*omega*kappa*rho**((r-1)*T) + 2*N*eps)``.
    """

    kind: str = "inverse_iteration"
    constant_value: float = 1.0
    hetero_bound: float = 0.0  # G
    omega: float = 1.0
    kappa: float = 1.0
    rho: float = 1.0
    epsilon: float = 0.0
    clients: int = 1
    local_iterations: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "inverse_iteration", "theoretical"):
            raise ConfigError("gamma_schedule", f"unknown kind {self.kind!r}")
        if self.kind == "constant" and not 0.0 <= self.constant_value <= 1.0:
            raise ConfigError("gamma_constant", "must lie in [0, 1]")
        if self.kind == "theoretical":
            if self.hetero_bound < 0:
                raise ConfigError("gamma_theory.G", "must be >= 0")
            if not 0.0 < self.rho <= 1.0:
                raise ConfigError("gamma_theory.rho", "must lie in (0, 1]")
            if self.omega <= 0 or self.kappa <= 0:
                raise ConfigError("gamma_theory", "omega and kappa must be positive")
            if self.epsilon < 0:
                raise ConfigError("gamma_theory.epsilon", "must be >= 0")


def gamma_value(schedule: GammaSchedule, r: int, t: int) -> float:
    """Correction length for round r, local iteration t (both 1-based)."""
    if r < 1 or t < 1:
        raise ValueError(f"round and iteration are 1-based, got r={r}, t={t}")
    if schedule.kind == "constant":
        g = schedule.constant_value
    elif schedule.kind == "inverse_iteration":
        g = 1.0 / t
    else:
        G = schedule.hetero_bound
        decay = schedule.rho ** ((r - 1) * schedule.local_iterations)
        denom = G + 2.0 * schedule.omega * schedule.kappa * decay + 2.0 * schedule.clients * schedule.epsilon
        g = 0.0 if G == 0.0 else G / denom
    return float(min(1.0, max(0.0, g)))


def fd_gradient(query, x, params: FDParams, rng) -> tuple[np.ndarray, int]:
    """Forward-difference estimate averaged over Q random directions.

    The base value ``query(x)`` is evaluated once and reused for every
    direction, so exactly ``Q + 1`` evaluations are consumed.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    lam, Q = params.smoothing, params.directions
    y0 = query(x)
    acc = np.zeros(d)
    for _ in range(Q):
        u = rng.standard_normal(d)
        acc += (query(x + lam * u) - y0) / lam * u
    return acc / Q, Q + 1


def fedzo_gradient(delta: np.ndarray) -> np.ndarray:
    """No correction: the FD estimate is used as-is."""
    return np.asarray(delta, dtype=float)


def fedprox_gradient(delta, x, x_anchor, gamma: float) -> np.ndarray:
    """Proximal pull toward the round-start iterate: ``delta + gamma (x - anchor)``."""
    delta = np.asarray(delta, dtype=float)
    x = np.asarray(x, dtype=float)
    x_anchor = np.asarray(x_anchor, dtype=float)
    if not (delta.shape == x.shape == x_anchor.shape):
        raise ValueError("dimension mismatch between delta, x, and anchor")
    return delta + gamma * (x - x_anchor)


def scaffold1_gradient(delta_local, global_anchor_grad, local_anchor_grad) -> np.ndarray:
    """Type-I control variate: anchor FD estimates at the shared round-start iterate."""
    delta_local = np.asarray(delta_local, dtype=float)
    g = np.asarray(global_anchor_grad, dtype=float)
    c = np.asarray(local_anchor_grad, dtype=float)
    if not (delta_local.shape == g.shape == c.shape):
        raise ValueError("dimension mismatch between estimate and anchor gradients")
    return delta_local + (g - c)


def scaffold2_gradient(delta_local, mean_prev_round_all, mean_prev_round_self) -> np.ndarray:
    """Type-II control variate: running means of the previous round's FD estimates."""
    delta_local = np.asarray(delta_local, dtype=float)
    a = np.asarray(mean_prev_round_all, dtype=float)
    s = np.asarray(mean_prev_round_self, dtype=float)
    if not (delta_local.shape == a.shape == s.shape):
        raise ValueError("dimension mismatch between estimate and previous-round means")
    return delta_local + (a - s)


def fzoos_gradient(
    local_exact_grad,
    basis: RFFBasis,
    w_global_prev: WeightVector,
    w_self_prev: WeightVector,
    x,
    gamma: float,
) -> np.ndarray:
    """Surrogate estimate with adaptive correction.

    ``local_exact_grad`` is the derived-GP posterior gradient mean on the
    current trajectory; the correction evaluates both previous-round
    compressed surrogates at the *current* iterate, which is the whole point
    of carrying weight vectors instead of fixed anchor gradients.
    """
    local_exact_grad = np.asarray(local_exact_grad, dtype=float)
    if w_global_prev.basis_seed != w_self_prev.basis_seed:
        raise ValueError("weight vectors come from different bases")
    if gamma == 0.0:
        return local_exact_grad.copy()
    corr = surrogate_gradient_from_weights(
        basis, w_global_prev, x
    ) - surrogate_gradient_from_weights(basis, w_self_prev, x)
    return local_exact_grad + gamma * corr


def unified_gradient(g, correction, gamma: float) -> np.ndarray:
    """The general form every estimator reduces to: ``g + gamma * correction``."""
    return np.asarray(g, dtype=float) + gamma * np.asarray(correction, dtype=float)


@dataclass
class AdamState:
    """Adam moments for one client's local updates; reset at each round start."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)


def adam_step(state: AdamState, x, grad, lr: float) -> np.ndarray:
    """One Adam update; mutates ``state`` and returns the new iterate."""
    grad = np.asarray(grad, dtype=float)
    if state.m is None:
        state.m = np.zeros_like(grad)
        state.v = np.zeros_like(grad)
    state.step_count += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.step_count)
    v_hat = state.v / (1.0 - state.beta2**state.step_count)
    return np.asarray(x, dtype=float) - lr * m_hat / (np.sqrt(v_hat) + state.eps)
