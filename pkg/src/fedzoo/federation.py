"""Simulated client/server round loop with exact query and transmission
accounting.

One round = T local gradient steps on every client, a server average of the
returned iterates, and (for the surrogate algorithm) an exchange of compressed
surrogate weight vectors.  Everything is driven by per-client RNG streams
spawned from the master seed, so results depend only on the configuration and
never on worker scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import DisparityRecord, cosine_similarity, gradient_disparity, optimal_gamma
from .errors import ConfigError
from .estimators import (
    AdamState,
    FDParams,
    GammaSchedule,
    adam_step,
    fd_gradient,
    fedprox_gradient,
    fedzo_gradient,
    fzoos_gradient,
    gamma_value,
    scaffold1_gradient,
    scaffold2_gradient,
)
from .kernels import KernelParams, sample_rff_basis
from .surrogate import (
    TrajectoryDataset,
    WeightVector,
    aggregate_weight_vectors,
    batched_uncertainty_norms,
    compute_weight_vector,
    posterior_gradient,
)

__all__ = [
    "ALGORITHMS",
    "ActiveQueryParams",
    "FederationConfig",
    "ClientState",
    "TraceRow",
    "OptimizationTrace",
    "active_query_selection",
    "server_aggregate",
    "client_local_round",
    "run_federated_optimization",
    "expected_total_queries",
    "expected_total_scalars",
]

ALGORITHMS = ("fedzo", "fedprox", "scaffold1", "scaffold2", "fzoos")


@dataclass(frozen=True)
class ActiveQueryParams:
    """Uncertainty-ranked extra queries around the current iterate."""

    enabled: bool = True
    candidates: int = 100
    radius: float = 0.01
    select: int = 5

    def __post_init__(self):
        if self.select < 1 or self.candidates < self.select:
            raise ConfigError("active_query", "need candidates >= select >= 1")
        if not self.radius > 0:
            raise ConfigError("active_radius", "must be positive")


@dataclass
class FederationConfig:
    algorithm: str = "fzoos"
    rounds: int = 50
    local_iterations: int = 10
    learning_rate: float = 0.01
    step_rule: str = "gd"  # gd | adam
    gamma: GammaSchedule = field(default_factory=GammaSchedule)
    fedprox_gamma: float = 1.0
    fd: FDParams = field(default_factory=FDParams)
    fd_share_directions: bool = False
    active_query: ActiveQueryParams = field(default_factory=ActiveQueryParams)
    round_end_query: bool = False
    feature_count: int = 10000
    kernel: KernelParams = field(default_factory=KernelParams)
    surrogate_noise_variance: float | None = None
    trajectory_window: int | None = None
    master_seed: int = 0
    shared_client_seed: bool = False
    workers: int = 1
    record_iteration_diagnostics: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"must be one of {ALGORITHMS}")
        if self.rounds < 1:
            raise ConfigError("rounds", "must be >= 1")
        if self.local_iterations < 1:
            raise ConfigError("local_iterations", "must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate", "must be positive")
        if self.step_rule not in ("gd", "adam"):
            raise ConfigError("step_rule", "must be 'gd' or 'adam'")
        if self.feature_count < 1:
            raise ConfigError("feature_count", "must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")


@dataclass
class ClientState:
    """Private per-client state surviving across rounds."""

    client_id: int
    rng: np.random.Generator
    trajectory: TrajectoryDataset | None = None
    w_self_prev: WeightVector | None = None
    mean_prev_self: np.ndarray | None = None
    shared_directions: np.ndarray | None = None


@dataclass
class TraceRow:
    round_index: int
    iterate: np.ndarray
    f_value: float
    conv_error: float | None
    cum_queries: int
    cum_scalars_tx: int
    mean_disparity: float | None
    gamma: float


@dataclass
class OptimizationTrace:
    rows: list[TraceRow] = field(default_factory=list)
    disparity_records: list[DisparityRecord] = field(default_factory=list)


class _ReplayDirections:
    """rng facade replaying a fixed direction block (shared-direction mode)."""

    def __init__(self, directions: np.ndarray):
        self._directions = directions
        self._i = 0

    def reset(self):
        self._i = 0

    def standard_normal(self, d: int) -> np.ndarray:
        u = self._directions[self._i % len(self._directions)]
        self._i += 1
        return u


def active_query_selection(
    traj: TrajectoryDataset,
    kernel: KernelParams,
    center,
    params: ActiveQueryParams,
    rng,
) -> list[np.ndarray]:
    """Top-``select`` of ``candidates`` uniform perturbations, ranked by the
    spectral norm of the gradient-posterior covariance (descending, ties broken
    by candidate index)."""
    center = np.asarray(center, dtype=float)
    offsets = rng.uniform(-params.radius, params.radius, (params.candidates, center.shape[0]))
    candidates = np.clip(center + offsets, 0.0, 1.0)
    norms = batched_uncertainty_norms(traj, kernel, candidates)
    order = np.argsort(-norms, kind="stable")
    return [candidates[j] for j in order[: params.select]]


def server_aggregate(client_iterates, client_weights=None):
    """Arithmetic means, summed in client-index order."""
    if not client_iterates:
        raise ValueError("no client iterates to aggregate")
    d = np.asarray(client_iterates[0]).shape
    total = np.zeros(d)
    for x in client_iterates:
        x = np.asarray(x, dtype=float)
        if x.shape != d:
            raise ValueError("iterate dimension mismatch")
        total = total + x
    x_mean = total / len(client_iterates)
    if client_weights is None:
        return x_mean, None
    return x_mean, aggregate_weight_vectors(client_weights)


@dataclass
class _RoundContext:
    """What the server hands every client at the start of a round."""

    round_index: int
    x_start: np.ndarray
    global_anchor_grad: np.ndarray | None = None  # scaffold1
    local_anchor_grads: list | None = None  # scaffold1, indexed by client
    mean_prev_all: np.ndarray | None = None  # scaffold2
    w_global_prev: WeightVector | None = None  # fzoos


@dataclass
class _ClientRoundResult:
    x_final: np.ndarray
    queries: int
    weight: WeightVector | None
    mean_delta: np.ndarray | None  # scaffold2 running mean for next round
    disparities: list[float]
    gammas: list[float]
    records: list[DisparityRecord]


def _make_evaluator(suite, i: int, rng):
    # finite-difference probes may poke just outside the unit cube; project
    def evaluate(x):
        return suite.evaluate_local(i, np.clip(x, 0.0, 1.0), rng)

    return evaluate


def client_local_round(
    state: ClientState,
    ctx: _RoundContext,
    cfg: FederationConfig,
    suite,
    basis,
    grad_oracle=None,
) -> _ClientRoundResult:
    """T local gradient steps for one client; returns its final iterate,
    exact query count, and per-iteration diagnostics."""
    i = state.client_id
    r = ctx.round_index
    T = cfg.local_iterations
    x = ctx.x_start.copy()
    evaluate = _make_evaluator(suite, i, state.rng)
    queries = 0
    adam = AdamState() if cfg.step_rule == "adam" else None
    sum_delta = np.zeros_like(x) if cfg.algorithm == "scaffold2" else None
    disparities: list[float] = []
    gammas: list[float] = []
    records: list[DisparityRecord] = []

    fd_rng = state.rng
    if cfg.fd_share_directions and cfg.algorithm != "fzoos":
        fd_rng = _ReplayDirections(state.shared_directions)

    for t in range(1, T + 1):
        g_base = None
        correction_used = None
        if cfg.algorithm == "fzoos":
            gamma = 0.0 if r == 1 else gamma_value(cfg.gamma, r, t)
            y = evaluate(x)
            queries += 1
            state.trajectory.append(x, y)
            if cfg.active_query.enabled:
                extra = active_query_selection(
                    state.trajectory, cfg.kernel, x, cfg.active_query, state.rng
                )
                for p in extra:
                    state.trajectory.append(p, evaluate(p))
                    queries += 1
            g_base = posterior_gradient(state.trajectory, cfg.kernel, x).mean
            if gamma == 0.0:
                g_hat = g_base.copy()
            else:
                g_hat = fzoos_gradient(
                    g_base, basis, ctx.w_global_prev, state.w_self_prev, x, gamma
                )
        else:
            if isinstance(fd_rng, _ReplayDirections):
                fd_rng.reset()
            delta, used = fd_gradient(evaluate, x, cfg.fd, fd_rng)
            queries += used
            g_base = delta
            if cfg.algorithm == "fedzo":
                gamma = 0.0
                g_hat = fedzo_gradient(delta)
            elif cfg.algorithm == "fedprox":
                gamma = cfg.fedprox_gamma
                g_hat = fedprox_gradient(delta, x, ctx.x_start, gamma)
            elif cfg.algorithm == "scaffold1":
                gamma = 1.0
                g_hat = scaffold1_gradient(
                    delta, ctx.global_anchor_grad, ctx.local_anchor_grads[i]
                )
            else:  # scaffold2
                gamma = 1.0
                g_hat = scaffold2_gradient(delta, ctx.mean_prev_all, state.mean_prev_self)
                sum_delta += delta
        gammas.append(gamma)

        if grad_oracle is not None:
            grad_true = grad_oracle(x)
            disparities.append(gradient_disparity(g_hat, grad_true))
            if cfg.record_iteration_diagnostics:
                correction_used = g_hat - g_base if gamma != 0.0 else None
                cos = None
                if np.linalg.norm(g_hat) > 0 and np.linalg.norm(grad_true) > 0:
                    cos = cosine_similarity(g_hat, grad_true)
                gstar = None
                if correction_used is not None and float(correction_used @ correction_used) > 0:
                    gstar = optimal_gamma(grad_true, g_base, correction_used / gamma)
                records.append(
                    DisparityRecord(
                        round_index=r,
                        iteration=t,
                        client=i,
                        disparity=disparities[-1],
                        cosine=cos,
                        gamma_used=gamma,
                        gamma_star=gstar,
                    )
                )

        if adam is not None:
            x = adam_step(adam, x, g_hat, cfg.learning_rate)
        else:
            x = x - cfg.learning_rate * g_hat
        np.clip(x, 0.0, 1.0, out=x)

    weight = None
    if cfg.algorithm == "fzoos" and not cfg.round_end_query:
        # no post-aggregation queries: the weight vector can ride along with
        # the iterate in a single transmission
        weight = compute_weight_vector(state.trajectory, basis)

    mean_delta = sum_delta / T if sum_delta is not None else None
    return _ClientRoundResult(
        x_final=x,
        queries=queries,
        weight=weight,
        mean_delta=mean_delta,
        disparities=disparities,
        gammas=gammas,
        records=records,
    )


def _map_clients(fn, n_clients: int, workers: int):
    if workers <= 1:
        return [fn(i) for i in range(n_clients)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_clients)))


def run_federated_optimization(cfg: FederationConfig, suite, x0) -> OptimizationTrace:
    """Run R rounds of the configured algorithm and return the full trace."""
    d = suite.dimension
    N = suite.client_count
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (d,):
        raise ConfigError("init_point", f"needs dimension {d}, got shape {x0.shape}")
    if np.any(x0 < 0) or np.any(x0 > 1):
        raise ConfigError("init_point", "must lie in the unit cube")

    grad_oracle = getattr(suite, "true_global_gradient", None)
    f_star = getattr(suite, "optimum_value", None)
    M = cfg.feature_count

    basis = None
    sigma2 = cfg.surrogate_noise_variance
    if sigma2 is None:
        sigma2 = suite.noise_std**2 if suite.noise_std > 0 else 1e-6
    if cfg.algorithm == "fzoos":
        basis = sample_rff_basis(M, d, cfg.kernel, seed=cfg.master_seed)

    root = np.random.SeedSequence(cfg.master_seed)
    children = root.spawn(N + 1)
    if cfg.shared_client_seed:
        children = [children[0]] * N + [children[N]]

    states = []
    for i in range(N):
        rng = np.random.default_rng(children[i])
        st = ClientState(client_id=i, rng=rng)
        if cfg.algorithm == "fzoos":
            st.trajectory = TrajectoryDataset(
                dimension=d, noise_variance=sigma2, window=cfg.trajectory_window
            )
        if cfg.algorithm == "scaffold2":
            st.mean_prev_self = np.zeros(d)
        if cfg.fd_share_directions:
            st.shared_directions = rng.standard_normal((cfg.fd.directions, d))
        states.append(st)

    trace = OptimizationTrace()
    cum_queries = 0
    cum_scalars = 0
    f0 = suite.global_value(x0)
    trace.rows.append(
        TraceRow(
            round_index=0,
            iterate=x0.copy(),
            f_value=f0,
            conv_error=None if f_star is None else f0 - f_star,
            cum_queries=0,
            cum_scalars_tx=0,
            mean_disparity=None,
            gamma=0.0,
        )
    )

    x_prev = x0.copy()
    mean_prev_all = np.zeros(d)
    w_global_prev: WeightVector | None = None

    for r in range(1, cfg.rounds + 1):
        ctx = _RoundContext(round_index=r, x_start=x_prev)
        if cfg.algorithm == "scaffold1":
            # anchor FD estimates at the shared round-start iterate, one per
            # client, exchanged through the server before local updates
            def anchor(i):
                st = states[i]
                fd_rng = st.rng
                if cfg.fd_share_directions:
                    fd_rng = _ReplayDirections(st.shared_directions)
                g, used = fd_gradient(_make_evaluator(suite, i, st.rng), x_prev, cfg.fd, fd_rng)
                return g, used

            anchors = _map_clients(anchor, N, cfg.workers)
            ctx.local_anchor_grads = [a[0] for a in anchors]
            cum_queries += sum(a[1] for a in anchors)
            total = np.zeros(d)
            for g, _ in anchors:
                total = total + g
            ctx.global_anchor_grad = total / N
        elif cfg.algorithm == "scaffold2":
            ctx.mean_prev_all = mean_prev_all
        elif cfg.algorithm == "fzoos":
            ctx.w_global_prev = w_global_prev

        results = _map_clients(
            lambda i: client_local_round(states[i], ctx, cfg, suite, basis, grad_oracle),
            N,
            cfg.workers,
        )

        cum_queries += sum(res.queries for res in results)
        x_r, _ = server_aggregate([res.x_final for res in results])

        if cfg.algorithm == "fzoos":
            if cfg.round_end_query:
                # Extra neighborhood queries around the aggregated iterate,
                # then the (second) weight-vector transmission
                def refresh(i):
                    st = states[i]
                    extra = active_query_selection(
                        st.trajectory, cfg.kernel, x_r, cfg.active_query, st.rng
                    )
                    used = 0
                    for p in extra:
                        st.trajectory.append(p, suite.evaluate_local(i, p, st.rng))
                        used += 1
                    return compute_weight_vector(st.trajectory, basis), used

                refreshed = _map_clients(refresh, N, cfg.workers)
                weights = [w for w, _ in refreshed]
                cum_queries += sum(u for _, u in refreshed)
            else:
                weights = [res.weight for res in results]
            w_global_prev = aggregate_weight_vectors(weights)
            for st, w in zip(states, weights):
                st.w_self_prev = w
            cum_scalars += N * (2 * d + 2 * M)
        else:
            cum_scalars += N * 2 * d
            if cfg.algorithm == "scaffold1":
                cum_scalars += N * 2 * d
            elif cfg.algorithm == "scaffold2":
                total = np.zeros(d)
                for res in results:
                    total = total + res.mean_delta
                mean_prev_all = total / N
                for st, res in zip(states, results):
                    st.mean_prev_self = res.mean_delta

        all_disp = [v for res in results for v in res.disparities]
        all_gamma = [v for res in results for v in res.gammas]
        for res in results:
            trace.disparity_records.extend(res.records)

        f_r = suite.global_value(x_r)
        trace.rows.append(
            TraceRow(
                round_index=r,
                iterate=x_r.copy(),
                f_value=f_r,
                conv_error=None if f_star is None else f_r - f_star,
                cum_queries=cum_queries,
                cum_scalars_tx=cum_scalars,
                mean_disparity=float(np.mean(all_disp)) if all_disp else None,
                gamma=float(np.mean(all_gamma)),
            )
        )
        x_prev = x_r

    return trace


def expected_total_queries(cfg: FederationConfig, N: int) -> int:
    """Closed-form ledger value the simulation must match exactly."""
    R, T, Q = cfg.rounds, cfg.local_iterations, cfg.fd.directions
    if cfg.algorithm == "fzoos":
        per_iter = 1 + (cfg.active_query.select if cfg.active_query.enabled else 0)
        total = N * R * T * per_iter
        if cfg.round_end_query:
            total += N * R * cfg.active_query.select
        return total
    if cfg.algorithm == "scaffold1":
        return N * R * (T + 1) * (Q + 1)
    return N * R * T * (Q + 1)


def expected_total_scalars(cfg: FederationConfig, N: int, d: int) -> int:
    """Closed-form transmission ledger (scalars up + down, per the protocol)."""
    R = cfg.rounds
    per_round = 2 * d
    if cfg.algorithm == "fzoos":
        per_round += 2 * cfg.feature_count
    elif cfg.algorithm == "scaffold1":
        per_round += 2 * d
    return R * N * per_round
