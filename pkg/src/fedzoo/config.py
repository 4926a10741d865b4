"""YAML experiment configuration: flat, documented schema with hard errors on
unknown keys (silent typos corrupt benchmarks)."""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .estimators import FDParams, GammaSchedule
from .federation import ALGORITHMS, ActiveQueryParams, FederationConfig
from .kernels import KernelParams

__all__ = ["ExperimentConfig", "load_config", "parse_config", "federation_config"]

VERBOSITY_LEVELS = ("off", "round", "iteration")


@dataclass
class ExperimentConfig:
    """Everything needed to run one (multi-seed, possibly multi-algorithm)
    benchmark: the synthetic problem, the optimizer settings shared by all
    algorithms, and the output options."""

    name: str = "experiment"
    output_dir: str = "results"
    algorithm: str = "fzoos"
    algorithms: list[str] = field(default_factory=list)
    # problem
    dimension: int = 30
    clients: int = 5
    heterogeneity: float = 5.0
    noise_std: float = 0.01
    problem_seed: int = 0
    init_point: float | list[float] = 0.75
    dump_coefficients: bool = False
    # optimization
    rounds: int = 50
    local_iterations: int = 10
    learning_rate: float = 0.01
    step_rule: str = "gd"
    # finite differences
    fd_smoothing: float = 0.01
    fd_directions: int = 20
    fd_share_directions: bool = False
    # correction schedule
    gamma_kind: str = "inverse_iteration"
    gamma_constant: float = 1.0
    gamma_hetero_bound: float = 0.0
    gamma_omega: float = 1.0
    gamma_rho: float = 1.0
    gamma_epsilon: float = 0.0
    fedprox_gamma: float = 1.0
    # surrogate
    feature_count: int = 10000
    lengthscale: float = 1.0
    surrogate_noise_variance: float | None = None
    trajectory_window: int | None = None
    active_query: bool = True
    active_candidates: int = 100
    active_radius: float = 0.01
    active_select: int = 5
    round_end_query: bool = False
    # execution / output
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    workers: int = 1
    shared_client_seed: bool = False
    diagnostics_verbosity: str = "off"
    emit_plots: bool = True


# schema: key -> (type or tuple of types, validator message or None)
_SCHEMA = {
    "name": str,
    "output_dir": str,
    "algorithm": str,
    "algorithms": list,
    "dimension": int,
    "clients": int,
    "heterogeneity": (int, float),
    "noise_std": (int, float),
    "problem_seed": int,
    "init_point": (int, float, list),
    "dump_coefficients": bool,
    "rounds": int,
    "local_iterations": int,
    "learning_rate": (int, float),
    "step_rule": str,
    "fd_smoothing": (int, float),
    "fd_directions": int,
    "fd_share_directions": bool,
    "gamma_kind": str,
    "gamma_constant": (int, float),
    "gamma_hetero_bound": (int, float),
    "gamma_omega": (int, float),
    "gamma_rho": (int, float),
    "gamma_epsilon": (int, float),
    "fedprox_gamma": (int, float),
    "feature_count": int,
    "lengthscale": (int, float),
    "surrogate_noise_variance": (int, float, type(None)),
    "trajectory_window": (int, type(None)),
    "active_query": bool,
    "active_candidates": int,
    "active_radius": (int, float),
    "active_select": int,
    "round_end_query": bool,
    "seeds": list,
    "workers": int,
    "shared_client_seed": bool,
    "diagnostics_verbosity": str,
    "emit_plots": bool,
}


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a parsed mapping and return the typed configuration."""
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a mapping")
    cfg = ExperimentConfig()
    for key, value in data.items():
        if key not in _SCHEMA:
            raise ConfigError(key, "unknown configuration key")
        expected = _SCHEMA[key]
        if isinstance(expected, tuple):
            ok = isinstance(value, expected) and not isinstance(value, bool)
            if type(None) in expected and value is None:
                ok = True
        elif expected is bool:
            ok = isinstance(value, bool)
        elif expected in (int, float):
            ok = isinstance(value, expected) and not isinstance(value, bool)
        else:
            ok = isinstance(value, expected)
        if not ok:
            raise ConfigError(key, f"expected {_type_name(expected)}, got {value!r}")
        setattr(cfg, key, value)
    _validate(cfg)
    return cfg


def _type_name(expected) -> str:
    if isinstance(expected, tuple):
        return " or ".join(t.__name__ for t in expected)
    return expected.__name__


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError("algorithm", f"must be one of {ALGORITHMS}")
    for a in cfg.algorithms:
        if a not in ALGORITHMS:
            raise ConfigError("algorithms", f"{a!r} is not one of {ALGORITHMS}")
    if cfg.dimension < 1:
        raise ConfigError("dimension", "must be >= 1")
    if cfg.clients < 1:
        raise ConfigError("clients", "must be >= 1")
    if cfg.heterogeneity < 0:
        raise ConfigError("heterogeneity", "must be >= 0")
    if cfg.noise_std < 0:
        raise ConfigError("noise_std", "must be >= 0")
    if cfg.rounds < 1:
        raise ConfigError("rounds", "must be >= 1")
    if cfg.local_iterations < 1:
        raise ConfigError("local_iterations", "must be >= 1")
    if not cfg.learning_rate > 0:
        raise ConfigError("learning_rate", "must be positive")
    if cfg.step_rule not in ("gd", "adam"):
        raise ConfigError("step_rule", "must be 'gd' or 'adam'")
    if not cfg.fd_smoothing > 0:
        raise ConfigError("fd_smoothing", "must be positive")
    if cfg.fd_directions < 1:
        raise ConfigError("fd_directions", "must be >= 1")
    if not cfg.lengthscale > 0:
        raise ConfigError("lengthscale", "must be positive")
    if cfg.feature_count < 1:
        raise ConfigError("feature_count", "must be >= 1")
    if cfg.surrogate_noise_variance is not None and not cfg.surrogate_noise_variance > 0:
        raise ConfigError("surrogate_noise_variance", "must be positive when set")
    if cfg.trajectory_window is not None and cfg.trajectory_window < 1:
        raise ConfigError("trajectory_window", "must be >= 1 when set")
    if cfg.active_select < 1 or cfg.active_candidates < cfg.active_select:
        raise ConfigError("active_select", "need active_candidates >= active_select >= 1")
    if not cfg.active_radius > 0:
        raise ConfigError("active_radius", "must be positive")
    if not cfg.seeds:
        raise ConfigError("seeds", "must list at least one seed")
    if not all(isinstance(s, int) and not isinstance(s, bool) for s in cfg.seeds):
        raise ConfigError("seeds", "must be a list of integers")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    if cfg.diagnostics_verbosity not in VERBOSITY_LEVELS:
        raise ConfigError("diagnostics_verbosity", f"must be one of {VERBOSITY_LEVELS}")
    if isinstance(cfg.init_point, list):
        if len(cfg.init_point) != cfg.dimension:
            raise ConfigError("init_point", f"needs {cfg.dimension} entries")
        vals = cfg.init_point
    else:
        vals = [cfg.init_point]
    if any(not isinstance(v, (int, float)) or isinstance(v, bool) for v in vals):
        raise ConfigError("init_point", "entries must be numbers")
    if any(v < 0 or v > 1 for v in vals):
        raise ConfigError("init_point", "must lie in the unit cube")
    # gamma schedule validity is checked by its own constructor
    GammaSchedule(
        kind=cfg.gamma_kind,
        constant_value=cfg.gamma_constant,
        hetero_bound=cfg.gamma_hetero_bound,
        omega=cfg.gamma_omega,
        kappa=1.0 / cfg.lengthscale**2,
        rho=cfg.gamma_rho,
        epsilon=cfg.gamma_epsilon,
        clients=cfg.clients,
        local_iterations=cfg.local_iterations,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML config file."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML in {path}: {exc}") from exc
    if data is None:
        data = {}
    return parse_config(data)


def federation_config(cfg: ExperimentConfig, algorithm: str, seed: int) -> FederationConfig:
    """Build the per-run federation settings for one algorithm and seed."""
    gamma = GammaSchedule(
        kind=cfg.gamma_kind,
        constant_value=cfg.gamma_constant,
        hetero_bound=cfg.gamma_hetero_bound,
        omega=cfg.gamma_omega,
        kappa=1.0 / cfg.lengthscale**2,
        rho=cfg.gamma_rho,
        epsilon=cfg.gamma_epsilon,
        clients=cfg.clients,
        local_iterations=cfg.local_iterations,
    )
    return FederationConfig(
        algorithm=algorithm,
        rounds=cfg.rounds,
        local_iterations=cfg.local_iterations,
        learning_rate=cfg.learning_rate,
        step_rule=cfg.step_rule,
        gamma=gamma,
        fedprox_gamma=cfg.fedprox_gamma,
        fd=FDParams(smoothing=cfg.fd_smoothing, directions=cfg.fd_directions),
        fd_share_directions=cfg.fd_share_directions,
        active_query=ActiveQueryParams(
            enabled=cfg.active_query,
            candidates=cfg.active_candidates,
            radius=cfg.active_radius,
            select=cfg.active_select,
        ),
        round_end_query=cfg.round_end_query,
        feature_count=cfg.feature_count,
        kernel=KernelParams(lengthscale=cfg.lengthscale),
        surrogate_noise_variance=cfg.surrogate_noise_variance,
        trajectory_window=cfg.trajectory_window,
        master_seed=seed,
        shared_client_seed=cfg.shared_client_seed,
        workers=cfg.workers,
        record_iteration_diagnostics=cfg.diagnostics_verbosity == "iteration",
    )
