"""Command-line benchmark harness.

Three subcommands: ``run`` executes the configured algorithm(s) over every
seed and writes per-run trace CSVs plus a summary; ``compare`` additionally
pivots the traces into one wide CSV keyed by round; ``validate`` only parses
and checks the config.  Exit codes: 0 success, 1 runtime failure, 2 invalid
configuration.  CSV is the contract — plotting failures never fail a run.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import tempfile

import numpy as np

from .config import ExperimentConfig, federation_config, load_config
from .errors import ConfigError
from .federation import OptimizationTrace, run_federated_optimization
from .objectives import make_quadratic_suite

__all__ = ["main", "run_experiment", "compare_algorithms"]

OUTPUT_DIR_ENV = "FEDZOO_OUTPUT_DIR"


def _fmt(value) -> str:
    """Full round-trip precision for floats; empty string for missing values."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv_atomic(path: str, header: list, rows: list) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


TRACE_HEADER = [
    "round",
    "cum_queries",
    "cum_scalars_tx",
    "F_value",
    "conv_error",
    "mean_disparity",
    "gamma",
]


def _write_trace(trace: OptimizationTrace, path: str) -> None:
    rows = [
        (
            row.round_index,
            row.cum_queries,
            row.cum_scalars_tx,
            row.f_value,
            row.conv_error,
            row.mean_disparity,
            row.gamma,
        )
        for row in trace.rows
    ]
    _write_csv_atomic(path, TRACE_HEADER, rows)


def _write_diagnostics(trace: OptimizationTrace, path: str) -> None:
    header = ["r", "t", "i", "xi", "cosine", "gamma_used", "gamma_star"]
    rows = [
        (rec.round_index, rec.iteration, rec.client, rec.disparity, rec.cosine, rec.gamma_used, rec.gamma_star)
        for rec in trace.disparity_records
    ]
    _write_csv_atomic(path, header, rows)


def _output_dir(cfg: ExperimentConfig) -> str:
    out = os.environ.get(OUTPUT_DIR_ENV) or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _algorithms(cfg: ExperimentConfig, override=None) -> list[str]:
    if override:
        return override
    return cfg.algorithms if cfg.algorithms else [cfg.algorithm]


def _execute(cfg: ExperimentConfig, algorithms: list[str]) -> dict:
    """Run every (algorithm, seed) pair on per-seed shared suites.

    All algorithms for a given seed face the identical objective draw: the
    suite depends only on ``problem_seed + seed``, never on the algorithm.
    """
    traces: dict[str, list[OptimizationTrace]] = {a: [] for a in algorithms}
    for algorithm in algorithms:
        for seed in cfg.seeds:
            suite = make_quadratic_suite(
                cfg.dimension,
                cfg.clients,
                cfg.heterogeneity,
                cfg.noise_std,
                seed=cfg.problem_seed + seed,
            )
            fed = federation_config(cfg, algorithm, seed)
            if isinstance(cfg.init_point, list):
                x0 = np.asarray(cfg.init_point, dtype=float)
            else:
                x0 = np.full(cfg.dimension, float(cfg.init_point))
            try:
                trace = run_federated_optimization(fed, suite, x0)
            except Exception as exc:
                raise RuntimeError(f"algorithm {algorithm}, seed {seed}: {exc}") from exc
            traces[algorithm].append(trace)
    return traces


def _write_outputs(cfg: ExperimentConfig, traces: dict, out: str) -> list[str]:
    """Trace, diagnostics, and summary CSVs; returns the paths written."""
    written = []
    summary_rows = []
    for algorithm, runs in traces.items():
        finals = []
        for seed, trace in zip(cfg.seeds, runs):
            path = os.path.join(out, f"trace_{algorithm}_{seed}.csv")
            _write_trace(trace, path)
            written.append(path)
            if cfg.diagnostics_verbosity == "iteration" and trace.disparity_records:
                dpath = os.path.join(out, f"diagnostics_{algorithm}_{seed}.csv")
                _write_diagnostics(trace, dpath)
                written.append(dpath)
            last = trace.rows[-1]
            finals.append(last)
            summary_rows.append(
                (
                    algorithm,
                    seed,
                    last.round_index,
                    last.f_value,
                    last.conv_error,
                    last.cum_queries,
                    last.cum_scalars_tx,
                )
            )
        errors = [row.conv_error for row in finals]
        summary_rows.append(
            (
                algorithm,
                "median",
                finals[0].round_index,
                float(np.median([row.f_value for row in finals])),
                None if any(e is None for e in errors) else float(np.median(errors)),
                int(np.median([row.cum_queries for row in finals])),
                int(np.median([row.cum_scalars_tx for row in finals])),
            )
        )
    spath = os.path.join(out, "summary.csv")
    _write_csv_atomic(
        spath,
        ["algorithm", "seed", "rounds", "final_F", "final_conv_error", "total_queries", "total_scalars_tx"],
        summary_rows,
    )
    written.append(spath)
    return written


def _maybe_plot(cfg: ExperimentConfig, traces: dict, out: str) -> None:
    if not cfg.emit_plots:
        return
    try:
        from .plotting import plot_comparison, plot_convergence

        for algorithm, runs in traces.items():
            plot_convergence(runs, algorithm, os.path.join(out, f"convergence_{algorithm}.png"))
        if len(traces) > 1:
            plot_comparison(traces, os.path.join(out, "comparison.png"))
    except Exception as exc:  # plotting is best-effort, CSV is the contract
        print(f"warning: plotting skipped ({exc})", file=sys.stderr)


def run_experiment(config_path: str) -> int:
    cfg = load_config(config_path)
    out = _output_dir(cfg)
    algorithms = _algorithms(cfg)
    traces = _execute(cfg, algorithms)
    if cfg.dump_coefficients:
        suite = make_quadratic_suite(
            cfg.dimension,
            cfg.clients,
            cfg.heterogeneity,
            cfg.noise_std,
            seed=cfg.problem_seed + cfg.seeds[0],
        )
        suite.dump_coefficients(os.path.join(out, "coefficients.csv"))
    written = _write_outputs(cfg, traces, out)
    _maybe_plot(cfg, traces, out)
    for path in written:
        print(path)
    return 0


def compare_algorithms(config_path: str, algorithms: list[str]) -> int:
    cfg = load_config(config_path)
    for a in algorithms:
        # reuse the config validator's vocabulary check
        from .federation import ALGORITHMS

        if a not in ALGORITHMS:
            raise ConfigError("algorithms", f"{a!r} is not one of {ALGORITHMS}")
    out = _output_dir(cfg)
    traces = _execute(cfg, algorithms)
    written = _write_outputs(cfg, traces, out)

    # wide pivot: one convergence-error column per (algorithm, seed)
    header = ["round"]
    columns = []
    for algorithm in algorithms:
        for seed, trace in zip(cfg.seeds, traces[algorithm]):
            header.append(f"{algorithm}_seed{seed}")
            columns.append([row.conv_error for row in trace.rows])
    n_rounds = len(columns[0])
    rows = [
        tuple([r] + [col[r] for col in columns])
        for r in range(n_rounds)
    ]
    cpath = os.path.join(out, "comparison.csv")
    _write_csv_atomic(cpath, header, rows)
    written.append(cpath)
    _maybe_plot(cfg, traces, out)
    for path in written:
        print(path)
    return 0


def validate_config(config_path: str) -> int:
    load_config(config_path)
    print("config ok")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedzoo",
        description="Federated zeroth-order optimization benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the configured experiment")
    p_run.add_argument("config", help="path to the YAML config file")
    p_cmp = sub.add_parser("compare", help="run several algorithms on shared suites")
    p_cmp.add_argument("config", help="path to the YAML config file")
    p_cmp.add_argument(
        "--algorithms",
        required=True,
        help="comma-separated algorithm names, e.g. fedzo,fzoos",
    )
    p_val = sub.add_parser("validate", help="check a config file and exit")
    p_val.add_argument("config", help="path to the YAML config file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(args.config)
        if args.command == "compare":
            names = [a.strip() for a in args.algorithms.split(",") if a.strip()]
            if not names:
                raise ConfigError("algorithms", "no algorithm names given")
            return compare_algorithms(args.config, names)
        return validate_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
