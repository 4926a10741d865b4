"""End-to-end acceptance suite.

Each test is one acceptance criterion, self-contained, with its tolerance and
any stated runtime budget asserted directly.  The heavier experiment
reproductions (criteria 6 and 7) run the full federation at desk scale.
"""

import os
import time

import numpy as np
import pytest

from fedzoo.diagnostics import gradient_disparity, optimal_gamma
from fedzoo.estimators import GammaSchedule, unified_gradient
from fedzoo.federation import (
    ActiveQueryParams,
    FederationConfig,
    expected_total_queries,
    expected_total_scalars,
    run_federated_optimization,
)
from fedzoo.kernels import (
    KernelParams,
    kernel_eval,
    rff_feature_jacobian,
    rff_features,
    rff_features_matrix,
    sample_rff_basis,
)
from fedzoo.objectives import make_quadratic_suite
from fedzoo.surrogate import (
    TrajectoryDataset,
    compute_weight_vector,
    posterior_gradient,
    posterior_mean_value,
    surrogate_gradient_from_weights,
    uncertainty_norm,
)


def test_criterion_1_rff_fidelity():
    """Feature dot products track the kernel: max error < 0.05 per basis,
    median of the per-seed maxima < 0.03, all within 10 seconds."""
    start = time.time()
    rng = np.random.default_rng(0)
    kernel = KernelParams(lengthscale=1.0)
    pairs = [(rng.uniform(0, 1, 5), rng.uniform(0, 1, 5)) for _ in range(100)]
    targets = np.array([kernel_eval(x, y, kernel) for x, y in pairs])
    maxima = []
    for seed in range(20):
        basis = sample_rff_basis(10000, 5, kernel, seed=seed)
        approx = np.array(
            [rff_features(basis, x) @ rff_features(basis, y) for x, y in pairs]
        )
        maxima.append(np.max(np.abs(approx - targets)))
    assert max(maxima) < 0.05
    assert np.median(maxima) < 0.03
    assert time.time() - start < 10.0


def test_criterion_2_weight_vector_identity():
    """The compressed-weight gradient equals the directly assembled RFF
    posterior gradient to 1e-10."""
    rng = np.random.default_rng(1)
    kernel = KernelParams(lengthscale=0.8)
    for trial in range(20):
        n = int(rng.integers(3, 51))
        d = int(rng.integers(1, 11))
        X = rng.uniform(0, 1, (n, d))
        y = rng.standard_normal(n)
        noise = 0.05
        traj = TrajectoryDataset(dimension=d, noise_variance=noise)
        for xi, yi in zip(X, y):
            traj.append(xi, yi)
        basis = sample_rff_basis(256, d, kernel, seed=trial)
        w = compute_weight_vector(traj, basis)
        # independent oracle: the M x M ridge solve, equal by the push-through
        # identity Phi (Phi^T Phi + s I)^{-1} = (Phi Phi^T + s I)^{-1} Phi
        Phi = rff_features_matrix(basis, X)  # (M, n)
        w_direct = np.linalg.solve(
            Phi @ Phi.T + noise * np.eye(basis.feature_count), Phi @ y
        )
        for _ in range(5):
            x = rng.uniform(0, 1, d)
            direct = rff_feature_jacobian(basis, x).T @ w_direct
            via_w = surrogate_gradient_from_weights(basis, w, x)
            assert np.linalg.norm(via_w - direct) < 1e-10


def test_criterion_3_derived_gp_correctness():
    """Posterior gradient is the derivative of the posterior mean, and the
    uncertainty contraction ratios stay inside the theoretical bracket."""
    rng = np.random.default_rng(2)
    sigma = 1e-3
    traj = TrajectoryDataset(dimension=1, noise_variance=sigma**2)
    X = np.linspace(0.0, 1.0, 40)
    for x in X:
        traj.append(np.array([x]), np.sin(2 * np.pi * x) + sigma * rng.standard_normal())
    kernel = KernelParams(lengthscale=0.2)
    eps = 1e-5
    for x0 in rng.uniform(0.1, 0.9, 10):
        g = posterior_gradient(traj, kernel, np.array([x0])).mean[0]
        mu_p = posterior_mean_value(traj, kernel, np.array([x0 + eps]))
        mu_m = posterior_mean_value(traj, kernel, np.array([x0 - eps]))
        assert abs(g - (mu_p - mu_m) / (2 * eps)) < 1e-3

    sigma2 = sigma**2
    growing = TrajectoryDataset(dimension=1, noise_variance=sigma2)
    probe = np.array([0.5])
    norms = []
    for x in X[:15]:
        growing.append(np.array([x]), np.sin(2 * np.pi * x))
        norms.append(uncertainty_norm(posterior_gradient(growing, kernel, probe)))
    lower = 1.0 / (1.0 + 1.0 / sigma2)
    for a, b in zip(norms, norms[1:]):
        assert lower - 1e-6 <= b / a <= 1.0 + 1e-6


def test_criterion_4_optimal_gamma_witness():
    """Grid argmin of the disparity matches the closed-form correction length,
    and perfect alignment drives the disparity to numerical zero."""
    rng = np.random.default_rng(3)
    grid = np.linspace(-1.0, 2.0, 301)
    step = grid[1] - grid[0]
    for _ in range(100):
        d = int(rng.integers(2, 12))
        g = rng.standard_normal(d)
        grad_true = rng.standard_normal(d)
        corr = rng.standard_normal(d)
        # rescale the correction so the optimum falls inside the sweep
        corr = corr * (optimal_gamma(grad_true, g, corr) / rng.uniform(0.1, 0.9))
        gstar = optimal_gamma(grad_true, g, corr)
        xi = [gradient_disparity(unified_gradient(g, corr, t), grad_true) for t in grid]
        assert abs(grid[int(np.argmin(xi))] - gstar) <= step + 1e-12
    for _ in range(10):
        g = rng.standard_normal(6)
        grad_true = rng.standard_normal(6)
        aligned = grad_true - g
        assert gradient_disparity(unified_gradient(g, aligned, 1.0), grad_true) < 1e-20


def test_criterion_5_query_ledger():
    """Recorded cumulative queries equal the closed-form ledger for every
    algorithm, and the per-client-round budgets show the 3.5x reduction."""
    suite_args = dict(d=4, N=3, C=2.0, sigma=0.01)
    for algorithm in ("fedzo", "fedprox", "scaffold1", "scaffold2", "fzoos"):
        for active, round_end in ((True, False), (False, False), (True, True)):
            suite = make_quadratic_suite(
                suite_args["d"], suite_args["N"], suite_args["C"], suite_args["sigma"], seed=0
            )
            cfg = FederationConfig(
                algorithm=algorithm,
                rounds=2,
                local_iterations=3,
                feature_count=64,
                active_query=ActiveQueryParams(
                    enabled=active, candidates=10, radius=0.01, select=5
                ),
                round_end_query=round_end,
                master_seed=0,
            )
            trace = run_federated_optimization(cfg, suite, np.full(4, 0.5))
            expected = expected_total_queries(cfg, suite_args["N"])
            assert trace.rows[-1].cum_queries == expected
            assert int(suite.query_counts.sum()) == expected
            assert trace.rows[-1].cum_scalars_tx == expected_total_scalars(
                cfg, suite_args["N"], suite_args["d"]
            )
    # the efficiency headline: T*(1+5) vs T*(Q+1) with the Q=20 default
    fzoos = FederationConfig(algorithm="fzoos", rounds=1, local_iterations=10)
    fedzo = FederationConfig(algorithm="fedzo", rounds=1, local_iterations=10)
    assert expected_total_queries(fedzo, 1) / expected_total_queries(fzoos, 1) == 3.5


def test_criterion_6_cosine_ordering():
    """Within one round, the surrogate estimate aligns better with the true
    global gradient than every finite-difference baseline, on a smaller query
    budget, in the median over 5 seeds."""
    start = time.time()

    def mean_cosine(algorithm, seed):
        suite = make_quadratic_suite(10, 5, 5.0, 0.001, seed=seed)
        cfg = FederationConfig(
            algorithm=algorithm,
            rounds=1,
            local_iterations=20,
            step_rule="adam",
            feature_count=2000,
            kernel=KernelParams(lengthscale=0.316),
            active_query=ActiveQueryParams(enabled=True, candidates=100, radius=0.01, select=5),
            master_seed=seed,
            record_iteration_diagnostics=True,
        )
        trace = run_federated_optimization(cfg, suite, np.full(10, 0.75))
        cos = [r.cosine for r in trace.disparity_records if r.cosine is not None]
        return float(np.mean(cos)), trace.rows[-1].cum_queries

    medians = {}
    budgets = {}
    for algorithm in ("fzoos", "fedzo", "fedprox", "scaffold1", "scaffold2"):
        results = [mean_cosine(algorithm, seed) for seed in range(5)]
        medians[algorithm] = np.median([r[0] for r in results])
        budgets[algorithm] = max(r[1] for r in results)
    for baseline in ("fedzo", "fedprox", "scaffold1", "scaffold2"):
        assert medians["fzoos"] > medians[baseline], (
            f"cosine ordering violated: fzoos {medians['fzoos']:.4f} "
            f"vs {baseline} {medians[baseline]:.4f}"
        )
        assert budgets["fzoos"] <= budgets[baseline]
    assert time.time() - start < 120.0


def _criterion_7_config(algorithm, seed, hetero_bound):
    lengthscale = 0.316
    gamma = GammaSchedule(
        kind="theoretical",
        hetero_bound=hetero_bound,
        omega=1.0,
        kappa=1.0 / lengthscale**2,
        rho=1.0,
        epsilon=0.0,
        clients=5,
        local_iterations=10,
    )
    return FederationConfig(
        algorithm=algorithm,
        rounds=50,
        local_iterations=10,
        step_rule="adam",
        gamma=gamma,
        feature_count=2000,
        kernel=KernelParams(lengthscale=lengthscale),
        trajectory_window=96,
        active_query=ActiveQueryParams(enabled=True, candidates=15, radius=0.01, select=5),
        master_seed=seed,
    )


def test_criterion_7_heterogeneity_ordering():
    """At every heterogeneity level the surrogate algorithm ends below the
    uncorrected baselines, and rounds-to-threshold grows with heterogeneity
    for every algorithm. Full sweep under 10 minutes."""
    start = time.time()
    algorithms = ("fzoos", "fedzo", "fedprox", "scaffold1", "scaffold2")
    seeds = (0, 1, 2)
    threshold = 0.05
    final_err = {}
    rounds_to = {}
    for C in (0.5, 5.0, 50.0):
        for algorithm in algorithms:
            errs, r2t = [], []
            for seed in seeds:
                suite = make_quadratic_suite(30, 5, C, 0.001, seed=seed)
                G = suite.heterogeneity_bound(100, np.random.default_rng(seed))
                cfg = _criterion_7_config(algorithm, seed, G)
                trace = run_federated_optimization(cfg, suite, np.full(30, 0.75))
                errs.append(trace.rows[-1].conv_error)
                hit = next(
                    (r.round_index for r in trace.rows if r.conv_error <= threshold),
                    np.inf,
                )
                r2t.append(hit)
            final_err[(C, algorithm)] = float(np.median(errs))
            rounds_to[(C, algorithm)] = float(np.median(r2t))
    for C in (0.5, 5.0, 50.0):
        for baseline in ("fedzo", "fedprox"):
            assert final_err[(C, "fzoos")] < final_err[(C, baseline)], (
                f"C={C}: fzoos {final_err[(C, 'fzoos')]:.5f} "
                f"not below {baseline} {final_err[(C, baseline)]:.5f}"
            )
    for algorithm in algorithms:
        seq = [rounds_to[(C, algorithm)] for C in (0.5, 5.0, 50.0)]
        assert seq[0] <= seq[1] <= seq[2], f"{algorithm}: rounds-to-threshold {seq}"
    assert time.time() - start < 600.0


def test_criterion_8_homogeneity_collapse():
    """With identical clients and shared seeds, federation is a no-op: every
    algorithm's iterate sequence equals the single-client run, exactly, and
    the surrogate correction is identically zero."""

    def iterate_matrix(algorithm, n_clients, gamma=None):
        suite = make_quadratic_suite(3, n_clients, 0.0, 0.01, seed=0)
        kw = {}
        if gamma is not None:
            kw["gamma"] = gamma
        cfg = FederationConfig(
            algorithm=algorithm,
            rounds=3,
            local_iterations=4,
            feature_count=128,
            active_query=ActiveQueryParams(enabled=True, candidates=10, radius=0.01, select=3),
            shared_client_seed=True,
            master_seed=0,
            record_iteration_diagnostics=True,
            **kw,
        )
        trace = run_federated_optimization(cfg, suite, np.full(3, 0.5))
        return np.array([row.iterate for row in trace.rows]), trace

    # 4 clients: power-of-two averaging keeps the collapse bit-exact
    for algorithm in ("fedzo", "fedprox", "scaffold1", "scaffold2", "fzoos"):
        multi, _ = iterate_matrix(algorithm, 4)
        single, _ = iterate_matrix(algorithm, 1)
        assert np.array_equal(multi, single), f"{algorithm} collapse not exact"

    force = GammaSchedule(kind="constant", constant_value=1.0)
    multi, trace = iterate_matrix("fzoos", 4, gamma=force)
    # zero correction: the closed-form optimal length is undefined at every step
    assert all(rec.gamma_star is None for rec in trace.disparity_records)
    baseline, _ = iterate_matrix("fzoos", 4)
    assert np.array_equal(multi, baseline)


def test_criterion_9_worker_count_determinism(tmp_path, monkeypatch):
    """The comparison run writes byte-identical CSVs regardless of how many
    client workers execute it."""
    import yaml

    from fedzoo.cli import main

    outputs = {}
    for workers in (1, 3):
        out = tmp_path / f"out_w{workers}"
        config = {
            "dimension": 5,
            "clients": 4,
            "heterogeneity": 2.0,
            "noise_std": 0.01,
            "rounds": 3,
            "local_iterations": 5,
            "feature_count": 200,
            "active_candidates": 20,
            "seeds": [0, 1],
            "workers": workers,
            "emit_plots": False,
            "output_dir": str(out),
        }
        path = tmp_path / f"cfg_w{workers}.yaml"
        with open(path, "w") as fh:
            yaml.safe_dump(config, fh)
        monkeypatch.delenv("FEDZOO_OUTPUT_DIR", raising=False)
        assert main(["compare", str(path), "--algorithms", "fedzo,fedprox,scaffold1,scaffold2,fzoos"]) == 0
        outputs[workers] = {
            name: (out / name).read_bytes()
            for name in sorted(os.listdir(out))
            if name.endswith(".csv")
        }
    assert outputs[1].keys() == outputs[3].keys()
    for name in outputs[1]:
        assert outputs[1][name] == outputs[3][name], f"{name} differs across worker counts"
