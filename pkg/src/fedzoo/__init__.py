"""fedzoo: federated zeroth-order optimization with trajectory-informed
surrogate gradients, plus finite-difference baselines and a benchmark CLI."""

from .config import ExperimentConfig, federation_config, load_config, parse_config
from .diagnostics import (
    DisparityRecord,
    cosine_similarity,
    gradient_disparity,
    optimal_gamma,
    rho_estimate,
)
from .errors import ConfigError, NumericalError
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
    unified_gradient,
)
from .federation import (
    ALGORITHMS,
    ActiveQueryParams,
    ClientState,
    FederationConfig,
    OptimizationTrace,
    TraceRow,
    active_query_selection,
    client_local_round,
    expected_total_queries,
    expected_total_scalars,
    run_federated_optimization,
    server_aggregate,
)
from .kernels import (
    KernelParams,
    RFFBasis,
    cross_hessian_diag,
    kernel_eval,
    kernel_grad_first,
    kernel_grad_first_batch,
    kernel_matrix,
    rff_feature_jacobian,
    rff_features,
    rff_features_matrix,
    sample_rff_basis,
)
from .objectives import DomainMap, QuadraticSuite, make_quadratic_suite
from .surrogate import (
    GradientPosterior,
    TrajectoryDataset,
    WeightVector,
    aggregate_weight_vectors,
    batched_uncertainty_norms,
    compute_weight_vector,
    posterior_gradient,
    posterior_mean_value,
    solve_spd,
    surrogate_gradient_from_weights,
    uncertainty_norm,
)

__version__ = "0.1.0"
