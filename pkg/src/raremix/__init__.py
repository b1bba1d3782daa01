"""Two-component Gaussian mixture estimation under rare events.

The package fits mixtures by fixed-point iteration on the packed parameter
vector, with or without a labeled subsample pooled in, and quantifies the
convergence rate of both mappings: finite-sample Jacobians (analytic and
finite-difference) and the population limit matrices that govern the
rare-event regime, where the slow mode approaches 1 without labels and is
damped by the labeled fraction with them.
"""

from ._backend import backend_name
from .contraction import (
    BLOCK_NAMES,
    JacobianReport,
    LimitMatrix,
    MomentBlocks,
    block_slices,
    block_spectral_radius_check,
    gaussian_moment_blocks,
    gaussian_ratio_integrals,
    jacobian_analytic,
    jacobian_fd,
    limit_matrix_M,
    limit_matrix_Mstar,
    min_contracting_kappa,
)
from .core import (
    Dataset,
    LabeledDataset,
    MixtureParams,
    duplication_matrix,
    gaussian_logpdf,
    mixture_density,
    mixture_logpdf,
    posterior,
    posterior_logodds,
    unvech,
    vech,
    vech_indices,
)
from .em import (
    FitConfig,
    FitResult,
    Termination,
    em_step,
    fit,
    init_labeled_moments,
    init_quantile_split,
    init_strategy,
    init_true_perturbed,
    loglik,
    loglik_semi,
    mem_step,
)
from .evalkit import (
    EvalSummary,
    GroupScore,
    ScoredGroup,
    auc,
    evaluate_groups,
    fp_at_full_recall,
    read_scores_csv,
    score_points,
    write_scores_csv,
)
from .exceptions import (
    ConfigError,
    CsvFormatError,
    DivergingIntegralError,
    EmptyCellError,
    EmptyComponentError,
    InitializationError,
    NumericalError,
    RareMixError,
    SchemaError,
    SingularCovarianceError,
    SymmetryError,
    UndefinedMetricError,
)
from .numerics import (
    CholFactor,
    check_symmetric,
    cholesky,
    eigenvalues,
    precision_matrix,
    spd_solve,
    spectral_radius,
)
from .simlab import (
    CellResult,
    ExperimentReport,
    RepRecord,
    SimDesign,
    aggregate,
    align_components,
    generate_dataset,
    generate_labeled,
    run_experiment,
    run_replication,
)

__version__ = "0.1.0"

__all__ = [
    "BLOCK_NAMES",
    "CellResult",
    "CholFactor",
    "ConfigError",
    "CsvFormatError",
    "Dataset",
    "DivergingIntegralError",
    "EmptyCellError",
    "EmptyComponentError",
    "EvalSummary",
    "ExperimentReport",
    "FitConfig",
    "FitResult",
    "GroupScore",
    "InitializationError",
    "JacobianReport",
    "LabeledDataset",
    "LimitMatrix",
    "MixtureParams",
    "MomentBlocks",
    "NumericalError",
    "RareMixError",
    "RepRecord",
    "SchemaError",
    "ScoredGroup",
    "SimDesign",
    "SingularCovarianceError",
    "SymmetryError",
    "Termination",
    "UndefinedMetricError",
    "aggregate",
    "align_components",
    "auc",
    "backend_name",
    "block_slices",
    "block_spectral_radius_check",
    "check_symmetric",
    "cholesky",
    "duplication_matrix",
    "eigenvalues",
    "em_step",
    "evaluate_groups",
    "fit",
    "fp_at_full_recall",
    "gaussian_logpdf",
    "gaussian_moment_blocks",
    "gaussian_ratio_integrals",
    "generate_dataset",
    "generate_labeled",
    "init_labeled_moments",
    "init_quantile_split",
    "init_strategy",
    "init_true_perturbed",
    "jacobian_analytic",
    "jacobian_fd",
    "limit_matrix_M",
    "limit_matrix_Mstar",
    "loglik",
    "loglik_semi",
    "mem_step",
    "min_contracting_kappa",
    "mixture_density",
    "mixture_logpdf",
    "posterior",
    "posterior_logodds",
    "precision_matrix",
    "read_scores_csv",
    "run_experiment",
    "run_replication",
    "score_points",
    "spd_solve",
    "spectral_radius",
    "unvech",
    "vech",
    "vech_indices",
    "write_scores_csv",
]
