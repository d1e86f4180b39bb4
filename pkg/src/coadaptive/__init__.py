"""Co-adaptive Lasso: group-pooled adaptive reweighting for sparse regression."""

from .data import Dataset, GroupStructure, SparsityPattern, estimation_error, s_tilde, standardize
from .estimators import (
    AdaptiveLassoCV,
    CoAdaptiveLassoCV,
    GroupLasso,
    GroupLassoCV,
    LassoCV,
    WeightedLasso,
)
from .exceptions import (
    AllExcludedError,
    ConstantColumnWarning,
    DimensionMismatchError,
    IndexOutOfRangeError,
    NonConvergenceError,
    NonFiniteError,
    SchemeGroupMismatchError,
    SingularGramError,
    SpecInvalidError,
    TooLargeForExactError,
)
from .group_lasso import fit_group_lasso, fit_group_lasso_path, group_lambda_max
from .model_selection import CvPlan, TwoStageResult, cross_validate, fit_two_stage
from .re_diagnostics import (
    ReEstimate,
    ReQuery,
    check_lemma_chain,
    condition_report,
    group_re_statistic,
    re_statistic,
)
from .simulation import (
    ScenarioSpec,
    SimulationReport,
    generate_instance,
    generate_overlap_instance,
    benchmark_scenario,
    run_benchmark,
)
from .solver import (
    FitResult,
    LambdaPath,
    fit_lasso_path,
    fit_weighted_lasso,
    kkt_residual,
    lambda_grid,
    lambda_max,
    objective,
    soft_threshold,
)
from .weights import WeightScheme, compute_weights, weight_separation_stats

__version__ = "0.1.0"
