"""Lasso/least-angle-regression solution paths, sequential significance
tests, stopping rules, and the simulation experiments built on them."""

__version__ = "0.1.0"

from .numkit import (
    NumericalError,
    RandomStream,
    SingularMatrixError,
    gaussian_draws,
    least_squares,
    std_normal_cdf,
    std_normal_quantile,
    std_normal_upper_tail,
)
from .lasso_path import (
    ConvergenceError,
    PathTrace,
    StepwiseTrace,
    forward_stepwise,
    lar_path,
    lasso_at,
    restricted_lasso,
)
from .seltests import (
    DegenerateKnotError,
    EstimationError,
    ExtremeValueConstants,
    TestOutcome,
    cov_pvalue,
    cov_stat_fit_form,
    cov_stat_knot_form,
    criterion_diff_stat,
    gap_stat,
    gumbel_pvalue,
    infer_knot_constant,
    spacing_pvalue,
    tmax_conditional_pvalue,
    tmax_mc_pvalue,
)
from .stopping import StopDecision, first_exceed, forward_stop
from .simlab import (
    DesignSpec,
    MetricsRow,
    SignalSpec,
    classic_metrics,
    equicorr_limit_experiment,
    fdr_experiment,
    generate_design,
    generate_response,
    qq_experiment,
    screening_experiment,
    uvr_metric,
)

__all__ = [
    "__version__",
    "NumericalError",
    "SingularMatrixError",
    "ConvergenceError",
    "DegenerateKnotError",
    "EstimationError",
    "RandomStream",
    "gaussian_draws",
    "least_squares",
    "std_normal_cdf",
    "std_normal_quantile",
    "std_normal_upper_tail",
    "PathTrace",
    "StepwiseTrace",
    "lar_path",
    "lasso_at",
    "restricted_lasso",
    "forward_stepwise",
    "TestOutcome",
    "ExtremeValueConstants",
    "cov_stat_fit_form",
    "criterion_diff_stat",
    "cov_stat_knot_form",
    "infer_knot_constant",
    "cov_pvalue",
    "spacing_pvalue",
    "tmax_mc_pvalue",
    "tmax_conditional_pvalue",
    "gumbel_pvalue",
    "gap_stat",
    "StopDecision",
    "forward_stop",
    "first_exceed",
    "DesignSpec",
    "SignalSpec",
    "MetricsRow",
    "generate_design",
    "generate_response",
    "screening_experiment",
    "qq_experiment",
    "fdr_experiment",
    "equicorr_limit_experiment",
    "uvr_metric",
    "classic_metrics",
]
