"""Structural break detection and dating for functional time series.

The fully functional route works directly with L2 norms of the functional
CUSUM process, avoiding dimension reduction: a max-type detector with Monte
Carlo critical values from the long-run covariance spectrum, a break date
estimator with simulation-based confidence intervals, fPCA-based competitor
statistics, and the simulation laboratory used to study them.
"""

from .basis import (
    Curve,
    CurveSeries,
    DegenerateFitError,
    EigenSystem,
    FourierBasis,
    KernelMatrix,
    eigen_decompose,
    evaluate,
    fit_curve,
    inner_product,
    project_to_basis,
)
from .dating import (
    DatingReport,
    LimitProcessConfig,
    confidence_interval,
    date_break,
    estimate_break_date,
    estimate_break_function,
    no_break_argmax_sample,
    sigma2_hat,
    simulate_fixed_break_limit,
    simulate_xi,
)
from .detect import (
    DetectionReport,
    NullLimitSample,
    cusum_norm_sq,
    cusum_paths,
    detector_stat,
    simulate_null_limit,
)
from .detect import test as detect_break
from .fpca import (
    FpcaModel,
    RankError,
    aligned_statistic,
    fit_fpca,
    fpca_statistic,
    sample_cov_kernel,
    tve_dimension,
)
from .longrun import (
    LongRunConfig,
    WeightFunction,
    autocov_kernel,
    bandwidth,
    estimate_longrun,
    longrun_kernel,
    trace,
    weight,
)
from .simlab import (
    BreakSpec,
    DgpConfig,
    ExperimentResult,
    break_function,
    far1_longrun_trace,
    gen_errors,
    gen_far1,
    gen_innovations,
    insert_break,
    run_experiment,
    sigma_vector,
    snr_to_c,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
