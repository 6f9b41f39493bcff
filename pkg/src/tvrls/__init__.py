"""Recursive least squares with time-varying regularization.

Library layout:

* ``linalg``      — dense symmetric kernels (Cholesky, eigen, inversion lemma)
* ``schedules``   — constant, fading, and rank-1 fading regularization
* ``estimators``  — batch oracle plus the four recursive estimators
* ``analysis``    — error dynamics, attractivity bound, excitation monitor
* ``experiments`` — data generation, runs, Monte Carlo, timing benchmarks
* ``reports``     — CSV/metadata emission and SVG figures
* ``cli``         — ``tvrls`` command-line entry point
"""

__version__ = "0.1.0"

from .analysis import (
    ExcitationMonitor,
    TrueModel,
    attractivity_bound,
    closed_form_error,
    detect_k_rank,
    propagate_error,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    EstimationError,
    NoConvergence,
    NotPositiveDefinite,
    RankNotAttained,
    SingularInnerMatrix,
)
from .estimators import (
    ESTIMATOR_KINDS,
    EstimatorState,
    MeasurementTriple,
    batch_solve,
    make_estimator,
    mil_init,
    r1fr_update,
    rls_mil_update,
    tvr_init,
    tvr_update,
)
from .experiments import (
    DataConfig,
    ErrorTrace,
    ExperimentConfig,
    McSummary,
    ScheduleConfig,
    TimingSummary,
    gen_data,
    run_monte_carlo,
    run_single,
    run_timing,
)
from .linalg import (
    CholFactor,
    EigenPair,
    chol_factor,
    chol_solve,
    lambda_extreme,
    mil_update,
    quad_minimizer,
    spd_inverse,
    sym_eigen,
    symmetrize,
)
from .schedules import (
    ConstantSchedule,
    FadingParams,
    FadingSchedule,
    R1FRParams,
    Rank1FadingSchedule,
    RegDelta,
    r1fr_closed_form,
)
