"""Least-squares prediction of stationary continuous-time processes from their spectral density."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    CtpredictError,
    DegenerateDensityError,
    DomainError,
    FactorizationError,
    IllConditionedError,
    InsufficientDataError,
    RegularityError,
    TruncationError,
    UsageError,
    ValidationError,
    WindowError,
)
from .oracle import (  # noqa: E402
    OracleProblem,
    OracleSolution,
    compare,
    finite_section_problem,
    levinson_solve,
    solve_projection,
    whole_past_problem,
)
from .predictor import (  # noqa: E402
    InnovationSeries,
    PredictionReport,
    PredictorSpec,
    PsiSamples,
    apply_predictor,
    innovations_from_noise,
    predict_finite_section,
    predict_whole_past,
    prediction_function,
    whiten_path,
)
from .simulate import McReport, SamplePath, monte_carlo_mse, simulate_ma, simulate_spectral  # noqa: E402
from .specmodel import (  # noqa: E402
    BandLimited,
    CovarianceFunction,
    Gaussian,
    Rational,
    RegularityReport,
    SpectralModel,
    covariance_from_density,
    density_from_covariance,
    szego_integral,
    szego_trajectory,
)
from .szego import SzegoFactor, factorize, log_integral_check, log_integral_sides, verify_factor  # noqa: E402
