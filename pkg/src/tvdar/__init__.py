"""Time-varying double autoregressive models for pegged-price deviations.

Simulation, global and kernel-localized QML estimation of DAR(1) and
tvDAR(1), Lyapunov-exponent and ``xi`` stability measures, residual
diagnostics, one-step forecasts and Monte Carlo tooling.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DarParams,
    DemeanedSeries,
    PriceSeries,
    TimePoint,
    demean_global,
    demean_local,
    rescaled_times,
)
from .estimation import (  # noqa: E402
    FitResult,
    LocalFit,
    OptimizerOptions,
    fit_dar,
    fit_tvdar,
    local_residuals,
    residuals,
)
from .exceptions import (  # noqa: E402
    FitError,
    NumericalError,
    QuadratureError,
    SimulationExplosion,
    SingularFitError,
    TvdarError,
    ValidationError,
)
from .kernels import EPANECHNIKOV, RECTANGULAR, Bandwidth, KernelSpec, weights_at  # noqa: E402
from .model import GAUSSIAN, UNIFORM_PM1, NoiseDistribution, ParamPath, simulate_dar, simulate_tvdar  # noqa: E402
from .stability import (  # noqa: E402
    lyapunov_local,
    lyapunov_plugin,
    lyapunov_quadrature,
    lyapunov_uniform,
    xi_measure,
    xi_wald_test,
)

__all__ = [
    "__version__",
    "DarParams",
    "DemeanedSeries",
    "PriceSeries",
    "TimePoint",
    "demean_global",
    "demean_local",
    "rescaled_times",
    "FitResult",
    "LocalFit",
    "OptimizerOptions",
    "fit_dar",
    "fit_tvdar",
    "local_residuals",
    "residuals",
    "FitError",
    "NumericalError",
    "QuadratureError",
    "SimulationExplosion",
    "SingularFitError",
    "TvdarError",
    "ValidationError",
    "EPANECHNIKOV",
    "RECTANGULAR",
    "Bandwidth",
    "KernelSpec",
    "weights_at",
    "GAUSSIAN",
    "UNIFORM_PM1",
    "NoiseDistribution",
    "ParamPath",
    "simulate_dar",
    "simulate_tvdar",
    "lyapunov_local",
    "lyapunov_plugin",
    "lyapunov_quadrature",
    "lyapunov_uniform",
    "xi_measure",
    "xi_wald_test",
]
