"""Vaccine effects on post-infection outcomes in principal strata."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout
    __version__ = "0.1.0"

from .dataset import CellStats, Observation, TrialData, cell_stats, load_csv  # noqa: E402
from .nuisance import (NuisanceSet, NuisanceValues, RegressionSpec, fit_logistic, fit_model,  # noqa: E402
                       fit_nuisance_set, predict)
from .functionals import (EstimandId, PointEstimate, eta0, eta1, marginal_mean, psi0, psi1_both,  # noqa: E402
                          psi1_er, psi1_pi, stratum_probabilities)
from .onestep import EstimateReport, GradientId, contrast, gradient, one_step  # noqa: E402
from .bounds import BootstrapSpec, BoundsReport, bounds_adjusted, bounds_bootstrap, bounds_unadjusted  # noqa: E402
from .sensitivity import SensitivityCurve, psi1_eps, sensitivity_sweep  # noqa: E402

__all__ = [
    "__version__", "CellStats", "Observation", "TrialData", "cell_stats", "load_csv",
    "NuisanceSet", "NuisanceValues", "RegressionSpec", "fit_logistic", "fit_model", "fit_nuisance_set",
    "predict", "EstimandId", "PointEstimate", "eta0", "eta1", "marginal_mean", "psi0", "psi1_both",
    "psi1_er", "psi1_pi", "stratum_probabilities", "EstimateReport", "GradientId", "contrast",
    "gradient", "one_step", "BootstrapSpec", "BoundsReport", "bounds_adjusted", "bounds_bootstrap",
    "bounds_unadjusted", "SensitivityCurve", "psi1_eps", "sensitivity_sweep",
]
