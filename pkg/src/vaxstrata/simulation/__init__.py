"""Data-generating processes, ground truth and replication studies."""
from .dgp import (COVARIATE_NAMES, DOOMED, IMMUNE, PROTECTED, STRATUM_NAMES, DgpSpec, PotentialLedger,
                  generate, probabilities, true_nuisances)
from .power import PowerSurface, power_surface
from .robustness import Combination, CombinationResult, minimal_combinations, robustness_study
from .study import StudyResult, parse_estimator, run_study
from .truth import PopulationBounds, TruthRecord, population_bounds, rd_mapping, truth, truth_exact, truth_monte_carlo

__all__ = [
    "COVARIATE_NAMES", "DOOMED", "IMMUNE", "PROTECTED", "STRATUM_NAMES", "DgpSpec", "PotentialLedger",
    "generate", "probabilities", "true_nuisances", "PowerSurface", "power_surface", "Combination",
    "CombinationResult", "minimal_combinations", "robustness_study", "StudyResult", "parse_estimator",
    "run_study", "PopulationBounds", "TruthRecord", "population_bounds", "rd_mapping", "truth",
    "truth_exact", "truth_monte_carlo",
]
