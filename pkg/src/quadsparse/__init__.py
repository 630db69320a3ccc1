"""Sparse signal recovery from quadratic measurements y_i = x^T A_i x."""
__version__ = "0.1.0"

from .ensemble import (CapacityError, MeasurementEnsemble, NoiseSpec, Observations,
                       SparseSignal, gen_ensemble, gen_signal, measure, objective)
from .estimators import (GradientDescentProxy, SparseGaussNewton, SpectralInitializer,
                         ThresholdedGradientProxy, ThresholdedSpectralInitializer)
from .identifiability import CollisionReport, collision_search, s1_injectivity_check
from .metrics import SUCCESS_THRESHOLD, TrialOutcome, dist, rel_error
from .sgn import SolveTrace, SolverConfig, solve
from .spectral import initialize

__all__ = [
    "CapacityError", "MeasurementEnsemble", "NoiseSpec", "Observations", "SparseSignal",
    "gen_ensemble", "gen_signal", "measure", "objective",
    "GradientDescentProxy", "SparseGaussNewton", "SpectralInitializer",
    "ThresholdedGradientProxy", "ThresholdedSpectralInitializer",
    "CollisionReport", "collision_search", "s1_injectivity_check",
    "SUCCESS_THRESHOLD", "TrialOutcome", "dist", "rel_error",
    "SolveTrace", "SolverConfig", "solve", "initialize",
]
