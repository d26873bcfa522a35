"""Error mitigation: ZNE fits, ridge-trained CPDR and learning-based PEC."""

from .regression import CPDR_ALPHA, RidgeFit, SingularSystemError, ridge_fit
from .training import (
    SimulatorBackend,
    TrainingSample,
    build_clifford_training_set,
    build_cpdr_training_set,
    build_insertion_set,
    cpdr_pec_mitigate,
    cpdr_zne_mitigate,
    fit_training_set,
    ising_training_grid,
)
from .zne import DEFAULT_LEVELS, NoiseLevelSet, richardson_weights, zne_extrapolate

__all__ = [
    "CPDR_ALPHA",
    "DEFAULT_LEVELS",
    "NoiseLevelSet",
    "RidgeFit",
    "SimulatorBackend",
    "SingularSystemError",
    "TrainingSample",
    "build_clifford_training_set",
    "build_cpdr_training_set",
    "build_insertion_set",
    "cpdr_pec_mitigate",
    "cpdr_zne_mitigate",
    "fit_training_set",
    "ising_training_grid",
    "richardson_weights",
    "ridge_fit",
    "zne_extrapolate",
]
