"""Sparse Pauli Dynamics simulation and Clifford-trained error mitigation."""

from .circuit import (
    IsingSpec,
    Layer,
    ParamCircuit,
    build_hardware_efficient,
    build_ising_trotter,
    normalize_angles,
)
from .pauli import CliffordTableau, Gate, Observable, PauliWord, commutes, conjugate, multiply
from .spd import (
    SparseInitialState,
    mse_bound,
    spd_expectation,
    theorem_threshold,
    worst_case_bound,
)

__all__ = [
    "CliffordTableau",
    "Gate",
    "IsingSpec",
    "Layer",
    "Observable",
    "ParamCircuit",
    "PauliWord",
    "SparseInitialState",
    "build_hardware_efficient",
    "build_ising_trotter",
    "commutes",
    "conjugate",
    "mse_bound",
    "multiply",
    "normalize_angles",
    "spd_expectation",
    "theorem_threshold",
    "worst_case_bound",
]
