"""Training sets for learned mitigation.

Features are noisy expectations of a circuit, either at several noise levels
(ZNE-style) or with single Pauli insertions (PEC-style).  References are
noiseless values: SPD for Clifford-perturbation circuits, or the dense oracle
when asked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..circuit import ParamCircuit, normalize_angles
from ..densesim import InsertionOp, NoiseModel, exact_expectation, noisy_term_values, sample_terms
from ..pauli import Observable
from ..spd import spd_expectation
from .regression import RidgeFit, ridge_fit
from .zne import NoiseLevelSet

DEFAULT_REFERENCE_M = 13
CLIFFORD_ANGLES = (0.0, math.pi / 2, -math.pi / 2, math.pi)
ISING_GRID_INDICES = (0, 1, 2, 3, 4, 5, 54, 55, 56, 57, 58, 59)


@dataclass
class TrainingSample:
    angles: dict[str, float] | tuple[float, ...]
    features: np.ndarray
    reference: float
    # exact noisy per-term values, one row per feature; kept for resampling
    term_values: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class SimulatorBackend:
    """Density-matrix backend producing noisy features for a circuit."""

    noise: NoiseModel = field(default_factory=NoiseModel)
    levels: NoiseLevelSet = field(default_factory=NoiseLevelSet)

    def level_term_values(self, c: ParamCircuit, o: Observable) -> np.ndarray:
        return np.stack([noisy_term_values(c, o, self.noise.scaled(g))[0] for g in self.levels])

    def insertion_term_values(self, c: ParamCircuit, o: Observable, insertions: Sequence[InsertionOp]) -> np.ndarray:
        return noisy_term_values(c, o, self.noise, insertions)

    def term_values(
        self, c: ParamCircuit, o: Observable, mode: str, insertions: Sequence[InsertionOp] | None = None
    ) -> np.ndarray:
        if mode == "zne":
            return self.level_term_values(c, o)
        if mode == "pec":
            if not insertions:
                raise ValueError("PEC-style features need an insertion set")
            return self.insertion_term_values(c, o, insertions)
        raise ValueError(f"mode must be 'zne' or 'pec', got {mode!r}")


def features_from_terms(
    term_values: np.ndarray,
    o: Observable,
    shots: int | None,
    rng: np.random.Generator,
    readout_flip: float = 0.0,
) -> np.ndarray:
    """Observable estimates per feature row; ``shots=None`` means exact."""
    if shots is None:
        return np.asarray(term_values) @ np.asarray(o.weights)
    return sample_terms(term_values, o, shots, rng, readout_flip) @ np.asarray(o.weights)


def ising_training_grid(indices: Sequence[int] = ISING_GRID_INDICES, denominator: int = 120) -> list[dict[str, float]]:
    """``theta_h = i pi/d`` and ``theta_J = -j pi/d`` for every index pair."""
    if not indices:
        raise ValueError("training grid is empty")
    return [
        {"h": i * math.pi / denominator, "J": -j * math.pi / denominator} for i in indices for j in indices
    ]


def bind(template: ParamCircuit, point: Mapping[str, float] | Sequence[float]) -> ParamCircuit:
    if isinstance(point, Mapping):
        return template.with_role_angles(dict(point))
    return template.with_angles(list(point))


def reference_value(c: ParamCircuit, o: Observable, method: str = "spd", M: int = DEFAULT_REFERENCE_M) -> float:
    if method == "spd":
        return spd_expectation(normalize_angles(c), o, M=M).value
    if method == "exact":
        return exact_expectation(c, o)
    raise ValueError(f"reference must be 'spd' or 'exact', got {method!r}")


def build_insertion_set(c: ParamCircuit, count: int, seed: int | np.random.Generator | None = 0) -> list[InsertionOp]:
    """``g_1`` (no insertion) then ``count`` distinct single-qubit X/Z insertions.

    Candidate positions are the qubits each layer acts on; an insertion sits
    after that layer's gate and noise.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    positions = []
    for i, layer in enumerate(c.layers):
        qubits = set(layer.axis.support)
        for g in layer.clifford_gates:
            qubits.update(g.qubits)
        positions.extend((i, q) for q in sorted(qubits))
    if count > 2 * len(positions):
        raise ValueError(f"count={count} exceeds the {2 * len(positions)} available insertions")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    picks = rng.choice(2 * len(positions), size=count, replace=False)
    ops = [InsertionOp(1)]
    for w, p in enumerate(picks):
        layer, q = positions[p // 2]
        ops.append(InsertionOp(w + 2, layer, "XZ"[p % 2], q))
    return ops


def build_cpdr_training_set(
    template: ParamCircuit,
    grid: Sequence[Mapping[str, float] | Sequence[float]],
    backend: SimulatorBackend,
    observable: Observable,
    reference_M: int = DEFAULT_REFERENCE_M,
    mode: str = "zne",
    insertions: Sequence[InsertionOp] | None = None,
    reference: str = "spd",
    shots: int | None = 10_000,
    seed: int | np.random.Generator | None = 0,
) -> list[TrainingSample]:
    """One sample per grid point: sampled noisy features and a noiseless reference."""
    if not grid:
        raise ValueError("training grid is empty")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = []
    for point in grid:
        c = bind(template, point)
        terms = backend.term_values(c, observable, mode, insertions)
        feats = features_from_terms(terms, observable, shots, rng, backend.noise.readout_flip)
        ref = reference_value(c, observable, reference, reference_M)
        angles = dict(point) if isinstance(point, Mapping) else tuple(point)
        out.append(TrainingSample(angles, feats, ref, terms))
    return out


def clifford_snapped(template: ParamCircuit, rng: np.random.Generator) -> ParamCircuit:
    """Every rotation angle replaced by a uniform draw from ``{0, +-pi/2, pi}``."""
    picks = rng.integers(len(CLIFFORD_ANGLES), size=template.depth)
    return template.with_angles([CLIFFORD_ANGLES[k] for k in picks])


def build_clifford_training_set(
    template: ParamCircuit,
    count: int,
    backend: SimulatorBackend,
    observable: Observable,
    insertions: Sequence[InsertionOp],
    shots: int | None = 10_000,
    seed: int | np.random.Generator | None = 0,
) -> list[TrainingSample]:
    """Random Clifford circuits with the template's structure (learning-based PEC)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = clifford_snapped(template, rng)
        terms = backend.insertion_term_values(c, observable, insertions)
        feats = features_from_terms(terms, observable, shots, rng, backend.noise.readout_flip)
        # all angles vanish after normalization, so M = 0 is exact
        ref = spd_expectation(normalize_angles(c), observable, M=0).value
        out.append(TrainingSample(c.angles, feats, ref, terms))
    return out


def fit_training_set(samples: Sequence[TrainingSample], alpha: float, labels: tuple = ()) -> RidgeFit:
    if not samples:
        raise ValueError("no training samples")
    x = np.stack([s.features for s in samples])
    y = np.array([s.reference for s in samples])
    return ridge_fit(x, y, alpha, labels)


def cpdr_zne_mitigate(target_features, fit: RidgeFit) -> float:
    """``sum_i c_i f(C(theta), l_i)`` with coefficients learned on the training set."""
    return fit.predict(target_features)


def cpdr_pec_mitigate(target_features, fit: RidgeFit) -> float:
    """``sum_w c_w f(g_w(C(theta)))`` over the insertion set."""
    return fit.predict(target_features)
