"""Brute-force reference simulators.

Statevector simulation gives exact noiseless expectations; density-matrix
simulation applies the gate-based noise model (thermal relaxation during the
gate, then depolarizing).  Basis index bit ``q`` is the state of qubit ``q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .circuit import ParamCircuit
from .pauli import Gate, Observable, PauliWord

MAX_STATEVECTOR_QUBITS = 20
MAX_DENSITY_QUBITS = 12

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULI_1Q = {"I": _I2, "X": _X, "Y": _Y, "Z": _Z}

_GATE_MATRICES = {
    "I": _I2,
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "S": np.diag([1, 1j]).astype(complex),
    "SDG": np.diag([1, -1j]).astype(complex),
    "X": _X,
    "Y": _Y,
    "Z": _Z,
    "CX": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}


class SizeLimitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Dense matrices
# ---------------------------------------------------------------------------


def local_pauli_matrix(letters: str) -> np.ndarray:
    """Kronecker product with the first letter as the most significant factor."""
    out = np.ones((1, 1), dtype=complex)
    for ch in letters:
        out = np.kron(out, _PAULI_1Q[ch])
    return out


def pauli_matrix(p: PauliWord) -> np.ndarray:
    """Full ``2^n x 2^n`` matrix of ``p`` (phase included)."""
    n = p.n_qubits
    idx = np.arange(1 << n)
    out = np.zeros((1 << n, 1 << n), dtype=complex)
    out[idx ^ p.x_mask, idx] = _pauli_column_phases(p, idx)
    return out


def _pauli_column_phases(p: PauliWord, idx: np.ndarray) -> np.ndarray:
    # letters = i^{|x&z|} X^x Z^z, so P|a> = i^{phase+|x&z|} (-1)^{|z&a|} |a^x>
    base = 1j ** ((p.phase_exp + bin(p.x_mask & p.z_mask).count("1")) % 4)
    signs = 1 - 2 * (np.bitwise_count(idx & p.z_mask).astype(np.int64) & 1)
    return base * signs


def gate_matrix(gate: Gate) -> tuple[np.ndarray, tuple[int, ...]]:
    """Local unitary of a Clifford gate and the qubits it acts on."""
    if gate.name == "PR":
        q = gate.qubits
        sub = "".join(gate.axis.letters[j] for j in q)
        theta = gate.k * math.pi / 2
        return _rotation_matrix(sub, theta), q
    return _GATE_MATRICES[gate.name], gate.qubits


@lru_cache(maxsize=4096)
def _rotation_matrix(letters: str, theta: float) -> np.ndarray:
    p = local_pauli_matrix(letters)
    return math.cos(theta / 2) * np.eye(len(p)) - 1j * math.sin(theta / 2) * p


def _axis_local(axis: PauliWord) -> tuple[str, tuple[int, ...]]:
    q = axis.support
    return "".join(axis.letters[j] for j in q), q


# ---------------------------------------------------------------------------
# Statevector
# ---------------------------------------------------------------------------


def apply_local_unitary(psi: np.ndarray, u: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    k = len(qubits)
    axes = [n - 1 - q for q in qubits]
    t = np.moveaxis(psi.reshape((2,) * n), axes, range(k))
    shape = t.shape
    t = (u @ t.reshape(1 << k, -1)).reshape(shape)
    return np.moveaxis(t, range(k), axes).reshape(-1)


def apply_pauli_rotation(psi: np.ndarray, axis: PauliWord, theta: float) -> np.ndarray:
    """``exp(-i theta P / 2) psi`` for a Pauli of any weight."""
    idx = np.arange(psi.size)
    p_psi = np.empty_like(psi)
    p_psi[idx ^ axis.x_mask] = _pauli_column_phases(axis, idx) * psi
    return math.cos(theta / 2) * psi - 1j * math.sin(theta / 2) * p_psi


def _apply_gate_sv(psi: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    if gate.name == "PR":
        return apply_pauli_rotation(psi, gate.axis, gate.k * math.pi / 2)
    u, q = gate_matrix(gate)
    return apply_local_unitary(psi, u, q, n)


def run_statevector(c: ParamCircuit, psi0: np.ndarray | None = None) -> np.ndarray:
    n = c.n_qubits
    if n > MAX_STATEVECTOR_QUBITS:
        raise SizeLimitError(f"statevector simulation limited to {MAX_STATEVECTOR_QUBITS} qubits")
    if psi0 is None:
        psi = np.zeros(1 << n, dtype=complex)
        psi[0] = 1.0
    else:
        psi = np.asarray(psi0, dtype=complex).copy()
    for layer in c.layers:
        for g in layer.clifford_gates:
            psi = _apply_gate_sv(psi, g, n)
        psi = apply_pauli_rotation(psi, layer.axis, layer.angle)
    for g in c.final_gates:
        psi = _apply_gate_sv(psi, g, n)
    return psi


def circuit_unitary(c: ParamCircuit) -> np.ndarray:
    """Dense unitary, column by column (small circuits only)."""
    dim = 1 << c.n_qubits
    cols = [run_statevector(c, np.eye(dim, dtype=complex)[:, j]) for j in range(dim)]
    return np.stack(cols, axis=1)


def pauli_expectation_sv(psi: np.ndarray, p: PauliWord) -> float:
    idx = np.arange(psi.size)
    p_psi = np.empty_like(psi)
    p_psi[idx ^ p.x_mask] = _pauli_column_phases(p, idx) * psi
    return float(np.vdot(psi, p_psi).real)


def exact_expectation(c: ParamCircuit, o: Observable, psi0: np.ndarray | None = None) -> float:
    """Noiseless ``<O>`` from ``|0...0>`` (or ``psi0``)."""
    if o.n_qubits != c.n_qubits:
        raise ValueError("observable and circuit sizes differ")
    psi = run_statevector(c, psi0)
    return sum(w * pauli_expectation_sv(psi, p) for p, w in o.terms)


# ---------------------------------------------------------------------------
# Noise model and channels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Gate noise: relaxation during each gate, then depolarizing on its support.

    ``scale`` multiplies depolarizing intensities and gate durations.
    """

    lambda_single: float = 0.01
    lambda_double: float = 0.04
    t1: float = 100e-6
    t2: float = 50e-6
    t_single: float = 300e-9
    t_double: float = 800e-9
    readout_flip: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("noise scale must be positive")
        for name in ("lambda_single", "lambda_double", "readout_flip"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v} outside [0, 1]")
        for name in ("t_single", "t_double"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.t1 <= 0 or self.t2 <= 0:
            raise ValueError("t1 and t2 must be positive")
        if self.t2 > 2 * self.t1 * (1 + 1e-12):
            raise ValueError("need t2 <= 2 t1")
        for name in ("lambda_single", "lambda_double"):
            if getattr(self, name) * self.scale > 1 + 1e-12:
                raise ValueError(f"scaled {name} = {getattr(self, name) * self.scale} exceeds 1")

    @classmethod
    def noiseless(cls) -> NoiseModel:
        return cls(lambda_single=0.0, lambda_double=0.0, t_single=0.0, t_double=0.0)

    def scaled(self, factor: float) -> NoiseModel:
        """Noise level ``factor`` relative to this model's current scale."""
        return replace(self, scale=self.scale * factor)

    def with_base_rate(self, factor: float) -> NoiseModel:
        """Rescale the base rates themselves (e.g. a device with 0.5x noise)."""
        return replace(
            self,
            lambda_single=self.lambda_single * factor,
            lambda_double=self.lambda_double * factor,
            t_single=self.t_single * factor,
            t_double=self.t_double * factor,
        )

    def gate_params(self, n_touched: int) -> tuple[float, float]:
        """(depolarizing intensity, duration) for a 1- or 2-qubit gate."""
        if n_touched == 1:
            return self.lambda_single * self.scale, self.t_single * self.scale
        if n_touched == 2:
            return self.lambda_double * self.scale, self.t_double * self.scale
        raise ValueError(f"noise is defined for 1- and 2-qubit gates, not {n_touched}")

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, data: dict) -> NoiseModel:
        return cls(**data)


def thermal_relaxation_choi(eps_t1: float, eps_t2: float) -> np.ndarray:
    """Choi matrix Lambda with ``eps(rho) = tr_1[Lambda (rho^T (x) I)]``.

    In this matrix's own labelling the stable level is ``|1>``.
    """
    return np.array(
        [
            [eps_t1, 0, 0, eps_t2],
            [0, 1 - eps_t1, 0, 0],
            [0, 0, 0, 0],
            [eps_t2, 0, 0, 1],
        ],
        dtype=complex,
    )


def choi_to_superop(choi: np.ndarray) -> np.ndarray:
    """Row-major superoperator S with ``vec(eps(rho)) = S vec(rho)``."""
    # eps(|i><j|)_{ab} = Lambda[(i,a),(j,b)]
    lam = choi.reshape(2, 2, 2, 2)  # i, a, j, b
    return np.transpose(lam, (1, 3, 0, 2)).reshape(4, 4)


@lru_cache(maxsize=256)
def thermal_relaxation_superop(duration: float, t1: float, t2: float) -> np.ndarray:
    """Relaxation toward ``|0>``: the Choi form above with the levels relabelled."""
    eps1 = math.exp(-duration / t1)
    eps2 = math.exp(-duration / t2)
    s = choi_to_superop(thermal_relaxation_choi(eps1, eps2))
    flip = np.kron(_X, _X)
    return flip @ s @ flip


def depolarizing_superop(lam: float, k: int) -> np.ndarray:
    d = 1 << k
    vec_id = np.eye(d, dtype=complex).reshape(-1)
    return (1 - lam) * np.eye(d * d, dtype=complex) + lam * np.outer(vec_id / d, vec_id)


def unitary_superop(u: np.ndarray) -> np.ndarray:
    return np.kron(u, u.conj())


def _lift(s1: np.ndarray, position: int, k: int) -> np.ndarray:
    """Embed a 1-qubit superop at ``position`` of a k-qubit local register."""
    d = 1 << k
    out = np.zeros((d * d, d * d), dtype=complex)
    for col in range(d * d):
        e = np.zeros(d * d, dtype=complex)
        e[col] = 1
        out[:, col] = _apply_superop_tensor(e.reshape((2,) * (2 * k)), s1, [position], k).reshape(-1)
    return out


def _apply_superop_tensor(rho_t: np.ndarray, s: np.ndarray, axes_q: Sequence[int], n: int) -> np.ndarray:
    """Apply a local superop; ``axes_q`` are tensor row-axis positions (0..n-1)."""
    k = len(axes_q)
    axes = list(axes_q) + [n + a for a in axes_q]
    t = np.moveaxis(rho_t, axes, range(2 * k))
    shape = t.shape
    t = (s @ t.reshape(1 << (2 * k), -1)).reshape(shape)
    return np.moveaxis(t, range(2 * k), axes)


@lru_cache(maxsize=8192)
def _noisy_gate_superop(
    u_key: tuple, k: int, lam: float, duration: float, t1: float, t2: float
) -> np.ndarray:
    u = np.array(u_key[1], dtype=complex).reshape(1 << k, 1 << k)
    s = unitary_superop(u)
    if duration > 0:
        relax = thermal_relaxation_superop(duration, t1, t2)
        for j in range(k):
            s = (relax if k == 1 else _lift(relax, j, k)) @ s
    if lam > 0:
        s = depolarizing_superop(lam, k) @ s
    return s


def _u_key(u: np.ndarray, tag: str) -> tuple:
    return (tag, tuple(np.round(u.reshape(-1), 15).tolist()))


# ---------------------------------------------------------------------------
# Density matrices
# ---------------------------------------------------------------------------


class DensityMatrix:
    """``2^n x 2^n`` state; stored as a rank-2n tensor for local updates."""

    def __init__(self, data: np.ndarray, n_qubits: int):
        if n_qubits > MAX_DENSITY_QUBITS:
            raise SizeLimitError(f"density-matrix simulation limited to {MAX_DENSITY_QUBITS} qubits")
        self.n_qubits = n_qubits
        self.tensor = np.asarray(data, dtype=complex).reshape((2,) * (2 * n_qubits))

    @classmethod
    def zero_state(cls, n_qubits: int) -> DensityMatrix:
        dim = 1 << n_qubits
        m = np.zeros((dim, dim), dtype=complex)
        m[0, 0] = 1
        return cls(m, n_qubits)

    @property
    def matrix(self) -> np.ndarray:
        dim = 1 << self.n_qubits
        return self.tensor.reshape(dim, dim)

    def copy(self) -> DensityMatrix:
        return DensityMatrix(self.tensor.copy(), self.n_qubits)

    def apply_superop(self, s: np.ndarray, qubits: Sequence[int]) -> None:
        n = self.n_qubits
        self.tensor = _apply_superop_tensor(self.tensor, s, [n - 1 - q for q in qubits], n)

    def apply_unitary(self, u: np.ndarray, qubits: Sequence[int]) -> None:
        self.apply_superop(unitary_superop(u), qubits)

    def expectation(self, p: PauliWord) -> float:
        m = self.matrix
        idx = np.arange(m.shape[0])
        # tr(rho P) = sum_a <a|rho P|a> = sum_a phase(a) rho[a, a^x]
        return float(np.sum(_pauli_column_phases(p, idx) * m[idx, idx ^ p.x_mask]).real)

    def check_valid(self, tol: float = 1e-9) -> None:
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=tol):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > tol:
            raise ValueError("density matrix trace is not 1")
        if np.linalg.eigvalsh(m).min() < -tol:
            raise ValueError("density matrix is not positive semidefinite")


@dataclass(frozen=True)
class InsertionOp:
    """Ideal Pauli inserted after layer ``location``'s gate and noise.

    ``kind == "none"`` is the unmodified circuit.
    """

    id: int
    location: int = -1
    kind: str = "none"
    qubit: int = -1

    def __post_init__(self):
        if self.kind not in ("none", "X", "Z"):
            raise ValueError(f"insertion kind must be none, X or Z; got {self.kind!r}")
        if self.kind != "none" and (self.location < 0 or self.qubit < 0):
            raise ValueError("a Pauli insertion needs a layer and a qubit")


def _compiled_steps(c: ParamCircuit, nm: NoiseModel) -> list[list[tuple[np.ndarray, tuple[int, ...]]]]:
    """Per-layer list of (superop, qubits); the final Clifford is the last entry."""
    t1, t2 = nm.t1, nm.t2

    def gate_op(u: np.ndarray, qubits: tuple[int, ...], tag: str, noisy: bool):
        k = len(qubits)
        if noisy:
            lam, dur = nm.gate_params(k)
        else:
            lam, dur = 0.0, 0.0
        return _noisy_gate_superop(_u_key(u, tag), k, lam, dur, t1, t2), qubits

    def clifford_ops(gates):
        ops = []
        for g in gates:
            u, q = gate_matrix(g)
            # PR gates come from angle normalization and merge into the rotation
            ops.append(gate_op(u, q, g.name, noisy=g.name != "PR"))
        return ops

    steps = []
    for layer in c.layers:
        letters, q = _axis_local(layer.axis)
        if len(q) > 2:
            raise ValueError(f"noisy simulation supports weight <= 2 rotation axes, got {layer.axis}")
        ops = clifford_ops(layer.clifford_gates)
        ops.append(gate_op(_rotation_matrix(letters, layer.angle), q, "rot" + letters, True))
        steps.append(ops)
    steps.append(clifford_ops(c.final_gates))
    return steps


def run_noisy(c: ParamCircuit, nm: NoiseModel) -> DensityMatrix:
    rho = DensityMatrix.zero_state(c.n_qubits)
    for ops in _compiled_steps(c, nm):
        for s, q in ops:
            rho.apply_superop(s, q)
    return rho


def noisy_term_values(
    c: ParamCircuit,
    o: Observable,
    nm: NoiseModel,
    insertions: Sequence[InsertionOp] | None = None,
) -> np.ndarray:
    """Exact noisy ``<P_j>`` per observable term; one row per insertion op.

    Without ``insertions`` the result has a single row for the bare circuit.
    States are checkpointed after each insertion layer so each modified circuit
    only re-simulates its tail.
    """
    if o.n_qubits != c.n_qubits:
        raise ValueError("observable and circuit sizes differ")
    if c.n_qubits > MAX_DENSITY_QUBITS:
        raise SizeLimitError(f"density-matrix simulation limited to {MAX_DENSITY_QUBITS} qubits")
    insertions = list(insertions) if insertions else [InsertionOp(1)]
    steps = _compiled_steps(c, nm)
    n = c.n_qubits
    wanted = sorted({ins.location for ins in insertions if ins.kind != "none"})
    for loc in wanted:
        if not 0 <= loc < c.depth:
            raise ValueError(f"insertion layer {loc} outside 0..{c.depth - 1}")
    checkpoints: dict[int, DensityMatrix] = {}
    rho = DensityMatrix.zero_state(n)
    for i, ops in enumerate(steps):
        for s, q in ops:
            rho.apply_superop(s, q)
        if i in wanted:
            checkpoints[i] = rho.copy()
    paulis = o.paulis
    out = np.empty((len(insertions), len(paulis)))
    for row, ins in enumerate(insertions):
        if ins.kind == "none":
            state = rho
        else:
            if not 0 <= ins.qubit < n:
                raise ValueError(f"insertion qubit {ins.qubit} out of range")
            state = checkpoints[ins.location].copy()
            state.apply_unitary(_PAULI_1Q[ins.kind], (ins.qubit,))
            for ops in steps[ins.location + 1 :]:
                for s, q in ops:
                    state.apply_superop(s, q)
        out[row] = [state.expectation(p) for p in paulis]
    return out


def noisy_expectation(c: ParamCircuit, o: Observable, nm: NoiseModel) -> float:
    """``tr(O rho_final)`` under the noise model (no sampling)."""
    vals = noisy_term_values(c, o, nm)[0]
    return float(np.dot(o.weights, vals))


def sample_expectation(
    state: DensityMatrix | np.ndarray | Sequence[float],
    o: Observable,
    shots: int,
    seed: int | np.random.Generator | None = None,
    readout_flip: float = 0.0,
) -> float:
    """Finite-shot estimate of ``<O>``.

    ``state`` is a density matrix or the exact per-term expectations.  Each
    term is measured with ``shots`` independent +-1 outcomes; every measured
    qubit's bit is flipped with probability ``readout_flip``.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(state, DensityMatrix):
        vals = np.array([state.expectation(p) for p in o.paulis])
    else:
        vals = np.asarray(state, dtype=float)
    return float(np.dot(o.weights, sample_terms(vals, o, shots, rng, readout_flip)))


def sample_terms(
    vals: np.ndarray, o: Observable, shots: int, rng: np.random.Generator, readout_flip: float = 0.0
) -> np.ndarray:
    """Per-term shot estimates; ``vals`` may carry leading batch axes."""
    vals = np.asarray(vals, dtype=float)
    weights = np.array([p.weight for p in o.paulis])
    damp = (1 - 2 * readout_flip) ** weights
    mean = np.clip(vals * damp, -1.0, 1.0)
    hits = rng.binomial(shots, (1 + mean) / 2)
    est = 2 * hits / shots - 1
    identity = weights == 0
    if identity.any():
        est = np.where(identity, vals, est)
    return est
