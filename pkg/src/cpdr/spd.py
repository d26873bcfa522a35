"""Sparse Pauli Dynamics: Heisenberg propagation truncated by sine order.

The observable is pushed backwards through the circuit.  At a rotation whose
axis anticommutes with a term, the term splits into a cosine branch and a sine
branch; every sine branch raises the term's sine count, and branches whose
count exceeds ``M`` are discarded.  Terms are merged on ``(Pauli, sine
count)`` after each layer, which gives the same sum as enumerating paths one
by one but keeps memory bounded.

Term storage is columnar numpy: x/z masks as ``(T, W)`` uint64 words, sine
counts, and real coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .circuit import ParamCircuit
from .pauli import Gate, Observable, PauliWord, apply_gate

COEFF_TOL = 1e-14
_U64 = np.uint64


class SPDError(ValueError):
    pass


@dataclass(frozen=True)
class SparseInitialState:
    """``rho = sum rho_ab |a><b|`` with few non-zero entries."""

    n_qubits: int
    entries: tuple[tuple[int, int, complex], ...]
    max_entries: int = 4096

    def __post_init__(self):
        if len(self.entries) > self.max_entries:
            raise SPDError(f"sparse state has {len(self.entries)} entries; limit is {self.max_entries}")
        lookup = {}
        for a, b, v in self.entries:
            if not (0 <= a < (1 << self.n_qubits) and 0 <= b < (1 << self.n_qubits)):
                raise SPDError(f"basis index out of range in entry ({a}, {b})")
            lookup[(a, b)] = complex(v)
        for (a, b), v in lookup.items():
            if abs(lookup.get((b, a), 0) - v.conjugate()) > 1e-12:
                raise SPDError("sparse state is not Hermitian")
        tr = sum(v for (a, b), v in lookup.items() if a == b)
        if abs(tr - 1) > 1e-9:
            raise SPDError(f"sparse state has trace {tr}, expected 1")

    @classmethod
    def zero_state(cls, n_qubits: int) -> SparseInitialState:
        return cls(n_qubits, ((0, 0, 1.0),))

    @classmethod
    def basis_state(cls, n_qubits: int, index: int) -> SparseInitialState:
        return cls(n_qubits, ((index, index, 1.0),))

    @classmethod
    def from_statevector(cls, psi: np.ndarray, tol: float = 1e-12, max_entries: int = 4096) -> SparseInitialState:
        psi = np.asarray(psi, dtype=complex)
        n = int(round(math.log2(psi.size)))
        nz = np.flatnonzero(np.abs(psi) > tol)
        entries = tuple((int(a), int(b), complex(psi[a] * np.conj(psi[b]))) for a in nz for b in nz)
        return cls(n, entries, max_entries)


@dataclass
class SPDDiagnostics:
    M: int
    L: int
    terms_alive: int = 0
    peak_terms: int = 0
    pruned: int = 0
    terms_per_layer: list[int] = field(default_factory=list)
    value: float = float("nan")

    def to_json(self) -> dict:
        return {
            "M": self.M,
            "L": self.L,
            "terms_alive": self.terms_alive,
            "peak_terms": self.peak_terms,
            "pruned": self.pruned,
            "value": self.value,
        }


class SPDResult(NamedTuple):
    value: float
    diagnostics: SPDDiagnostics


@dataclass
class SPDTermSet:
    """Columnar map ``(x, z, sin_count) -> coefficient``."""

    n_qubits: int
    x: np.ndarray
    z: np.ndarray
    sin_count: np.ndarray
    coeff: np.ndarray

    @property
    def n_words(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.coeff.size

    @classmethod
    def from_observable(cls, o: Observable) -> SPDTermSet:
        n = o.n_qubits
        w = _n_words(n)
        x = np.array([_split(p.x_mask, w) for p in o.paulis], dtype=_U64).reshape(-1, w)
        z = np.array([_split(p.z_mask, w) for p in o.paulis], dtype=_U64).reshape(-1, w)
        terms = cls(n, x, z, np.zeros(len(o.terms), dtype=np.int32), np.array(o.weights, dtype=float))
        return terms.merged()

    def items(self) -> list[tuple[PauliWord, int, float]]:
        out = []
        for i in range(len(self)):
            xm = _join(self.x[i])
            zm = _join(self.z[i])
            out.append((PauliWord(self.n_qubits, xm, zm), int(self.sin_count[i]), float(self.coeff[i])))
        return out

    def take(self, keep: np.ndarray) -> SPDTermSet:
        return SPDTermSet(self.n_qubits, self.x[keep], self.z[keep], self.sin_count[keep], self.coeff[keep])

    def merged(self) -> SPDTermSet:
        """Sum coefficients sharing ``(Pauli, sin_count)``; drop near-zero ones."""
        if len(self) == 0:
            return self
        n, w = self.n_qubits, self.n_words
        sbits = max(1, int(self.sin_count.max()).bit_length())
        if w == 1 and 2 * n + sbits <= 63:
            key = (self.x[:, 0] << _U64(n + sbits)) | (self.z[:, 0] << _U64(sbits)) | self.sin_count.astype(_U64)
            uniq, inv = np.unique(key, return_inverse=True)
            coeff = np.bincount(inv, weights=self.coeff, minlength=uniq.size)
            smask = _U64((1 << sbits) - 1)
            nmask = _U64((1 << n) - 1)
            x = ((uniq >> _U64(n + sbits)) & nmask).reshape(-1, 1)
            z = ((uniq >> _U64(sbits)) & nmask).reshape(-1, 1)
            s = (uniq & smask).astype(np.int32)
        else:
            cols = [self.sin_count] + [self.z[:, j] for j in range(w)] + [self.x[:, j] for j in range(w)]
            order = np.lexsort(cols)
            xs, zs, ss = self.x[order], self.z[order], self.sin_count[order]
            change = np.any(xs[1:] != xs[:-1], axis=1) | np.any(zs[1:] != zs[:-1], axis=1) | (ss[1:] != ss[:-1])
            starts = np.concatenate(([0], np.flatnonzero(change) + 1))
            coeff = np.add.reduceat(self.coeff[order], starts)
            x, z, s = xs[starts], zs[starts], ss[starts]
        keep = np.abs(coeff) >= COEFF_TOL
        return SPDTermSet(n, x[keep], z[keep], s[keep], coeff[keep])


def _n_words(n: int) -> int:
    return (n + 63) // 64


def _split(v: int, w: int) -> list[int]:
    return [(v >> (64 * j)) & ((1 << 64) - 1) for j in range(w)]


def _join(words) -> int:
    return sum(int(v) << (64 * j) for j, v in enumerate(words))


def _popcount_rows(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a).sum(axis=1, dtype=np.int64)


# ---------------------------------------------------------------------------
# Propagation kernels
# ---------------------------------------------------------------------------


def _pauli_words(p: PauliWord, w: int) -> tuple[np.ndarray, np.ndarray]:
    return np.array(_split(p.x_mask, w), dtype=_U64), np.array(_split(p.z_mask, w), dtype=_U64)


def _times_axis_phase(ts: SPDTermSet, px: np.ndarray, pz: np.ndarray, sel: np.ndarray) -> np.ndarray:
    """Power of i in ``P * sigma`` for the selected terms (letter forms)."""
    x, z = ts.x[sel], ts.z[sel]
    xc, zc = x ^ px, z ^ pz
    return (
        int(np.bitwise_count(px & pz).sum())
        + _popcount_rows(x & z)
        + 2 * _popcount_rows(x & pz)
        - _popcount_rows(xc & zc)
    ) % 4


def _anticommuting(ts: SPDTermSet, px: np.ndarray, pz: np.ndarray) -> np.ndarray:
    return (_popcount_rows((ts.x & pz) ^ (ts.z & px)) & 1).astype(bool)


def _rotate(ts: SPDTermSet, axis: PauliWord, theta: float, M: int, diag: SPDDiagnostics) -> SPDTermSet:
    """``e^{i theta P/2} sigma e^{-i theta P/2}`` with sine-order truncation."""
    px, pz = _pauli_words(axis, ts.n_words)
    anti = _anticommuting(ts, px, pz)
    if not anti.any():
        return ts
    c, s = math.cos(theta), math.sin(theta)
    coeff = ts.coeff.copy()
    coeff[anti] *= c
    grow = anti & (ts.sin_count < M)
    diag.pruned += int(np.count_nonzero(anti & ~grow))
    if s == 0.0 or not grow.any():
        return SPDTermSet(ts.n_qubits, ts.x, ts.z, ts.sin_count, coeff)
    # i * P * sigma is Hermitian: total phase must be 0 or 2
    k = (_times_axis_phase(ts, px, pz, grow) + 1) % 4
    if np.any(k & 1):
        raise AssertionError("non-real coefficient in Heisenberg branch")
    branch_coeff = ts.coeff[grow] * s * np.where(k == 0, 1.0, -1.0)
    return SPDTermSet(
        ts.n_qubits,
        np.concatenate([ts.x, ts.x[grow] ^ px]),
        np.concatenate([ts.z, ts.z[grow] ^ pz]),
        np.concatenate([ts.sin_count, ts.sin_count[grow] + 1]),
        np.concatenate([coeff, branch_coeff]),
    )


def _exact_pauli_rotation(ts: SPDTermSet, axis: PauliWord, k: int) -> SPDTermSet:
    """Heisenberg map of ``exp(-i k pi/4 P)``: the rotation rule at ``k pi/2``, no truncation."""
    k %= 4
    if k == 0:
        return ts
    px, pz = _pauli_words(axis, ts.n_words)
    anti = _anticommuting(ts, px, pz)
    if not anti.any():
        return ts
    coeff = ts.coeff.copy()
    if k == 2:
        coeff[anti] *= -1
        return SPDTermSet(ts.n_qubits, ts.x, ts.z, ts.sin_count, coeff)
    # k=1: i P sigma, k=3: -i P sigma
    ph = (_times_axis_phase(ts, px, pz, anti) + (1 if k == 1 else 3)) % 4
    if np.any(ph & 1):
        raise AssertionError("non-real coefficient in Clifford rotation")
    coeff[anti] *= np.where(ph == 0, 1.0, -1.0)
    x, z = ts.x.copy(), ts.z.copy()
    x[anti] ^= px
    z[anti] ^= pz
    return SPDTermSet(ts.n_qubits, x, z, ts.sin_count, coeff)


@dataclass(frozen=True)
class _GateTable:
    qubits: tuple[int, ...]
    new_x: np.ndarray  # local x bits of the image, per input pattern
    new_z: np.ndarray
    sign: np.ndarray


@lru_cache(maxsize=1024)
def _heisenberg_table(gate: Gate, n: int) -> _GateTable:
    """Lookup of ``g^dagger sigma g`` restricted to the gate's qubits."""
    inv = gate.inverse()
    q = gate.qubits
    k = len(q)
    size = 1 << (2 * k)
    new_x = np.zeros(size, dtype=_U64)
    new_z = np.zeros(size, dtype=_U64)
    sign = np.ones(size)
    for idx in range(size):
        letters = {}
        for j in range(k):
            bits = (idx >> (2 * j)) & 3
            if bits:
                letters[q[j]] = "IXZY"[bits]
        img = apply_gate(inv, PauliWord.from_sparse(n, letters))
        for j in range(k):
            new_x[idx] |= _U64(((img.x_mask >> q[j]) & 1) << j)
            new_z[idx] |= _U64(((img.z_mask >> q[j]) & 1) << j)
        sign[idx] = img.sign
    return _GateTable(q, new_x, new_z, sign)


def _apply_clifford_gate(ts: SPDTermSet, gate: Gate) -> SPDTermSet:
    if gate.name == "PR":
        return _exact_pauli_rotation(ts, gate.axis, gate.k)
    if gate.name == "I" or len(ts) == 0:
        return ts
    table = _heisenberg_table(gate, ts.n_qubits)
    x, z = ts.x.copy(), ts.z.copy()
    idx = np.zeros(len(ts), dtype=np.int64)
    locs = [(qb // 64, _U64(qb % 64)) for qb in table.qubits]
    for j, (w, b) in enumerate(locs):
        xb = ((x[:, w] >> b) & _U64(1)).astype(np.int64)
        zb = ((z[:, w] >> b) & _U64(1)).astype(np.int64)
        idx |= (xb | (zb << 1)) << (2 * j)
    nx, nz = table.new_x[idx], table.new_z[idx]
    for j, (w, b) in enumerate(locs):
        clear = ~(_U64(1) << b)
        x[:, w] = (x[:, w] & clear) | (((nx >> _U64(j)) & _U64(1)) << b)
        z[:, w] = (z[:, w] & clear) | (((nz >> _U64(j)) & _U64(1)) << b)
    return SPDTermSet(ts.n_qubits, x, z, ts.sin_count, ts.coeff * table.sign[idx])


def _apply_clifford(ts: SPDTermSet, gates: Sequence[Gate]) -> SPDTermSet:
    # C = g_m ... g_1, so C^dag s C peels g_m first
    for g in reversed(gates):
        ts = _apply_clifford_gate(ts, g)
    return ts


def trace_with_state(ts: SPDTermSet, rho: SparseInitialState) -> float:
    """``sum_sigma c_sigma tr(rho sigma)`` read entry-wise from the sparse state."""
    total = 0j
    w = ts.n_words
    zpop_xz = _popcount_rows(ts.x & ts.z)
    for a, b, amp in rho.entries:
        # <b| sigma |a> is non-zero only when x = a ^ b
        xa = np.array(_split(a ^ b, w), dtype=_U64)
        hit = np.all(ts.x == xa, axis=1)
        if not hit.any():
            continue
        aw = np.array(_split(a, w), dtype=_U64)
        zsign = 1 - 2 * (_popcount_rows(ts.z[hit] & aw) & 1)
        phase = (1j) ** (zpop_xz[hit] % 4)
        total += amp * np.sum(ts.coeff[hit] * zsign * phase)
    return float(total.real)


def propagate(
    c: ParamCircuit,
    o: Observable,
    M: int,
    diagnostics: SPDDiagnostics | None = None,
) -> SPDTermSet:
    """Heisenberg-evolve ``o`` through ``c`` keeping terms with at most ``M`` sines."""
    if M < 0:
        raise SPDError("truncation order M must be >= 0")
    if o.n_qubits != c.n_qubits:
        raise SPDError("observable and circuit sizes differ")
    diag = diagnostics if diagnostics is not None else SPDDiagnostics(M, c.depth)
    ts = SPDTermSet.from_observable(o)
    ts = _apply_clifford(ts, c.final_gates).merged()
    diag.peak_terms = max(diag.peak_terms, len(ts))
    for layer in reversed(c.layers):
        ts = _rotate(ts, layer.axis, layer.angle, M, diag)
        ts = _apply_clifford(ts, layer.clifford_gates)
        before = len(ts)
        ts = ts.merged()
        diag.peak_terms = max(diag.peak_terms, before)
        diag.terms_per_layer.append(len(ts))
    diag.terms_alive = len(ts)
    return ts


def spd_expectation(
    c: ParamCircuit,
    o: Observable,
    rho: SparseInitialState | None = None,
    M: int = 0,
) -> SPDResult:
    """Truncated expectation ``tr(rho O_M)``.

    Angles need not be normalized for correctness, but the truncation error
    bounds only hold when every ``|theta| <= theta_*``.
    """
    if rho is None:
        rho = SparseInitialState.zero_state(c.n_qubits)
    if rho.n_qubits != c.n_qubits:
        raise SPDError("initial state and circuit sizes differ")
    diag = SPDDiagnostics(M, c.depth)
    ts = propagate(c, o, M, diag)
    diag.value = trace_with_state(ts, rho)
    return SPDResult(diag.value, diag)


# ---------------------------------------------------------------------------
# Truncation error bounds
# ---------------------------------------------------------------------------


def _check_lm(L: int, M: int, theta_star: float) -> None:
    if not 0 <= M <= L:
        raise ValueError(f"need 0 <= M <= L, got M={M}, L={L}")
    if theta_star < 0:
        raise ValueError("theta_star must be non-negative")


def worst_case_bound(L: int, M: int, theta_star: float) -> float:
    """``(1 + sin t)^L - (1 + sin t)^M``: bound on ``|<O> - <O>^(M)|`` over the box."""
    _check_lm(L, M, theta_star)
    s = math.sin(theta_star)
    return (1 + s) ** L - (1 + s) ** M


def mean_sin_squared(theta_star: float) -> float:
    """``E sin^2(theta)`` for theta uniform on ``[-t, t]``, i.e. ``1/2 - sin(2t)/(4t)``.

    Small ``t`` uses the series ``t^2/3 - t^4/15 + 2 t^6/315``.
    """
    t = theta_star
    if t < 1e-3:
        return t**2 / 3 - t**4 / 15 + 2 * t**6 / 315
    return 0.5 - math.sin(2 * t) / (4 * t)


def mse_bound(L: int, M: int, theta_star: float) -> float:
    """``(1 + c)^L - (1 + c)^M`` with ``c = E sin^2`` over the box."""
    _check_lm(L, M, theta_star)
    c = mean_sin_squared(theta_star)
    return (1 + c) ** L - (1 + c) ** M


def theorem_threshold(delta: float, L: int, M: int, mode: str = "worst") -> float:
    """Largest box half-width for which the truncation error is guaranteed <= delta.

    worst: ``ln(1 + delta/2) / (L - M)``; average (mean-square error):
    ``sqrt(3 ln(1 + delta/2) / (L - M))``.  Both need
    ``ln(1 + delta/2) / (L - M) <= ln 2 / M``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not 0 <= M < L:
        raise ValueError(f"need 0 <= M < L, got M={M}, L={L}")
    base = math.log1p(delta / 2) / (L - M)
    if M > 0 and base > math.log(2) / M:
        raise ValueError(
            f"side condition violated: ln(1+delta/2)/(L-M) = {base:.4g} > ln2/M = {math.log(2) / M:.4g}"
        )
    if mode == "worst":
        return base
    if mode == "average":
        return math.sqrt(3 * base)
    raise ValueError(f"mode must be 'worst' or 'average', got {mode!r}")


# ---------------------------------------------------------------------------
# Pauli path weights (tiny circuits)
# ---------------------------------------------------------------------------


class MonteCarloEstimate(NamedTuple):
    mean: float
    stderr: float
    samples: int


def _layer_factor_coeffs(c: ParamCircuit, i: int, s_out: PauliWord, s_in: PauliWord) -> tuple[float, float, float]:
    """``tr(s_out U s_in U^dag) / 2^n = (a cos^2 + b sin^2 + d cos sin)`` of half-angle."""
    from .densesim import circuit_unitary, pauli_matrix

    n = c.n_qubits
    layer = c.layers[i]
    cliff = ParamCircuit(n, (), layer.clifford_gates)
    cu = circuit_unitary(cliff)
    a_mat = cu @ pauli_matrix(s_in) @ cu.conj().T
    p = pauli_matrix(layer.axis)
    so = pauli_matrix(s_out)
    dim = 1 << n
    t1 = np.trace(so @ a_mat) / dim
    t2 = np.trace(so @ p @ a_mat @ p) / dim
    t3 = np.trace(so @ (a_mat @ p - p @ a_mat)) / dim
    # R A R^dag = c^2 A + s^2 P A P + i c s (A P - P A)
    return float(t1.real), float(t2.real), float((1j * t3).real)


def path_weight(
    c: ParamCircuit, observable: PauliWord, path: Sequence[PauliWord], thetas: np.ndarray
) -> np.ndarray:
    """Path weight ``f(s, theta)`` with normalized Paulis; ``thetas`` is ``(..., L)``.

    ``path`` lists ``s_0 ... s_L`` (unsigned letters); ``s_L`` must match the
    observable.
    """
    n, L = c.n_qubits, c.depth
    if c.final_gates:
        raise SPDError("path weights need circuits without a trailing Clifford")
    if len(path) != L + 1:
        raise SPDError(f"a path over {L} layers has {L + 1} entries, got {len(path)}")
    thetas = np.asarray(thetas, dtype=float)
    # tr(O s_L) with s_L = P / sqrt(2^n)
    head = math.sqrt(2**n) * (observable.sign if observable.unsigned() == path[L].unsigned() else 0)
    out = np.full(thetas.shape[:-1], float(head))
    for i in range(L):
        a, b, d = _layer_factor_coeffs(c, i, path[i + 1].unsigned(), path[i].unsigned())
        half = thetas[..., i] / 2
        out = out * (a * np.cos(half) ** 2 + b * np.sin(half) ** 2 + d * np.cos(half) * np.sin(half))
    return out


def _check_path(c: ParamCircuit, observable: PauliWord, path: Sequence[PauliWord]) -> None:
    if observable.unsigned() != path[-1].unsigned():
        raise SPDError("path does not start from the observable")
    for i in range(c.depth):
        coeffs = _layer_factor_coeffs(c, i, path[i + 1].unsigned(), path[i].unsigned())
        if max(abs(v) for v in coeffs) < 1e-12:
            raise SPDError(f"path step {i + 1} -> {i} has zero weight for every angle")


def path_weight_orthogonality_check(
    c: ParamCircuit,
    observable: PauliWord,
    paths: tuple[Sequence[PauliWord], Sequence[PauliWord]],
    theta_star: float,
    samples: int = 100_000,
    seed: int | np.random.Generator | None = 0,
) -> MonteCarloEstimate:
    """Monte-Carlo estimate of ``E[f(s) f(s')]`` over the uniform angle box."""
    if c.depth > 4 or c.n_qubits > 2:
        raise SPDError("orthogonality check is for tiny circuits (L <= 4, n <= 2)")
    s, s2 = paths
    _check_path(c, observable, s)
    _check_path(c, observable, s2)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    thetas = rng.uniform(-theta_star, theta_star, size=(samples, c.depth))
    prod = path_weight(c, observable, s, thetas) * path_weight(c, observable, s2, thetas)
    return MonteCarloEstimate(float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(samples)), samples)
