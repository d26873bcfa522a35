"""Pauli algebra and Clifford tableau conjugation.

Pauli words are stored in symplectic form as two integer bit masks (bit ``q``
is qubit ``q``) plus a power of ``i``.  The phase is taken relative to the
Hermitian letter string, so ``phase_exp == 0`` means the operator is exactly
the tensor product of the letters ``I, X, Y, Z`` written in its label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

_LETTERS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_PREFIXES = {"": 0, "+": 0, "+i": 1, "i": 1, "-": 2, "-i": 3}
_PREFIX_OUT = {0: "+", 1: "+i", 2: "-", 3: "-i"}


def _popcount(v: int) -> int:
    return bin(v).count("1")


def product_phase(xa: int, za: int, xb: int, zb: int) -> int:
    """Power of ``i`` in ``La * Lb = i^k Lc`` for Hermitian letter strings."""
    xc, zc = xa ^ xb, za ^ zb
    return (
        _popcount(xa & za)
        + _popcount(xb & zb)
        + 2 * _popcount(za & xb)
        - _popcount(xc & zc)
    ) % 4


@dataclass(frozen=True)
class PauliWord:
    """``i**phase_exp`` times the tensor product of single-qubit letters.

    >>> PauliWord.from_label("-XIZY")
    PauliWord('-XIZY')
    """

    n_qubits: int
    x_mask: int
    z_mask: int
    phase_exp: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        limit = 1 << self.n_qubits
        if not (0 <= self.x_mask < limit and 0 <= self.z_mask < limit):
            raise ValueError(f"masks do not fit in {self.n_qubits} qubits")
        object.__setattr__(self, "phase_exp", self.phase_exp % 4)

    @classmethod
    def from_label(cls, label: str) -> PauliWord:
        """Parse ``"+XIZY"``-style text; qubit 0 is the leftmost letter."""
        label = label.strip()
        body = label.lstrip("+-i")
        prefix = label[: len(label) - len(body)]
        if prefix not in _PREFIXES or not body:
            raise ValueError(f"invalid Pauli label {label!r}")
        x = z = 0
        for q, ch in enumerate(body.upper()):
            if ch not in _LETTERS:
                raise ValueError(f"invalid Pauli letter {ch!r} in {label!r}")
            bx, bz = _LETTERS[ch]
            x |= bx << q
            z |= bz << q
        return cls(len(body), x, z, _PREFIXES[prefix])

    @classmethod
    def identity(cls, n_qubits: int) -> PauliWord:
        return cls(n_qubits, 0, 0, 0)

    @classmethod
    def single(cls, n_qubits: int, qubit: int, letter: str) -> PauliWord:
        if not 0 <= qubit < n_qubits:
            raise ValueError(f"qubit {qubit} out of range for {n_qubits} qubits")
        bx, bz = _LETTERS[letter.upper()]
        return cls(n_qubits, bx << qubit, bz << qubit)

    @classmethod
    def from_sparse(cls, n_qubits: int, letters: dict[int, str]) -> PauliWord:
        """Build from ``{qubit: letter}``, e.g. ``{0: "Z", 3: "Z"}``."""
        x = z = 0
        for q, ch in letters.items():
            if not 0 <= q < n_qubits:
                raise ValueError(f"qubit {q} out of range for {n_qubits} qubits")
            bx, bz = _LETTERS[ch.upper()]
            x |= bx << q
            z |= bz << q
        return cls(n_qubits, x, z)

    @property
    def letters(self) -> str:
        out = []
        for q in range(self.n_qubits):
            bx = (self.x_mask >> q) & 1
            bz = (self.z_mask >> q) & 1
            out.append("IXZY"[bx + 2 * bz])
        return "".join(out)

    @property
    def label(self) -> str:
        return _PREFIX_OUT[self.phase_exp] + self.letters

    @property
    def weight(self) -> int:
        return _popcount(self.x_mask | self.z_mask)

    @property
    def support(self) -> tuple[int, ...]:
        m = self.x_mask | self.z_mask
        return tuple(q for q in range(self.n_qubits) if (m >> q) & 1)

    @property
    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    @property
    def is_hermitian(self) -> bool:
        return self.phase_exp in (0, 2)

    @property
    def sign(self) -> int:
        """+1 or -1 for Hermitian words; raises otherwise."""
        if not self.is_hermitian:
            raise ValueError(f"{self.label} is not Hermitian")
        return 1 if self.phase_exp == 0 else -1

    def unsigned(self) -> PauliWord:
        return PauliWord(self.n_qubits, self.x_mask, self.z_mask, 0)

    def with_phase(self, phase_exp: int) -> PauliWord:
        return PauliWord(self.n_qubits, self.x_mask, self.z_mask, phase_exp)

    def __mul__(self, other: PauliWord) -> PauliWord:
        return multiply(self, other)

    def __neg__(self) -> PauliWord:
        return self.with_phase(self.phase_exp + 2)

    def __repr__(self) -> str:
        return f"PauliWord({self.label!r})"


def _check_sizes(a: PauliWord, b: PauliWord) -> None:
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"size mismatch: {a.n_qubits} vs {b.n_qubits} qubits")


def multiply(a: PauliWord, b: PauliWord) -> PauliWord:
    """Operator product ``a @ b`` with exact phase."""
    _check_sizes(a, b)
    k = product_phase(a.x_mask, a.z_mask, b.x_mask, b.z_mask)
    return PauliWord(
        a.n_qubits,
        a.x_mask ^ b.x_mask,
        a.z_mask ^ b.z_mask,
        a.phase_exp + b.phase_exp + k,
    )


def commutes(a: PauliWord, b: PauliWord) -> bool:
    _check_sizes(a, b)
    return _popcount((a.x_mask & b.z_mask) ^ (b.x_mask & a.z_mask)) % 2 == 0


# ---------------------------------------------------------------------------
# Clifford gates and tableaus
# ---------------------------------------------------------------------------

# Forward images U P U^dagger of the generators on a gate's local qubits,
# as labels over the local register.
_GATE_RULES: dict[str, tuple[int, dict[str, str]]] = {
    "I": (1, {"X0": "+X", "Z0": "+Z"}),
    "H": (1, {"X0": "+Z", "Z0": "+X"}),
    "S": (1, {"X0": "+Y", "Z0": "+Z"}),
    "SDG": (1, {"X0": "-Y", "Z0": "+Z"}),
    "X": (1, {"X0": "+X", "Z0": "-Z"}),
    "Y": (1, {"X0": "-X", "Z0": "-Z"}),
    "Z": (1, {"X0": "-X", "Z0": "+Z"}),
    "CX": (2, {"X0": "+XX", "Z0": "+ZI", "X1": "+IX", "Z1": "+ZZ"}),
    "CZ": (2, {"X0": "+XZ", "Z0": "+ZI", "X1": "+ZX", "Z1": "+IZ"}),
    "SWAP": (2, {"X0": "+IX", "Z0": "+IZ", "X1": "+XI", "Z1": "+ZI"}),
}
_GATE_ALIASES = {"S†": "SDG", "SDAG": "SDG", "CNOT": "CX", "ID": "I"}
_INVERSES = {"S": "SDG", "SDG": "S"}
NAMED_GATES = tuple(_GATE_RULES)


@dataclass(frozen=True)
class Gate:
    """A named Clifford gate, or a Pauli rotation by a multiple of pi/2.

    ``Gate("PR", axis=P, k=k)`` is ``exp(-i k pi/4 P)``, the Clifford that
    angle normalization folds into a layer.  Qubit tuples follow the gate's
    argument order, e.g. ``Gate("CX", (control, target))``.
    """

    name: str
    qubits: tuple[int, ...] = ()
    axis: PauliWord | None = None
    k: int = 0

    def __post_init__(self):
        name = _GATE_ALIASES.get(self.name.upper(), self.name.upper())
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if name == "PR":
            if self.axis is None or self.axis.is_identity or not self.axis.is_hermitian:
                raise ValueError("PR gate needs a non-identity Hermitian axis")
            axis = self.axis
            k = self.k
            if axis.phase_exp == 2:
                axis, k = axis.unsigned(), -k
            object.__setattr__(self, "axis", axis)
            object.__setattr__(self, "k", k % 4)
            object.__setattr__(self, "qubits", axis.support)
            return
        if name not in _GATE_RULES:
            raise ValueError(f"unknown Clifford gate {self.name!r}")
        arity = _GATE_RULES[name][0]
        if len(self.qubits) != arity:
            raise ValueError(f"{name} acts on {arity} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != arity:
            raise ValueError(f"{name} needs distinct qubits, got {self.qubits}")

    def inverse(self) -> Gate:
        if self.name == "PR":
            return Gate("PR", axis=self.axis, k=-self.k)
        return Gate(_INVERSES.get(self.name, self.name), self.qubits)

    def max_qubit(self) -> int:
        return max(self.qubits) if self.qubits else -1

    def images(self, n_qubits: int) -> dict[tuple[str, int], PauliWord]:
        """Forward images ``U G U^dagger`` of X_q, Z_q for q in the support."""
        if self.max_qubit() >= n_qubits or min(self.qubits, default=0) < 0:
            raise ValueError(f"gate {self} has qubit index outside 0..{n_qubits - 1}")
        out = {}
        if self.name == "PR":
            for q in self.qubits:
                for letter in "XZ":
                    out[(letter, q)] = _pr_image(
                        self.axis, self.k, PauliWord.single(n_qubits, q, letter)
                    )
            return out
        _, rules = _GATE_RULES[self.name]
        for key, local in rules.items():
            letter, j = key[0], int(key[1])
            word = PauliWord.from_label(local)
            out[(letter, self.qubits[j])] = PauliWord.from_sparse(
                n_qubits,
                {self.qubits[i]: ch for i, ch in enumerate(word.letters) if ch != "I"},
            ).with_phase(word.phase_exp)
        return out

    def to_json(self) -> dict:
        if self.name == "PR":
            return {"name": "PR", "axis": self.axis.label, "k": self.k}
        return {"name": self.name, "qubits": list(self.qubits)}

    @classmethod
    def from_json(cls, data: dict) -> Gate:
        if data["name"].upper() == "PR":
            return cls("PR", axis=PauliWord.from_label(data["axis"]), k=int(data["k"]))
        return cls(data["name"], tuple(data["qubits"]))

    def __str__(self) -> str:
        if self.name == "PR":
            return f"PR({self.axis.label},k={self.k})"
        return f"{self.name}{self.qubits}"


def _pr_image(axis: PauliWord, k: int, p: PauliWord) -> PauliWord:
    # exp(-i k pi/4 P) Q exp(+i k pi/4 P) = exp(-i k pi/2 P) Q when {P,Q}=0
    if k % 4 == 0 or commutes(axis, p):
        return p
    if k % 4 == 2:
        return -p
    phase = 3 if k % 4 == 1 else 1
    return multiply(axis.with_phase(phase), p)


@dataclass(frozen=True)
class CliffordTableau:
    """Images of the generators ``X_j`` and ``Z_j`` under ``P -> C P C^dagger``.

    Signs live in each image's ``phase_exp`` (0 or 2).
    """

    n_qubits: int
    image_x: tuple[PauliWord, ...]
    image_z: tuple[PauliWord, ...]

    def __post_init__(self):
        if len(self.image_x) != self.n_qubits or len(self.image_z) != self.n_qubits:
            raise ValueError("tableau needs one X and one Z image per qubit")
        for img in self.image_x + self.image_z:
            if img.n_qubits != self.n_qubits or not img.is_hermitian:
                raise ValueError(f"invalid tableau image {img!r}")

    @classmethod
    def identity(cls, n_qubits: int) -> CliffordTableau:
        return cls(
            n_qubits,
            tuple(PauliWord.single(n_qubits, j, "X") for j in range(n_qubits)),
            tuple(PauliWord.single(n_qubits, j, "Z") for j in range(n_qubits)),
        )

    @property
    def support(self) -> tuple[int, ...]:
        """Qubits whose generators are not mapped to themselves."""
        n = self.n_qubits
        return tuple(
            j
            for j in range(n)
            if self.image_x[j] != PauliWord.single(n, j, "X")
            or self.image_z[j] != PauliWord.single(n, j, "Z")
        )

    @property
    def is_identity(self) -> bool:
        return not self.support

    def is_symplectic(self) -> bool:
        imgs = list(self.image_x) + list(self.image_z)
        n = self.n_qubits
        for a in range(2 * n):
            for b in range(a + 1, 2 * n):
                should_anticommute = b == a + n
                if commutes(imgs[a], imgs[b]) == should_anticommute:
                    return False
        return True

    def compose(self, first: CliffordTableau) -> CliffordTableau:
        """Tableau of ``self`` applied after ``first`` (``C_self C_first``)."""
        if first.n_qubits != self.n_qubits:
            raise ValueError("size mismatch between tableaus")
        return CliffordTableau(
            self.n_qubits,
            tuple(conjugate(self, p) for p in first.image_x),
            tuple(conjugate(self, p) for p in first.image_z),
        )

    def inverse(self) -> CliffordTableau:
        """Tableau of ``C^dagger``, via the symplectic inverse ``Omega S^T Omega``."""
        n = self.n_qubits
        imgs = list(self.image_x) + list(self.image_z)
        # column j of S is the symplectic vector of image j: (x bits, z bits)
        def bit(row: int, col: int) -> int:
            p = imgs[col]
            return (p.x_mask >> row) & 1 if row < n else (p.z_mask >> (row - n)) & 1

        inv_x, inv_z = [], []
        for j in range(2 * n):
            # column j of S^-1 = Omega S^T Omega e_j; S^T rows are image vectors
            target = j + n if j < n else j - n
            # (S^T Omega e_j)[a] = S[target, a] i.e. bit `target` of image a
            vec = [bit(target, a) for a in range(2 * n)]
            # Omega swaps the x and z halves
            col = vec[n:] + vec[:n]
            x = sum(col[q] << q for q in range(n))
            z = sum(col[n + q] << q for q in range(n))
            pre = PauliWord(n, x, z)
            want = PauliWord.single(n, j % n, "X" if j < n else "Z")
            got = conjugate(self, pre)
            if got.unsigned() != want:
                raise ValueError("tableau is not symplectic; cannot invert")
            signed = pre.with_phase(got.phase_exp)
            (inv_x if j < n else inv_z).append(signed)
        return CliffordTableau(n, tuple(inv_x), tuple(inv_z))


def conjugate(t: CliffordTableau, p: PauliWord) -> PauliWord:
    """Apply the tableau's map ``P -> C P C^dagger`` to ``p``, sign included."""
    if t.n_qubits != p.n_qubits:
        raise ValueError(f"size mismatch: tableau {t.n_qubits} vs Pauli {p.n_qubits}")
    n = p.n_qubits
    # letters form: L = i^{|x&z|} prod_j X_j^{x_j} Z_j^{z_j}
    acc = PauliWord(n, 0, 0, p.phase_exp + _popcount(p.x_mask & p.z_mask))
    for j in range(n):
        if (p.x_mask >> j) & 1:
            acc = multiply(acc, t.image_x[j])
        if (p.z_mask >> j) & 1:
            acc = multiply(acc, t.image_z[j])
    return acc


def gate_tableau(gate: Gate, n_qubits: int) -> CliffordTableau:
    imgs = gate.images(n_qubits)
    base = CliffordTableau.identity(n_qubits)
    return CliffordTableau(
        n_qubits,
        tuple(imgs.get(("X", j), base.image_x[j]) for j in range(n_qubits)),
        tuple(imgs.get(("Z", j), base.image_z[j]) for j in range(n_qubits)),
    )


def apply_gate(gate: Gate, p: PauliWord) -> PauliWord:
    """``U p U^dagger`` for a single gate, touching only its support."""
    n = p.n_qubits
    imgs = gate.images(n)
    acc = PauliWord(n, 0, 0, p.phase_exp + _popcount(p.x_mask & p.z_mask))
    for j in range(n):
        if (p.x_mask >> j) & 1:
            acc = multiply(acc, imgs.get(("X", j), PauliWord.single(n, j, "X")))
        if (p.z_mask >> j) & 1:
            acc = multiply(acc, imgs.get(("Z", j), PauliWord.single(n, j, "Z")))
    return acc


def tableau_from_gates(gates: Iterable[Gate | tuple], n_qubits: int) -> CliffordTableau:
    """Compose gates in time order (first element acts first)."""
    tab = CliffordTableau.identity(n_qubits)
    for g in gates:
        g = as_gate(g)
        if g.max_qubit() >= n_qubits or min(g.qubits, default=0) < 0:
            raise ValueError(f"gate {g} has qubit index outside 0..{n_qubits - 1}")
        tab = CliffordTableau(
            n_qubits,
            tuple(apply_gate(g, p) for p in tab.image_x),
            tuple(apply_gate(g, p) for p in tab.image_z),
        )
    return tab


def as_gate(g: Gate | tuple | dict) -> Gate:
    if isinstance(g, Gate):
        return g
    if isinstance(g, dict):
        return Gate.from_json(g)
    name, *qubits = g
    if len(qubits) == 1 and isinstance(qubits[0], (tuple, list)):
        qubits = qubits[0]
    return Gate(name, tuple(qubits))


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """Real-weighted sum of Hermitian Pauli words, signs folded into weights."""

    n_qubits: int
    terms: tuple[tuple[PauliWord, float], ...]

    def __post_init__(self):
        clean = []
        for p, w in self.terms:
            if p.n_qubits != self.n_qubits:
                raise ValueError("observable term has the wrong qubit count")
            if not p.is_hermitian:
                raise ValueError(f"observable term {p.label} is not Hermitian")
            clean.append((p.unsigned(), float(w) * p.sign))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def from_labels(cls, items: Sequence[tuple[str, float]] | dict[str, float]) -> Observable:
        if isinstance(items, dict):
            items = list(items.items())
        terms = [(PauliWord.from_label(lbl), w) for lbl, w in items]
        if not terms:
            raise ValueError("observable needs at least one term")
        return cls(terms[0][0].n_qubits, tuple(terms))

    @classmethod
    def pauli(cls, p: PauliWord | str, weight: float = 1.0) -> Observable:
        if isinstance(p, str):
            p = PauliWord.from_label(p)
        return cls(p.n_qubits, ((p, weight),))

    @classmethod
    def magnetization(cls, n_qubits: int) -> Observable:
        """``sum_i Z_i / n``."""
        return cls(
            n_qubits,
            tuple((PauliWord.single(n_qubits, q, "Z"), 1.0 / n_qubits) for q in range(n_qubits)),
        )

    @property
    def paulis(self) -> list[PauliWord]:
        return [p for p, _ in self.terms]

    @property
    def weights(self) -> list[float]:
        return [w for _, w in self.terms]

    def norm1(self) -> float:
        return sum(abs(w) for _, w in self.terms)

    def to_json(self) -> list:
        return [[p.label, w] for p, w in self.terms]

    @classmethod
    def from_json(cls, data) -> Observable:
        if isinstance(data, str):
            if data.startswith("magnetization:"):
                return cls.magnetization(int(data.split(":")[1]))
            return cls.pauli(data)
        return cls.from_labels([(lbl, w) for lbl, w in data])
