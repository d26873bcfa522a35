"""Parameterized Clifford-plus-rotation circuits.

A circuit is ``U_L ... U_1`` with ``U_i = exp(-i theta_i P_i / 2) C_i``: in
each layer the Clifford ``C_i`` acts first in time, then the Pauli rotation.
An optional trailing Clifford (``final_gates``) acts after the last layer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

from .pauli import CliffordTableau, Gate, PauliWord, as_gate, tableau_from_gates

HALF_PI = math.pi / 2
QUARTER_PI = math.pi / 4
_SNAP = 1e-12


@dataclass(frozen=True)
class Layer:
    """Clifford gates (time order) followed by ``exp(-i angle axis / 2)``."""

    clifford_gates: tuple[Gate, ...]
    axis: PauliWord
    angle: float

    def __post_init__(self):
        gates = tuple(as_gate(g) for g in self.clifford_gates)
        object.__setattr__(self, "clifford_gates", gates)
        axis, angle = self.axis, float(self.angle)
        if axis.is_identity or not axis.is_hermitian:
            raise ValueError(f"rotation axis must be a non-identity Hermitian Pauli, got {axis}")
        if axis.phase_exp == 2:
            axis, angle = axis.unsigned(), -angle
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "angle", angle)
        for g in gates:
            if g.max_qubit() >= axis.n_qubits:
                raise ValueError(f"gate {g} outside a {axis.n_qubits}-qubit register")

    @cached_property
    def clifford(self) -> CliffordTableau:
        return tableau_from_gates(self.clifford_gates, self.axis.n_qubits)

    def with_angle(self, angle: float) -> Layer:
        return Layer(self.clifford_gates, self.axis, angle)


@dataclass(frozen=True)
class ParamCircuit:
    n_qubits: int
    layers: tuple[Layer, ...]
    final_gates: tuple[Gate, ...] = ()
    # group label per layer (e.g. "h" or "J"); lets templates set angles by role
    roles: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "final_gates", tuple(as_gate(g) for g in self.final_gates))
        for layer in self.layers:
            if layer.axis.n_qubits != self.n_qubits:
                raise ValueError("layer axis size does not match the circuit")
        for g in self.final_gates:
            if g.max_qubit() >= self.n_qubits:
                raise ValueError(f"gate {g} outside a {self.n_qubits}-qubit register")
        if self.roles and len(self.roles) != len(self.layers):
            raise ValueError("roles must label every layer")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def angles(self) -> tuple[float, ...]:
        return tuple(layer.angle for layer in self.layers)

    def with_angles(self, angles: Sequence[float]) -> ParamCircuit:
        if len(angles) != self.depth:
            raise ValueError(f"expected {self.depth} angles, got {len(angles)}")
        return ParamCircuit(
            self.n_qubits,
            tuple(layer.with_angle(a) for layer, a in zip(self.layers, angles)),
            self.final_gates,
            self.roles,
        )

    def with_role_angles(self, values: dict[str, float]) -> ParamCircuit:
        if not self.roles:
            raise ValueError("circuit has no layer roles")
        return self.with_angles([values[r] for r in self.roles])

    def is_normalized(self) -> bool:
        return all(abs(a) <= QUARTER_PI + _SNAP for a in self.angles)

    def to_json(self) -> dict:
        out = {
            "n": self.n_qubits,
            "layers": [
                {
                    "clifford_gates": [g.to_json() for g in layer.clifford_gates],
                    "axis": layer.axis.label,
                    "angle": layer.angle,
                }
                for layer in self.layers
            ],
        }
        if self.final_gates:
            out["final_clifford_gates"] = [g.to_json() for g in self.final_gates]
        if self.roles:
            out["roles"] = list(self.roles)
        return out

    @classmethod
    def from_json(cls, data: dict) -> ParamCircuit:
        n = int(data["n"])
        layers = []
        for item in data["layers"]:
            axis = PauliWord.from_label(item["axis"])
            if axis.n_qubits != n:
                raise ValueError(f"axis {item['axis']} does not have {n} qubits")
            layers.append(
                Layer(tuple(Gate.from_json(g) for g in item.get("clifford_gates", [])), axis, item["angle"])
            )
        final = tuple(Gate.from_json(g) for g in data.get("final_clifford_gates", []))
        return cls(n, tuple(layers), final, tuple(data.get("roles", ())))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> ParamCircuit:
        return cls.from_json(json.loads(Path(path).read_text()))


def split_angle(theta: float) -> tuple[float, int]:
    """Return ``(theta', k)`` with ``theta = theta' + k pi/2``, theta' in (-pi/4, pi/4]."""
    k = math.ceil((theta - QUARTER_PI) / HALF_PI - _SNAP)
    rest = theta - k * HALF_PI
    if abs(rest) < _SNAP:
        rest = 0.0
    return rest, k


def normalize_angles(c: ParamCircuit) -> ParamCircuit:
    """Fold multiples of pi/2 into each layer's Clifford so all ``|theta| <= pi/4``.

    ``exp(-i theta P/2) C = exp(-i theta' P/2) exp(-i k pi/4 P) C``; the middle
    factor is appended to the layer's gate list as a ``PR`` gate.
    """
    layers = []
    for layer in c.layers:
        rest, k = split_angle(layer.angle)
        gates = layer.clifford_gates
        if k % 4:
            gates = gates + (Gate("PR", axis=layer.axis, k=k),)
        layers.append(Layer(gates, layer.axis, rest))
    return ParamCircuit(c.n_qubits, tuple(layers), c.final_gates, c.roles)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IsingSpec:
    """Trotterized transverse-field Ising evolution.

    ``theta_J = -2 J T / N`` and ``theta_h = 2 T h / N``.
    """

    n_qubits: int
    edges: tuple[tuple[int, int], ...]
    steps: int
    theta_J: float
    theta_h: float

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        if self.steps < 1:
            raise ValueError("need at least one Trotter step")
        for a, b in self.edges:
            if a == b or not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise ValueError(f"invalid edge ({a}, {b}) for {self.n_qubits} qubits")

    @classmethod
    def chain(cls, n_qubits: int, steps: int, theta_J: float, theta_h: float) -> IsingSpec:
        return cls(n_qubits, tuple((i, i + 1) for i in range(n_qubits - 1)), steps, theta_J, theta_h)

    @classmethod
    def from_physical(cls, n_qubits, edges, steps, J, h, T) -> IsingSpec:
        return cls(n_qubits, tuple(edges), steps, -2 * J * T / steps, 2 * T * h / steps)


def greedy_edge_coloring(edges: Sequence[tuple[int, int]]) -> list[list[tuple[int, int]]]:
    """Partition edges into groups with no shared qubit (first-fit, input order)."""
    groups: list[list[tuple[int, int]]] = []
    used: list[set[int]] = []
    for a, b in edges:
        for g, busy in zip(groups, used):
            if a not in busy and b not in busy:
                g.append((a, b))
                busy.update((a, b))
                break
        else:
            groups.append([(a, b)])
            used.append({a, b})
    return groups


def build_ising_trotter(
    spec: IsingSpec, zz_layer_partition: Sequence[Sequence[tuple[int, int]]] | None = None
) -> ParamCircuit:
    """N repetitions of an R_X layer on every qubit then R_ZZ on each edge.

    Edges are emitted group by group (default: greedy edge coloring), so a
    chain gives two ZZ sublayers and heavy-hex lattices three.  Layer roles
    are ``"h"`` for R_X and ``"J"`` for R_ZZ.
    """
    n = spec.n_qubits
    if zz_layer_partition is None:
        zz_layer_partition = greedy_edge_coloring(spec.edges)
    flat = [tuple(e) for grp in zz_layer_partition for e in grp]
    if sorted(flat) != sorted(spec.edges) or len(set(flat)) != len(flat):
        raise ValueError("partition must contain every edge exactly once")
    layers, roles = [], []
    for _ in range(spec.steps):
        for q in range(n):
            layers.append(Layer((), PauliWord.single(n, q, "X"), spec.theta_h))
            roles.append("h")
        for grp in zz_layer_partition:
            for a, b in grp:
                layers.append(Layer((), PauliWord.from_sparse(n, {a: "Z", b: "Z"}), spec.theta_J))
                roles.append("J")
    return ParamCircuit(n, tuple(layers), (), tuple(roles))


def _default_block(n: int) -> list[tuple[str, object]]:
    items: list[tuple[str, object]] = []
    for q in range(n):
        items.append(("rot", PauliWord.single(n, q, "Y")))
        items.append(("rot", PauliWord.single(n, q, "Z")))
    for q in range(n - 1):
        items.append(("gate", Gate("CX", (q, q + 1))))
    return items


def _alternating_block(n: int) -> list[tuple[str, object]]:
    items: list[tuple[str, object]] = []
    for q in range(n):
        items.append(("rot", PauliWord.single(n, q, "X")))
        items.append(("rot", PauliWord.single(n, q, "Z")))
    for q in range(n - 1):
        items.append(("gate", Gate("CZ", (q, q + 1))))
    return items


BLOCK_TEMPLATES = {"ry_rz_cx": _default_block, "rx_rz_cz": _alternating_block}


def build_hardware_efficient(
    n: int, blocks: int, theta_star: float, template: str = "ry_rz_cx"
) -> ParamCircuit:
    """Repeat a rotation+entangler block ``blocks`` times, every angle ``theta_star``.

    The default block is R_Y then R_Z on every qubit followed by a CX chain
    ``(0,1), (1,2), ...``.  Clifford gates between rotations are attached to
    the next rotation's layer; trailing ones become ``final_gates``.
    """
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    if template not in BLOCK_TEMPLATES:
        raise ValueError(f"unknown template {template!r}; choose from {sorted(BLOCK_TEMPLATES)}")
    items = BLOCK_TEMPLATES[template](n) * blocks
    layers, pending = [], []
    for kind, obj in items:
        if kind == "gate":
            pending.append(obj)
        else:
            layers.append(Layer(tuple(pending), obj, theta_star))
            pending = []
    return ParamCircuit(n, tuple(layers), tuple(pending), ("theta",) * len(layers))
