import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpdr.circuit import (
    IsingSpec,
    Layer,
    ParamCircuit,
    build_hardware_efficient,
    build_ising_trotter,
    greedy_edge_coloring,
    normalize_angles,
    split_angle,
)
from cpdr.pauli import Gate, Observable, PauliWord, conjugate
from cpdr.spd import spd_expectation

from oracles import LOCAL, dense_pauli, embed, equal_up_to_phase, rotation


def dense_unitary(c: ParamCircuit) -> np.ndarray:
    """Independent dense construction of ``U_L ... U_1`` (then the final gates)."""
    n = c.n_qubits
    u = np.eye(1 << n, dtype=complex)

    def gate(g):
        if g.name == "PR":
            return rotation(g.axis.letters, g.k * math.pi / 2)
        return embed(LOCAL[g.name], g.qubits, n)

    for layer in c.layers:
        for g in layer.clifford_gates:
            u = gate(g) @ u
        u = rotation(layer.axis.letters, layer.angle) @ u
    for g in c.final_gates:
        u = gate(g) @ u
    return u


def single(label, angle, gates=()):
    p = PauliWord.from_label(label)
    return ParamCircuit(p.n_qubits, (Layer(tuple(gates), p, angle),))


def test_small_angle_unchanged():
    c = single("X", 0.3)
    assert normalize_angles(c) == c


def test_quarter_turn_becomes_clifford():
    c = single("X", math.pi / 2)
    nc = normalize_angles(c)
    layer = nc.layers[0]
    assert layer.angle == 0.0
    assert [g.name for g in layer.clifford_gates] == ["PR"]
    assert conjugate(layer.clifford, PauliWord.from_label("Z")) == PauliWord.from_label("-Y")
    assert equal_up_to_phase(dense_unitary(nc), rotation("X", math.pi / 2))


def test_negative_three_eighths():
    rest, k = split_angle(-3 * math.pi / 8)
    assert k == -1
    assert rest == pytest.approx(math.pi / 8)
    c = single("Y", -3 * math.pi / 8)
    assert equal_up_to_phase(dense_unitary(normalize_angles(c)), dense_unitary(c))


@pytest.mark.parametrize(
    "theta, expected",
    [(math.pi / 4, math.pi / 4), (-math.pi / 4, math.pi / 4), (math.pi, 0.0), (3 * math.pi / 4, math.pi / 4)],
)
def test_boundary_tie_breaks_to_positive(theta, expected):
    rest, _ = split_angle(theta)
    assert rest == pytest.approx(expected, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(-20, 20, allow_nan=False))
def test_split_angle_range(theta):
    rest, k = split_angle(theta)
    assert -math.pi / 4 < rest <= math.pi / 4 + 1e-12
    assert rest + k * math.pi / 2 == pytest.approx(theta, abs=1e-9)


def random_circuit(rng, n, depth, max_gates=2):
    layers = []
    for _ in range(depth):
        gates = []
        for _ in range(rng.integers(0, max_gates + 1)):
            if n > 1 and rng.random() < 0.4:
                a, b = rng.choice(n, 2, replace=False)
                gates.append(Gate(["CX", "CZ", "SWAP"][rng.integers(3)], (int(a), int(b))))
            else:
                gates.append(Gate(["H", "S", "SDG", "X"][rng.integers(4)], (int(rng.integers(n)),)))
        letters = "".join(rng.choice(list("IXYZ"), n))
        if set(letters) == {"I"}:
            letters = "Z" + letters[1:]
        layers.append(Layer(tuple(gates), PauliWord.from_label(letters), float(rng.uniform(-7, 7))))
    return ParamCircuit(n, tuple(layers))


@pytest.mark.parametrize("seed", range(15))
def test_normalization_preserves_unitary(seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(rng, int(rng.integers(1, 4)), int(rng.integers(1, 6)))
    nc = normalize_angles(c)
    assert nc.is_normalized()
    assert all(abs(a) <= math.pi / 4 + 1e-12 for a in nc.angles)
    assert equal_up_to_phase(dense_unitary(nc), dense_unitary(c))
    assert normalize_angles(nc) == nc


def test_ising_two_qubits_layout():
    c = build_ising_trotter(IsingSpec.chain(2, 1, theta_J=-0.2, theta_h=0.1))
    assert [layer.axis.label for layer in c.layers] == ["+XI", "+IX", "+ZZ"]
    assert c.angles == (0.1, 0.1, -0.2)
    assert c.roles == ("h", "h", "J")


def test_ising_count_formula():
    c = build_ising_trotter(IsingSpec.chain(3, 2, 0.1, 0.2))
    assert c.depth == 2 * (3 + 2) == 10


def test_ising_quarter_turn_zz_becomes_clifford():
    c = normalize_angles(build_ising_trotter(IsingSpec.chain(4, 2, -math.pi / 2, 0.1)))
    for layer, role in zip(c.layers, c.roles):
        if role == "J":
            assert layer.angle == 0.0


@pytest.mark.parametrize("kh, kj", [(0, 0), (1, 1), (2, -1), (3, 2), (1, 0)])
def test_ising_clifford_points_are_exact_at_m0(kh, kj):
    spec = IsingSpec.chain(3, 2, kj * math.pi / 2, kh * math.pi / 2)
    c = build_ising_trotter(spec)
    o = Observable.magnetization(3)
    zs = [dense_pauli("".join("Z" if j == q else "I" for j in range(3))) for q in range(3)]
    psi = dense_unitary(c)[:, 0]
    exact = float(np.mean([np.real(np.vdot(psi, z @ psi)) for z in zs]))
    assert spd_expectation(normalize_angles(c), o, M=0).value == pytest.approx(exact, abs=1e-12)


def test_from_physical():
    spec = IsingSpec.from_physical(3, [(0, 1), (1, 2)], steps=4, J=1.0, h=0.5, T=2.0)
    assert spec.theta_J == pytest.approx(-1.0)
    assert spec.theta_h == pytest.approx(0.5)


def test_partition_validation():
    spec = IsingSpec.chain(3, 1, 0.1, 0.1)
    with pytest.raises(ValueError):
        build_ising_trotter(spec, [[(0, 1)]])
    with pytest.raises(ValueError):
        build_ising_trotter(spec, [[(0, 1), (1, 2)], [(1, 2)]])
    c = build_ising_trotter(spec, [[(1, 2)], [(0, 1)]])
    assert [layer.axis.label for layer in c.layers][-2:] == ["+IZZ", "+ZZI"]


def test_invalid_specs():
    with pytest.raises(ValueError):
        IsingSpec.chain(3, 0, 0.1, 0.1)
    with pytest.raises(ValueError):
        IsingSpec(3, ((0, 3),), 1, 0.1, 0.1)


def test_edge_coloring_has_no_shared_qubits():
    heavy_hex_like = [(0, 1), (1, 2), (2, 3), (3, 4), (1, 5), (3, 6), (5, 7), (6, 8)]
    groups = greedy_edge_coloring(heavy_hex_like)
    assert len(groups) <= 3
    for g in groups:
        qubits = [q for e in g for q in e]
        assert len(qubits) == len(set(qubits))
    assert sorted(e for g in groups for e in g) == sorted(heavy_hex_like)


def test_hardware_efficient_two_qubit_block():
    c = build_hardware_efficient(2, 1, 0.1)
    assert c.depth == 4
    gates = [g for layer in c.layers for g in layer.clifford_gates] + list(c.final_gates)
    assert gates == [Gate("CX", (0, 1))]
    assert set(c.angles) == {0.1}


def test_hardware_efficient_five_blocks():
    c = build_hardware_efficient(15, 5, math.pi / 20)
    assert c.depth == 5 * 2 * 15
    cx = sum(g.name == "CX" for layer in c.layers for g in layer.clifford_gates) + len(c.final_gates)
    assert cx == 5 * 14
    assert all(a == math.pi / 20 for a in c.angles)


def test_hardware_efficient_clifford_at_zero_angle():
    c = build_hardware_efficient(3, 1, 0.0)
    o = Observable.magnetization(3)
    psi = dense_unitary(c)[:, 0]
    zs = [dense_pauli("".join("Z" if j == q else "I" for j in range(3))) for q in range(3)]
    exact = float(np.mean([np.real(np.vdot(psi, z @ psi)) for z in zs]))
    assert spd_expectation(c, o, M=0).value == pytest.approx(exact, abs=1e-12)


def test_hardware_efficient_rejects_bad_input():
    with pytest.raises(ValueError):
        build_hardware_efficient(3, 0, 0.1)
    with pytest.raises(ValueError):
        build_hardware_efficient(3, 1, 0.1, template="nope")


def test_layer_folds_negative_axis():
    layer = Layer((), PauliWord.from_label("-ZZ"), 0.4)
    assert layer.axis == PauliWord.from_label("ZZ")
    assert layer.angle == -0.4
    with pytest.raises(ValueError):
        Layer((), PauliWord.from_label("II"), 0.1)
    with pytest.raises(ValueError):
        Layer((), PauliWord.from_label("iZ"), 0.1)


def test_json_round_trip(tmp_path):
    c = normalize_angles(build_hardware_efficient(3, 2, 1.3))
    path = tmp_path / "c.json"
    c.save(path)
    back = ParamCircuit.load(path)
    assert back == c
    assert back.roles == c.roles
    assert np.allclose(dense_unitary(back), dense_unitary(c))


def test_role_angles():
    c = build_ising_trotter(IsingSpec.chain(3, 1, 0.0, 0.0))
    bound = c.with_role_angles({"h": 0.2, "J": -0.3})
    assert bound.angles == (0.2, 0.2, 0.2, -0.3, -0.3)
    with pytest.raises(ValueError):
        c.with_angles([0.1])
