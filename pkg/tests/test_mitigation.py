import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpdr.circuit import IsingSpec, build_ising_trotter
from cpdr.densesim import NoiseModel, exact_expectation
from cpdr.mitigation import (
    CPDR_ALPHA,
    NoiseLevelSet,
    RidgeFit,
    SimulatorBackend,
    SingularSystemError,
    build_clifford_training_set,
    build_cpdr_training_set,
    build_insertion_set,
    cpdr_pec_mitigate,
    cpdr_zne_mitigate,
    fit_training_set,
    ising_training_grid,
    richardson_weights,
    ridge_fit,
    zne_extrapolate,
)
from cpdr.mitigation.io import (
    SchemaError,
    read_feature_table,
    read_fit_json,
    sample_rows,
    write_fit_json,
    write_rows,
)
from cpdr.mitigation.training import bind, reference_value
from cpdr.mitigation.zne import exponential_intercept, polynomial_intercept
from cpdr.pauli import Observable

# ---------------------------------------------------------------------------
# Richardson / ZNE
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "levels, expected",
    [((1,), (1,)), ((1, 2), (2, -1)), ((1, 1.2, 1.6), (16, -20, 5))],
)
def test_richardson_examples(levels, expected):
    assert richardson_weights(levels) == pytest.approx(expected, abs=1e-9)


def test_richardson_matches_vandermonde_solve():
    lv = np.array([1.0, 1.2, 1.6])
    # sum x_i l_i^k = [k == 0]
    want = np.linalg.solve(np.vander(lv, increasing=True).T, [1.0, 0.0, 0.0])
    assert richardson_weights(NoiseLevelSet(tuple(lv))) == pytest.approx(want, abs=1e-12)


level_sets = st.lists(st.floats(0.1, 5.0), min_size=1, max_size=5, unique=True).filter(
    lambda v: min(abs(a - b) for a in v for b in v if a != b) > 0.05 if len(v) > 1 else True
)


@settings(max_examples=200, deadline=None)
@given(level_sets)
def test_richardson_annihilates_moments(levels):
    x = richardson_weights(levels)
    lv = np.array(levels)
    scale = np.abs(x).sum()
    assert x.sum() == pytest.approx(1.0, abs=1e-9 * scale)
    for k in range(1, len(levels)):
        assert abs(np.dot(x, lv**k)) <= 1e-9 * scale * lv.max() ** k


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_richardson_recovers_quadratic_intercept(a, b, c):
    lv = (1.0, 1.2, 1.6)
    f = [a + b * v + c * v * v for v in lv]
    assert zne_extrapolate(lv, f, "richardson") == pytest.approx(a, abs=1e-9)
    assert zne_extrapolate(lv, f, "quadratic") == pytest.approx(a, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_richardson_paths_agree(f):
    lv = (1.0, 1.2, 1.6)
    assert zne_extrapolate(lv, f, "richardson") == pytest.approx(float(np.dot(richardson_weights(lv), f)), abs=1e-12)
    assert zne_extrapolate(lv, f, "quadratic") == pytest.approx(polynomial_intercept(lv, f, 2), abs=1e-9)
    assert zne_extrapolate(lv, f, "linear") == pytest.approx(polynomial_intercept(lv, f, 1), abs=1e-12)


def test_linear_exact_fit():
    lv = (1.0, 1.2, 1.6)
    assert zne_extrapolate(lv, [3 - 2 * v for v in lv], "linear") == pytest.approx(3.0, abs=1e-12)


def test_exponential_exact_fit():
    lv = (1.0, 1.2, 1.6)
    f = [0.8 * math.exp(-0.5 * v) for v in lv]
    assert zne_extrapolate(lv, f, "exponential") == pytest.approx(0.8, abs=1e-9)
    assert zne_extrapolate(lv, [-v for v in f], "exponential") == pytest.approx(-0.8, abs=1e-9)
    assert exponential_intercept(lv, f) == pytest.approx(0.8, abs=1e-9)


def test_exponential_rejects_mixed_signs():
    with pytest.raises(ValueError):
        zne_extrapolate((1, 1.2, 1.6), [0.3, -0.1, 0.2], "exponential")


def test_zne_validation():
    with pytest.raises(ValueError):
        zne_extrapolate((1, 1.2), [0.1, 0.2, 0.3], "linear")
    with pytest.raises(ValueError):
        zne_extrapolate((1, 1.2), [0.1, 0.2], "quadratic")
    with pytest.raises(ValueError):
        zne_extrapolate((1, 1.2), [0.1, 0.2], "cubic")
    with pytest.raises(ValueError):
        richardson_weights((1, 1))
    with pytest.raises(ValueError):
        NoiseLevelSet((1.2, 1.6))
    with pytest.raises(ValueError):
        NoiseLevelSet((1.0, 1.6, 1.2))


def test_auto_selects_exact_models():
    lv = (1.0, 1.2, 1.6)
    expo = [0.8 * math.exp(-0.5 * v) for v in lv]
    assert zne_extrapolate(lv, expo, "auto") == pytest.approx(0.8, abs=1e-9)
    lin = [0.5 - 0.1 * v for v in lv]
    assert zne_extrapolate(lv, lin, "auto") == pytest.approx(0.5, abs=1e-9)
    # the same exact line, but steep enough to trip the 2 max|f| guard
    steep = [3 - 2 * v for v in lv]
    assert zne_extrapolate(lv, steep, "auto") == steep[0]
    flat = [0.4, 0.4, 0.4]
    assert zne_extrapolate(lv, flat, "auto") == pytest.approx(0.4, abs=1e-12)


def test_auto_falls_back_on_wild_fits():
    lv = (1.0, 1.2, 1.6)
    # a steep linear trend through small values extrapolates far outside the data
    f = [0.02, -0.05, -0.19]
    est = zne_extrapolate(lv, f, "auto")
    assert abs(est) <= 2 * max(abs(v) for v in f)


def test_zne_batched():
    lv = (1.0, 1.2, 1.6)
    f = np.array([[1 - 0.1 * v for v in lv], [0.5 + 0.05 * v for v in lv], [3 - 2 * v for v in lv]])
    assert zne_extrapolate(lv, f, "linear") == pytest.approx([1, 0.5, 3])
    assert zne_extrapolate(lv, f, "auto") == pytest.approx([1, 0.5, 1.0])


# ---------------------------------------------------------------------------
# ridge regression
# ---------------------------------------------------------------------------


def test_ridge_single_feature_exact():
    x = np.array([[0.1], [0.5], [-0.3]])
    fit = ridge_fit(x, 2 * x[:, 0], alpha=0.0)
    assert fit.coefficients == pytest.approx([2.0], abs=1e-12)
    assert fit.train_rmse == pytest.approx(0.0, abs=1e-12)


def test_ridge_shrinks_to_zero():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(10, 3))
    fit = ridge_fit(x, rng.normal(size=10), alpha=1e9)
    assert np.linalg.norm(fit.coefficients) < 1e-7


def test_ridge_hand_system():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    y = np.array([1.0, 2.0, 4.0])
    alpha = 0.5
    # X^T X + aI = [[2.5, 1], [1, 2.5]], X^T y = [5, 6]; det = 5.25
    want = np.array([2.5 * 5 - 1 * 6, -1 * 5 + 2.5 * 6]) / 5.25
    assert ridge_fit(x, y, alpha).coefficients == pytest.approx(want, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_ridge_recovers_planted_coefficients(seed, l):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3 * l + 5, l))
    c = rng.normal(size=l)
    assert ridge_fit(x, x @ c, alpha=0.0).coefficients == pytest.approx(c, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 10), st.floats(0, 10))
def test_ridge_matches_augmented_lstsq_and_shrinks(seed, a1, a2):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(12, 3))
    y = rng.normal(size=12)
    lo, hi = sorted((a1, a2))
    c_lo = ridge_fit(x, y, lo).coefficients
    c_hi = ridge_fit(x, y, hi).coefficients
    assert np.linalg.norm(c_lo) >= np.linalg.norm(c_hi) - 1e-12
    aug_x = np.vstack([x, math.sqrt(hi) * np.eye(3)])
    aug_y = np.concatenate([y, np.zeros(3)])
    assert c_hi == pytest.approx(np.linalg.lstsq(aug_x, aug_y, rcond=None)[0], abs=1e-9)


def test_ridge_singular_is_reported():
    x = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularSystemError):
        ridge_fit(x, [1.0, 2.0, 3.0], alpha=0.0)
    with pytest.raises(SingularSystemError):
        ridge_fit(np.ones((1, 2)), [1.0], alpha=0.0)
    assert np.all(np.isfinite(ridge_fit(x, [1.0, 2.0, 3.0], alpha=1e-3).coefficients))


def test_ridge_validation():
    with pytest.raises(ValueError):
        ridge_fit(np.ones((3, 2)), [1.0, 2.0], 0.1)
    with pytest.raises(ValueError):
        ridge_fit(np.array([[np.nan]]), [1.0], 0.1)
    with pytest.raises(ValueError):
        ridge_fit(np.ones((2, 1)), [1.0, 2.0], -1.0)
    with pytest.raises(ValueError):
        RidgeFit(np.array([np.inf]))


def test_ridge_is_deterministic():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(20, 3)), rng.normal(size=20)
    assert ridge_fit(x, y).coefficients.tobytes() == ridge_fit(x, y).coefficients.tobytes()
    assert ridge_fit(x, y).alpha == CPDR_ALPHA


# ---------------------------------------------------------------------------
# mitigation maps
# ---------------------------------------------------------------------------


def test_cpdr_with_richardson_coefficients_recovers_intercept():
    lv = (1.0, 1.2, 1.6)
    fit = RidgeFit(richardson_weights(lv))
    feats = [0.7 - 0.3 * v + 0.05 * v * v for v in lv]
    assert cpdr_zne_mitigate(feats, fit) == pytest.approx(0.7, abs=1e-12)


def test_unit_coefficients_return_raw_value():
    assert cpdr_zne_mitigate([0.42, 0.3, 0.1], RidgeFit(np.array([1.0, 0.0, 0.0]))) == 0.42
    assert cpdr_pec_mitigate([0.42, 0.3, 0.1, 0.9], RidgeFit(np.array([1.0, 0, 0, 0]))) == 0.42
    with pytest.raises(ValueError):
        cpdr_zne_mitigate([0.1, 0.2], RidgeFit(np.array([1.0, 0.0, 0.0])))


# ---------------------------------------------------------------------------
# training sets
# ---------------------------------------------------------------------------


def small_ising(n=3, steps=1):
    return build_ising_trotter(IsingSpec.chain(n, steps, 0.0, 0.0))


def test_insertion_set_examples():
    c = build_ising_trotter(IsingSpec.chain(9, 5, 0.1, -0.1))
    assert [op.kind for op in build_insertion_set(c, 0)] == ["none"]
    ops = build_insertion_set(c, 20, seed=7)
    assert len(ops) == 21
    assert ops[0].kind == "none" and ops[0].id == 1
    assert [op.id for op in ops] == list(range(1, 22))
    triples = {(op.location, op.qubit, op.kind) for op in ops[1:]}
    assert len(triples) == 20
    for op in ops[1:]:
        assert op.qubit in c.layers[op.location].axis.support
    assert ops == build_insertion_set(c, 20, seed=7)
    assert ops != build_insertion_set(c, 20, seed=8)


def test_insertion_set_too_large():
    c = small_ising(2, 1)  # X, X, ZZ layers -> 4 positions
    assert len(build_insertion_set(c, 8)) == 9
    with pytest.raises(ValueError):
        build_insertion_set(c, 9)


def test_default_grid_size():
    grid = ising_training_grid()
    assert len(grid) == 144
    hs = sorted({p["h"] for p in grid})
    assert hs[:6] == pytest.approx([i * math.pi / 120 for i in range(6)])
    assert hs[-1] == pytest.approx(59 * math.pi / 120)
    assert all(p["J"] <= 0 for p in grid)
    with pytest.raises(ValueError):
        ising_training_grid(())


def test_clifford_grid_point_reference_is_exact():
    t = small_ising(4, 2)
    o = Observable.magnetization(4)
    c = bind(t, {"h": 0.0, "J": 0.0})
    assert reference_value(c, o, "spd", 13) == pytest.approx(exact_expectation(c, o), abs=1e-12)


@pytest.mark.parametrize("point", [(0, 0), (3, 57), (5, 5), (55, 2), (59, 59), (57, 54)])
def test_reference_close_to_dense_on_benchmark(point):
    t = build_ising_trotter(IsingSpec.chain(8, 4, 0.0, 0.0))
    o = Observable.magnetization(8)
    c = bind(t, {"h": point[0] * math.pi / 120, "J": -point[1] * math.pi / 120})
    assert abs(reference_value(c, o, "spd", 13) - exact_expectation(c, o)) <= 1e-2


def test_cpdr_zne_training_set():
    t = small_ising()
    o = Observable.magnetization(3)
    grid = ising_training_grid((0, 1, 59), 120)
    backend = SimulatorBackend(NoiseModel(), NoiseLevelSet())
    samples = build_cpdr_training_set(t, grid, backend, o, reference_M=13, shots=None)
    assert len(samples) == 9
    assert all(s.features.shape == (3,) for s in samples)
    assert all(abs(s.reference) <= o.norm1() + 1e-12 for s in samples)
    assert all(abs(s.features[0] - s.reference) > 1e-4 for s in samples)
    again = build_cpdr_training_set(t, grid, backend, o, shots=1000, seed=3)
    repeat = build_cpdr_training_set(t, grid, backend, o, shots=1000, seed=3)
    assert fit_training_set(again, CPDR_ALPHA).coefficients.tobytes() == (
        fit_training_set(repeat, CPDR_ALPHA).coefficients.tobytes()
    )
    with pytest.raises(ValueError):
        build_cpdr_training_set(t, [], backend, o)


def test_exact_references_match_on_small_circuit():
    t = small_ising()
    o = Observable.magnetization(3)
    grid = ising_training_grid((2, 57), 120)
    backend = SimulatorBackend(NoiseModel(), NoiseLevelSet())
    a = build_cpdr_training_set(t, grid, backend, o, reference="spd", shots=None)
    b = build_cpdr_training_set(t, grid, backend, o, reference="exact", shots=None)
    for s, e in zip(a, b):
        # L = 10 layers, so M = 13 is already the full expansion
        assert s.reference == pytest.approx(e.reference, abs=1e-12)


def test_noiseless_pec_training_reproduces_references():
    t = small_ising(3, 1)
    o = Observable.magnetization(3)
    ops = build_insertion_set(t, 4, seed=0)
    backend = SimulatorBackend(NoiseModel.noiseless())
    samples = build_clifford_training_set(t, 40, backend, o, ops, shots=None, seed=0)
    for s in samples:
        assert s.features[0] == pytest.approx(s.reference, abs=1e-12)
    fit = fit_training_set(samples, 1e-8)
    # c = e_1 already has zero residual, so the fit only moves by shrinkage
    assert fit.train_rmse < 1e-3
    raw = np.array([s.features for s in samples])
    assert raw @ fit.coefficients == pytest.approx(raw[:, 0], abs=1e-3)


def test_clifford_training_references_are_exact():
    t = small_ising(3, 2)
    o = Observable.magnetization(3)
    ops = build_insertion_set(t, 3, seed=1)
    samples = build_clifford_training_set(t, 10, SimulatorBackend(NoiseModel()), o, ops, shots=None, seed=4)
    for s in samples:
        assert set(s.angles) <= {0.0, math.pi / 2, -math.pi / 2, math.pi}
        assert s.reference == pytest.approx(exact_expectation(t.with_angles(s.angles), o), abs=1e-12)
        assert s.features.shape == (4,)


# ---------------------------------------------------------------------------
# CSV / JSON
# ---------------------------------------------------------------------------


def _table(tmp_path, rows):
    path = tmp_path / "t.csv"
    write_rows(path, rows)
    return path


def test_feature_table_round_trip(tmp_path):
    t = small_ising()
    o = Observable.magnetization(3)
    backend = SimulatorBackend()
    train = build_cpdr_training_set(t, ising_training_grid((0, 59)), backend, o, shots=500, seed=1)
    target = build_cpdr_training_set(t, [{"h": 0.3, "J": -0.2}], backend, o, shots=500, seed=2)
    rows = sample_rows(train, backend.levels.levels, 500, 1) + sample_rows(
        target, backend.levels.levels, 500, 2, train=False, exact_values=[target[0].reference]
    )
    table = read_feature_table(_table(tmp_path, rows), min_ids=2)
    assert table.ids == (1.0, 1.2, 1.6)
    assert len(table.training) == 4 and len(table.targets) == 1
    assert table.training[0].features == pytest.approx(train[0].features, abs=0)
    assert table.targets[0].exact == target[0].reference
    assert table.targets[0].angles == {"h": 0.3, "J": -0.2}


def test_feature_table_rejects_missing_level(tmp_path):
    base = {"theta_h": 0.1, "shots": 10, "seed": 0, "train": 1, "reference": 0.5}
    rows = [
        dict(base, level_or_op_id=1.0, noisy_value=0.4),
        dict(base, level_or_op_id=1.2, noisy_value=0.3),
        dict(base, theta_h=0.2, level_or_op_id=1.0, noisy_value=0.4),
    ]
    with pytest.raises(SchemaError, match="missing ids"):
        read_feature_table(_table(tmp_path, rows))


def test_feature_table_rejects_single_level_and_bad_schema(tmp_path):
    base = {"theta_h": 0.1, "shots": 10, "seed": 0, "train": 1, "reference": 0.5}
    with pytest.raises(SchemaError, match="at least 2"):
        read_feature_table(_table(tmp_path, [dict(base, level_or_op_id=1.0, noisy_value=0.4)]), min_ids=2)
    bad = tmp_path / "bad.csv"
    bad.write_text("theta_h,noisy_value\n0.1,0.3\n")
    with pytest.raises(SchemaError, match="missing columns"):
        read_feature_table(bad)
    no_ref = [dict(base, level_or_op_id=1.0, noisy_value=0.4, reference="")]
    with pytest.raises(SchemaError, match="no reference"):
        read_feature_table(_table(tmp_path, no_ref))
    dup = [dict(base, level_or_op_id=1.0, noisy_value=0.4)] * 2
    with pytest.raises(SchemaError, match="duplicate"):
        read_feature_table(_table(tmp_path, dup))
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(SchemaError):
        read_feature_table(empty)


def test_fit_json_round_trip(tmp_path):
    fit = ridge_fit(np.array([[1.0, 0.2], [0.3, 1.0], [0.5, 0.5]]), [1.0, 0.0, 0.4])
    path = tmp_path / "fit.json"
    write_fit_json(path, fit, "cpdr-zne", [1.0, 1.2])
    data = json.loads(path.read_text())
    assert set(data) == {"protocol", "alpha", "levels_or_ops", "coefficients", "train_rmse"}
    back, protocol, ids = read_fit_json(path)
    assert protocol == "cpdr-zne" and ids == [1.0, 1.2]
    assert back.coefficients.tobytes() == fit.coefficients.tobytes()
    assert back.alpha == fit.alpha
