"""Batch experiments behind the command-line driver.

Every runner takes an :class:`ExperimentConfig` and returns rows (lists of
dicts) that the CLI writes as CSV.  Randomness is drawn from per-job streams
seeded by ``(master_seed, stream, job_index)`` so results do not depend on the
worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .circuit import IsingSpec, Layer, ParamCircuit, build_hardware_efficient, build_ising_trotter, normalize_angles
from .densesim import MAX_DENSITY_QUBITS, InsertionOp, NoiseModel, exact_expectation
from .mitigation.io import SchemaError, fit_to_json, read_feature_table
from .mitigation.regression import CPDR_ALPHA, RidgeFit, ridge_fit
from .mitigation.training import (
    CLIFFORD_ANGLES,
    DEFAULT_REFERENCE_M,
    SimulatorBackend,
    bind,
    build_insertion_set,
    features_from_terms,
    ising_training_grid,
    reference_value,
)
from .mitigation.zne import DEFAULT_LEVELS, NoiseLevelSet, zne_extrapolate
from .pauli import Gate, Observable, PauliWord
from .spd import mse_bound, spd_expectation, worst_case_bound

# environment variable that switches ising-mse to the full-size profile
FULL_PROFILE_ENV = "CPDR_FULL"

PROTOCOLS = (
    "noise",
    "zne-linear",
    "zne-quad",
    "zne-exp",
    "zne-auto",
    "cpdr-zne",
    "cpdr-zne-exact",
    "learned-pec",
    "cpdr-pec",
)
DEFAULT_PROTOCOLS = ("noise", "zne-linear", "zne-quad", "zne-exp", "cpdr-zne", "learned-pec", "cpdr-pec")

# seed streams, so training and evaluation never share a generator
_TRAIN_ZNE, _TRAIN_ZNE_EXACT, _TRAIN_PEC, _TRAIN_CLIFFORD, _EVAL, _INSERTIONS, _BOUNDS = range(7)


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class BoundViolation(AssertionError):
    """A checked bound or tolerance failed (CLI exit code 3)."""


def job_seed(master_seed: int, index: int, stream: int = 0) -> int:
    """Deterministic 64-bit seed for one job."""
    ss = np.random.SeedSequence([master_seed, stream, index])
    return int(ss.generate_state(1, np.uint64)[0])


def job_rng(master_seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(job_seed(master_seed, index, stream))


_ANGLE_RE = re.compile(r"^\s*([-+]?)\s*(\d+(?:\.\d*)?)?\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_angle(value: Any) -> float:
    """A float, or a string like ``"pi/20"``, ``"-3pi/8"`` or ``"0.5*pi"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        m = _ANGLE_RE.match(value)
        if m:
            sign = -1.0 if m.group(1) == "-" else 1.0
            num = float(m.group(2)) if m.group(2) else 1.0
            den = float(m.group(3)) if m.group(3) else 1.0
            return sign * num * math.pi / den
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"cannot read {value!r} as an angle")


def _angle_list(value: Any, name: str) -> list[float]:
    if isinstance(value, dict):
        # {"start": a, "stop": b, "num": k} -> inclusive linspace
        try:
            return np.linspace(parse_angle(value["start"]), parse_angle(value["stop"]), int(value["num"])).tolist()
        except KeyError as exc:
            raise ConfigError(f"{name}: range needs start, stop and num ({exc})") from None
    values = value if isinstance(value, list) else [value]
    out = [parse_angle(v) for v in values]
    if not out:
        raise ConfigError(f"{name} must not be empty")
    return out


def _int_list(value: Any, name: str) -> list[int]:
    values = value if isinstance(value, list) else [value]
    try:
        out = [int(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be integers, got {value!r}") from None
    if not out:
        raise ConfigError(f"{name} must not be empty")
    return out


@dataclass
class ExperimentConfig:
    kind: str
    params: dict
    seed: int
    jobs: int = 1
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(
        cls,
        kind: str,
        path: str | Path | None,
        seed: int | None = None,
        jobs: int | None = None,
    ) -> ExperimentConfig:
        params: dict = {}
        base = Path.cwd()
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file {p} does not exist")
            try:
                params = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{p}: invalid JSON ({exc})") from None
            if not isinstance(params, dict):
                raise ConfigError(f"{p}: top level must be an object")
            base = p.resolve().parent
        declared = params.pop("experiment", kind)
        if declared != kind:
            raise ConfigError(f"config is for {declared!r}, not {kind!r}")
        cfg_seed = params.pop("seed", None)
        cfg_jobs = params.pop("jobs", 1)
        seed = cfg_seed if seed is None else seed
        if seed is None:
            raise ConfigError("a master seed is required (--seed or \"seed\" in the config)")
        if not 0 <= int(seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        jobs = cfg_jobs if jobs is None else jobs
        if int(jobs) < 1:
            raise ConfigError("jobs must be >= 1")
        return cls(kind, params, int(seed), int(jobs), base)

    def take(self, defaults: dict) -> dict:
        """Merge with ``defaults``; unknown keys are an error."""
        unknown = sorted(set(self.params) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown {self.kind} config keys: {unknown}")
        return {**defaults, **self.params}


def run_jobs(fn: Callable, args: Sequence, jobs: int) -> list:
    """Ordered map over ``args``; a process pool when ``jobs > 1``."""
    if jobs <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
        return list(pool.map(fn, args, chunksize=max(1, len(args) // (4 * jobs))))


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n", extrasaction="raise")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


# ---------------------------------------------------------------------------
# spd-bench
# ---------------------------------------------------------------------------

SPD_BENCH_COLUMNS = (
    "n",
    "blocks",
    "theta_star",
    "M",
    "spd_value",
    "exact_value",
    "abs_error",
    "terms",
    "peak_terms",
    "wall_ms",
    "master_seed",
    "job_seed",
)
SPD_BENCH_DEFAULTS = {
    "n": list(range(2, 11)),
    "blocks": 5,
    "theta_star": ["pi/20"],
    "M": [5, 6, 7, 8],
    "template": "ry_rz_cx",
    "tolerance": None,
}
MAX_BENCH_QUBITS = 15


def _spd_bench_job(args) -> list[dict]:
    n, blocks, theta, Ms, template, master, seed = args
    c = build_hardware_efficient(n, blocks, theta, template)
    o = Observable.magnetization(n)
    exact = exact_expectation(c, o)
    nc = normalize_angles(c)
    rows = []
    for M in Ms:
        t0 = time.perf_counter()
        res = spd_expectation(nc, o, M=M)
        wall = (time.perf_counter() - t0) * 1e3
        rows.append(
            dict(
                n=n,
                blocks=blocks,
                theta_star=theta,
                M=M,
                spd_value=res.value,
                exact_value=exact,
                abs_error=abs(res.value - exact),
                terms=res.diagnostics.terms_alive,
                peak_terms=res.diagnostics.peak_terms,
                wall_ms=round(wall, 3),
                master_seed=master,
                job_seed=seed,
            )
        )
    return rows


def run_spd_bench(cfg: ExperimentConfig) -> list[dict]:
    """SPD against the statevector oracle on the hardware-efficient family.

    Observable is the mean Z magnetization; raises :class:`BoundViolation`
    when ``tolerance`` is set and some ``abs_error`` exceeds it.
    """
    p = cfg.take(SPD_BENCH_DEFAULTS)
    ns = _int_list(p["n"], "n")
    Ms = _int_list(p["M"], "M")
    thetas = _angle_list(p["theta_star"], "theta_star")
    blocks = int(p["blocks"])
    if any(not 1 <= n <= MAX_BENCH_QUBITS for n in ns):
        raise ConfigError(f"spd-bench supports 1 <= n <= {MAX_BENCH_QUBITS}")
    if any(M < 0 for M in Ms) or blocks < 1:
        raise ConfigError("need M >= 0 and blocks >= 1")
    try:
        build_hardware_efficient(2, 1, 0.0, p["template"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    jobs = [
        (n, blocks, th, Ms, p["template"], cfg.seed, job_seed(cfg.seed, k))
        for k, (n, th) in enumerate((n, th) for n in ns for th in thetas)
    ]
    rows = [r for chunk in run_jobs(_spd_bench_job, jobs, cfg.jobs) for r in chunk]
    rows.sort(key=lambda r: (r["n"], r["theta_star"], r["M"]))
    tol = p["tolerance"]
    if tol is not None:
        bad = [r for r in rows if r["abs_error"] > float(tol)]
        if bad:
            worst = max(bad, key=lambda r: r["abs_error"])
            raise BoundViolation(
                f"{len(bad)} rows exceed tolerance {tol}; worst n={worst['n']} M={worst['M']} "
                f"theta*={worst['theta_star']:.4g} error={worst['abs_error']:.3g}",
                rows,
            )
    return rows


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

BOUNDS_COLUMNS = (
    "config",
    "L",
    "M",
    "theta_star",
    "worst_bound",
    "mse_bound",
    "empirical_max_err",
    "empirical_mse",
    "mse_stderr",
    "samples",
    "master_seed",
    "job_seed",
)
BOUNDS_DEFAULTS = {
    "configs": 50,
    "n_qubits": 2,
    "L_max": 12,
    "M_max": 6,
    "theta_max": "pi/10",
    "max_draws": 100,
    "mse_draws": 1000,
}


def random_local_circuit(rng: np.random.Generator, n: int, depth: int) -> ParamCircuit:
    """Random Clifford interleavings with rotation axes of weight <= 2."""
    layers = []
    for _ in range(depth):
        gates = []
        for _ in range(int(rng.integers(0, 3))):
            if n > 1 and rng.random() < 0.5:
                a, b = rng.choice(n, 2, replace=False)
                gates.append(Gate(("CX", "CZ", "SWAP")[int(rng.integers(3))], (int(a), int(b))))
            else:
                gates.append(Gate(("H", "S", "SDG", "X")[int(rng.integers(4))], (int(rng.integers(n)),)))
        k = int(rng.integers(1, min(n, 2) + 1))
        qubits = rng.choice(n, k, replace=False)
        axis = PauliWord.from_sparse(n, {int(q): "XYZ"[int(rng.integers(3))] for q in qubits})
        layers.append(Layer(tuple(gates), axis, 0.0))
    return ParamCircuit(n, tuple(layers))


def _bounds_job(args) -> dict:
    index, n, L_max, M_max, theta_max, max_draws, mse_draws, master, seed = args
    rng = np.random.default_rng(seed)
    L = int(rng.integers(1, L_max + 1))
    M = int(rng.integers(0, min(M_max, L) + 1))
    theta = float(rng.uniform(0, theta_max))
    c = random_local_circuit(rng, n, L)
    letters = "".join("IXYZ"[int(v)] for v in rng.integers(0, 4, n))
    if set(letters) == {"I"}:
        letters = "Z" + letters[1:]
    o = Observable.pauli(letters)
    draws = max(max_draws, mse_draws)
    errs = np.empty(draws)
    for d in range(draws):
        bound = c.with_angles(rng.uniform(-theta, theta, L))
        errs[d] = spd_expectation(bound, o, M=M).value - exact_expectation(bound, o)
    sq = errs[:mse_draws] ** 2
    return dict(
        config=index,
        L=L,
        M=M,
        theta_star=theta,
        worst_bound=worst_case_bound(L, M, theta),
        mse_bound=mse_bound(L, M, theta),
        empirical_max_err=float(np.abs(errs[:max_draws]).max()),
        empirical_mse=float(sq.mean()),
        mse_stderr=float(sq.std(ddof=1) / math.sqrt(mse_draws)) if mse_draws > 1 else 0.0,
        samples=draws,
        master_seed=master,
        job_seed=seed,
    )


def run_bounds(cfg: ExperimentConfig) -> list[dict]:
    """Empirical truncation errors on random circuits versus both bounds.

    Raises :class:`BoundViolation` if the max error exceeds the worst-case
    bound or the MSE exceeds the MSE bound by more than three standard errors.
    """
    p = cfg.take(BOUNDS_DEFAULTS)
    count, n = int(p["configs"]), int(p["n_qubits"])
    L_max, M_max = int(p["L_max"]), int(p["M_max"])
    theta_max = parse_angle(p["theta_max"])
    max_draws, mse_draws = int(p["max_draws"]), int(p["mse_draws"])
    if count < 1 or n < 1 or L_max < 1 or M_max < 0 or max_draws < 1 or mse_draws < 2:
        raise ConfigError("bounds needs configs, n_qubits, L_max >= 1, M_max >= 0, max_draws >= 1, mse_draws >= 2")
    if not 0 < theta_max <= math.pi / 4:
        raise ConfigError("theta_max must lie in (0, pi/4]")
    if n > 12:
        raise ConfigError("bounds sweeps use the dense oracle; keep n_qubits <= 12")
    jobs = [
        (k, n, L_max, M_max, theta_max, max_draws, mse_draws, cfg.seed, job_seed(cfg.seed, k, _BOUNDS))
        for k in range(count)
    ]
    rows = run_jobs(_bounds_job, jobs, cfg.jobs)
    bad = [
        r
        for r in rows
        if r["empirical_max_err"] > r["worst_bound"] + 1e-12
        or r["empirical_mse"] > r["mse_bound"] + 3 * r["mse_stderr"] + 1e-15
    ]
    if bad:
        raise BoundViolation(f"{len(bad)} configurations violate a bound: {[r['config'] for r in bad]}", rows)
    return rows


# ---------------------------------------------------------------------------
# ising-mse
# ---------------------------------------------------------------------------

ISING_COLUMNS = ("protocol", "theta_h", "mse", "n_theta_J", "repeats", "shots", "master_seed", "job_seed")
ISING_SUMMARY_COLUMNS = ("protocol", "median_mse", "mean_mse", "n_theta_h", "repeats", "shots", "master_seed")

# evaluation angles: the Clifford-adjacent windows theta in [0, pi/20] and
# [9pi/20, pi/2] on which CPDR training is centred, offset from training points
_WINDOW = [0.013, 0.053, 0.093, 0.133, 1.426, 1.466, 1.506, 1.546]

ISING_PROFILES = {
    "smoke": {"repeats": 10, "clifford_count": 256, "eval_h": _WINDOW, "eval_J": [-a for a in _WINDOW]},
    "full": {"repeats": 100, "clifford_count": 2048, "eval_h": _WINDOW, "eval_J": [-a for a in _WINDOW]},
}
ISING_DEFAULTS = {
    "profile": None,
    "n": 8,
    "steps": 4,
    "noise": {},
    "levels": list(DEFAULT_LEVELS),
    "shots": 10_000,
    "train_shots": 10_000,
    "repeats": None,
    "clifford_count": None,
    "eval_h": None,
    "eval_J": None,
    "train_indices": [0, 1, 2, 3, 4, 5, 54, 55, 56, 57, 58, 59],
    "train_denominator": 120,
    "insertions": 20,
    "reference_M": DEFAULT_REFERENCE_M,
    "alpha": CPDR_ALPHA,
    "pec_alpha": 0.0,
    "protocols": list(DEFAULT_PROTOCOLS),
    "check_ordering": False,
    "ordering_factor": 1.5,
}


@dataclass
class IsingSetup:
    template: ParamCircuit
    observable: Observable
    backend: SimulatorBackend
    insertions: list[InsertionOp]
    protocols: tuple[str, ...]
    shots: int
    train_shots: int
    repeats: int
    clifford_count: int
    eval_h: list[float]
    eval_J: list[float]
    train_grid: list[dict]
    reference_M: int
    alpha: float
    pec_alpha: float
    check_ordering: bool
    ordering_factor: float
    profile: str


def resolve_ising(cfg: ExperimentConfig) -> IsingSetup:
    p = cfg.take(ISING_DEFAULTS)
    profile = p["profile"] or ("full" if os.environ.get(FULL_PROFILE_ENV) == "1" else "smoke")
    if profile not in ISING_PROFILES:
        raise ConfigError(f"profile must be one of {sorted(ISING_PROFILES)}")
    for key, value in ISING_PROFILES[profile].items():
        if p[key] is None:
            p[key] = value
    n, steps = int(p["n"]), int(p["steps"])
    if not 1 <= n <= MAX_DENSITY_QUBITS:
        raise ConfigError(f"ising-mse needs 1 <= n <= {MAX_DENSITY_QUBITS} (noisy oracle limit)")
    protocols = tuple(p["protocols"])
    unknown = [x for x in protocols if x not in PROTOCOLS]
    if unknown or not protocols:
        raise ConfigError(f"unknown protocols {unknown}; choose from {PROTOCOLS}")
    try:
        noise = NoiseModel.from_json(dict(p["noise"]))
        levels = NoiseLevelSet(tuple(float(v) for v in p["levels"]))
        noise.scaled(levels.levels[-1])
        template = build_ising_trotter(IsingSpec.chain(n, steps, 0.0, 0.0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    zne_like = {"zne-linear", "zne-quad", "zne-exp", "zne-auto", "cpdr-zne", "cpdr-zne-exact"}
    if zne_like & set(protocols) and len(levels) < 2:
        raise ConfigError("ZNE-style protocols need at least two noise levels")
    shots, repeats = int(p["shots"]), int(p["repeats"])
    if shots < 1 or repeats < 1 or int(p["train_shots"]) < 1:
        raise ConfigError("shots, train_shots and repeats must be >= 1")
    indices = _int_list(p["train_indices"], "train_indices")
    train_grid = ising_training_grid(indices, int(p["train_denominator"]))
    ins = build_insertion_set(template, int(p["insertions"]), job_seed(cfg.seed, 0, _INSERTIONS))
    return IsingSetup(
        template=template,
        observable=Observable.magnetization(n),
        backend=SimulatorBackend(noise, levels),
        insertions=ins,
        protocols=protocols,
        shots=shots,
        train_shots=int(p["train_shots"]),
        repeats=repeats,
        clifford_count=int(p["clifford_count"]),
        eval_h=_angle_list(p["eval_h"], "eval_h"),
        eval_J=_angle_list(p["eval_J"], "eval_J"),
        train_grid=train_grid,
        reference_M=int(p["reference_M"]),
        alpha=float(p["alpha"]),
        pec_alpha=float(p["pec_alpha"]),
        check_ordering=bool(p["check_ordering"]),
        ordering_factor=float(p["ordering_factor"]),
        profile=profile,
    )


def _train_point(args) -> tuple[np.ndarray, float, tuple]:
    """Sampled features and reference for one training circuit."""
    c, o, backend, mode, insertions, shots, reference, M, seed = args
    rng = np.random.default_rng(seed)
    terms = backend.term_values(c, o, mode, insertions)
    feats = features_from_terms(terms, o, shots, rng, backend.noise.readout_flip)
    if reference == "clifford":
        # every angle is a multiple of pi/2, so normalization leaves no sine branch
        ref = spd_expectation(normalize_angles(c), o, M=0).value
    else:
        ref = reference_value(c, o, reference, M)
    return feats, ref, c.angles


def train_fits(setup: IsingSetup, master_seed: int, jobs: int = 1) -> dict[str, RidgeFit]:
    """Fit every learned protocol the setup asks for, once."""
    want = set(setup.protocols)
    t, o, be = setup.template, setup.observable, setup.backend
    work: list[tuple[str, list]] = []
    if "cpdr-zne" in want or "cpdr-zne-exact" in want:
        circuits = [bind(t, pt) for pt in setup.train_grid]
        if "cpdr-zne" in want:
            work.append(("cpdr-zne", [
                (c, o, be, "zne", None, setup.train_shots, "spd", setup.reference_M, job_seed(master_seed, k, _TRAIN_ZNE))
                for k, c in enumerate(circuits)
            ]))
        if "cpdr-zne-exact" in want:
            # same sampled features as cpdr-zne, only the references differ
            work.append(("cpdr-zne-exact", [
                (c, o, be, "zne", None, setup.train_shots, "exact", 0, job_seed(master_seed, k, _TRAIN_ZNE))
                for k, c in enumerate(circuits)
            ]))
    if "cpdr-pec" in want:
        work.append(("cpdr-pec", [
            (bind(t, pt), o, be, "pec", setup.insertions, setup.train_shots, "spd", setup.reference_M,
             job_seed(master_seed, k, _TRAIN_PEC))
            for k, pt in enumerate(setup.train_grid)
        ]))
    if "learned-pec" in want:
        rng = job_rng(master_seed, 0, _TRAIN_CLIFFORD)
        snaps = rng.integers(len(CLIFFORD_ANGLES), size=(setup.clifford_count, t.depth))
        work.append(("learned-pec", [
            (t.with_angles([CLIFFORD_ANGLES[i] for i in row]), o, be, "pec", setup.insertions, setup.train_shots,
             "clifford", 0, job_seed(master_seed, k + 1, _TRAIN_CLIFFORD))
            for k, row in enumerate(snaps)
        ]))
    fits = {}
    for name, args in work:
        results = run_jobs(_train_point, args, jobs)
        x = np.stack([r[0] for r in results])
        y = np.array([r[1] for r in results])
        alpha = setup.pec_alpha if name == "learned-pec" else setup.alpha
        labels = tuple(be.levels.levels) if "zne" in name else tuple(op.id for op in setup.insertions)
        fits[name] = ridge_fit(x, y, alpha, labels)
    return fits


def _estimates(protocols, levels, zf: np.ndarray | None, pf: np.ndarray | None, fits) -> dict[str, np.ndarray]:
    """Per-protocol estimates for a batch of repeats (rows of ``zf``/``pf``)."""
    out = {}
    for name in protocols:
        if name == "noise":
            out[name] = zf[:, 0] if zf is not None else pf[:, 0]
        elif name == "zne-linear":
            out[name] = zne_extrapolate(levels, zf, "linear")
        elif name == "zne-quad":
            out[name] = zne_extrapolate(levels, zf, "quadratic")
        elif name == "zne-exp":
            ok = np.all(np.sign(zf) == np.sign(zf[:, :1]), axis=1) & np.all(zf != 0, axis=1)
            est = zf[:, 0].copy()
            if ok.any():
                est[ok] = zne_extrapolate(levels, zf[ok], "exponential")
            out[name] = est
        elif name == "zne-auto":
            out[name] = zne_extrapolate(levels, zf, "auto")
        elif name in ("cpdr-zne", "cpdr-zne-exact"):
            out[name] = zf @ fits[name].coefficients
        else:
            out[name] = pf @ fits[name].coefficients
    return out


def _ising_eval_job(args) -> list[dict]:
    h, Js, setup, fits, master, seed = args
    rng = np.random.default_rng(seed)
    o, be = setup.observable, setup.backend
    need_z = any(p not in ("learned-pec", "cpdr-pec") for p in setup.protocols)
    need_p = any(p in ("learned-pec", "cpdr-pec") for p in setup.protocols)
    sq = {name: [] for name in setup.protocols}
    for J in Js:
        c = setup.template.with_role_angles({"h": h, "J": J})
        exact = exact_expectation(c, o)
        reps = setup.repeats
        zf = pf = None
        if need_z:
            tz = np.broadcast_to(be.level_term_values(c, o), (reps, len(be.levels), len(o.terms)))
            zf = features_from_terms(tz, o, setup.shots, rng, be.noise.readout_flip)
        if need_p:
            tp = be.insertion_term_values(c, o, setup.insertions)
            tp = np.broadcast_to(tp, (reps,) + tp.shape)
            pf = features_from_terms(tp, o, setup.shots, rng, be.noise.readout_flip)
        for name, est in _estimates(setup.protocols, be.levels.levels, zf, pf, fits).items():
            sq[name].append((np.asarray(est) - exact) ** 2)
    return [
        dict(
            protocol=name,
            theta_h=h,
            mse=float(np.mean(sq[name])),
            n_theta_J=len(Js),
            repeats=setup.repeats,
            shots=setup.shots,
            master_seed=master,
            job_seed=seed,
        )
        for name in setup.protocols
    ]


@dataclass
class IsingResult:
    rows: list[dict]
    summary: list[dict]
    fits: dict[str, RidgeFit]
    setup: IsingSetup

    def median(self, protocol: str) -> float:
        return next(r["median_mse"] for r in self.summary if r["protocol"] == protocol)


def ordering_failures(result: IsingResult, factor: float) -> list[str]:
    """Protocol-ordering checks that fail, as readable strings."""
    med = {r["protocol"]: r["median_mse"] for r in result.summary}
    out = []
    zne = [p for p in ("zne-linear", "zne-quad", "zne-exp") if p in med]
    if "cpdr-zne" in med and zne:
        best = min(med[p] for p in zne)
        if not med["cpdr-zne"] * factor <= best:
            out.append(f"cpdr-zne {med['cpdr-zne']:.3g} not {factor}x below best ZNE {best:.3g}")
    if "cpdr-pec" in med and "learned-pec" in med:
        if not med["cpdr-pec"] * factor <= med["learned-pec"]:
            out.append(f"cpdr-pec {med['cpdr-pec']:.3g} not {factor}x below learned-pec {med['learned-pec']:.3g}")
    if "noise" in med:
        for p, v in med.items():
            if p != "noise" and not v < med["noise"]:
                out.append(f"{p} {v:.3g} does not beat the unmitigated {med['noise']:.3g}")
    return out


def run_ising_mse(cfg: ExperimentConfig, setup: IsingSetup | None = None) -> IsingResult:
    """Protocol comparison on the Trotterized transverse-field Ising benchmark.

    Learned fits are trained once; each repeat resamples only the target
    circuit's shot noise.  Rows give the MSE over ``theta_J`` (and repeats) per
    ``(protocol, theta_h)``; the summary gives the median over ``theta_h``.
    """
    setup = setup or resolve_ising(cfg)
    fits = train_fits(setup, cfg.seed, cfg.jobs)
    args = [(h, setup.eval_J, setup, fits, cfg.seed, job_seed(cfg.seed, k, _EVAL)) for k, h in enumerate(setup.eval_h)]
    rows = [r for chunk in run_jobs(_ising_eval_job, args, cfg.jobs) for r in chunk]
    order = {p: i for i, p in enumerate(setup.protocols)}
    rows.sort(key=lambda r: (order[r["protocol"]], r["theta_h"]))
    summary = []
    for name in setup.protocols:
        mses = [r["mse"] for r in rows if r["protocol"] == name]
        summary.append(
            dict(
                protocol=name,
                median_mse=float(np.median(mses)),
                mean_mse=float(np.mean(mses)),
                n_theta_h=len(mses),
                repeats=setup.repeats,
                shots=setup.shots,
                master_seed=cfg.seed,
            )
        )
    result = IsingResult(rows, summary, fits, setup)
    if setup.check_ordering:
        failures = ordering_failures(result, setup.ordering_factor)
        if failures:
            raise BoundViolation("; ".join(failures), result)
    return result


# ---------------------------------------------------------------------------
# mitigate-csv
# ---------------------------------------------------------------------------

MITIGATE_DEFAULTS = {"table": None, "protocol": "cpdr-zne", "alpha": None}
MITIGATE_PROTOCOLS = ("cpdr-zne", "cpdr-pec", "learned-pec")


def run_mitigate_csv(cfg: ExperimentConfig) -> dict:
    """Fit on the table's ``train=1`` rows and mitigate the rest."""
    p = cfg.take(MITIGATE_DEFAULTS)
    if p["table"] is None:
        raise ConfigError("mitigate-csv needs a \"table\" path")
    path = Path(p["table"])
    if not path.is_absolute():
        path = cfg.base_dir / path
    if not path.is_file():
        raise ConfigError(f"table {path} does not exist")
    protocol = p["protocol"]
    if protocol not in MITIGATE_PROTOCOLS:
        raise ConfigError(f"protocol must be one of {MITIGATE_PROTOCOLS}")
    alpha = float(p["alpha"]) if p["alpha"] is not None else (0.0 if protocol == "learned-pec" else CPDR_ALPHA)
    # ZNE-style regression over a single noise level is plain rescaling
    table = read_feature_table(path, min_ids=2 if protocol == "cpdr-zne" else 1)
    train = table.training
    if not train:
        raise SchemaError(f"{path}: no training rows (train=1)")
    fit = ridge_fit(np.stack([t.features for t in train]), [t.reference for t in train], alpha, table.ids)
    points = []
    for pt in table.targets:
        entry = {"angles": pt.angles, "raw": float(pt.features[0]), "mitigated": fit.predict(pt.features)}
        if pt.exact is not None:
            entry["exact"] = pt.exact
            entry["abs_error"] = abs(entry["mitigated"] - pt.exact)
            entry["raw_abs_error"] = abs(entry["raw"] - pt.exact)
        points.append(entry)
    report = fit_to_json(fit, protocol, table.ids)
    report.update(table=str(path), n_train=len(train), points=points, master_seed=cfg.seed)
    return report


# ---------------------------------------------------------------------------
# synthetic tables
# ---------------------------------------------------------------------------


def synthetic_feature_rows(
    setup: IsingSetup, train_points: Iterable[dict], target_points: Iterable[dict], master_seed: int
) -> list[dict]:
    """Long-format rows in the ``mitigate-csv`` schema from the noisy simulator.

    Training rows carry SPD references, target rows carry the exact value.
    """
    o, be = setup.observable, setup.backend
    rows = []
    for train, points in ((True, list(train_points)), (False, list(target_points))):
        for k, pt in enumerate(points):
            seed = job_seed(master_seed, k, _TRAIN_ZNE if train else _EVAL)
            feats, ref, _ = _train_point(
                (bind(setup.template, pt), o, be, "zne", None, setup.shots, "spd", setup.reference_M, seed)
            )
            exact = exact_expectation(bind(setup.template, pt), o)
            for level, value in zip(be.levels.levels, feats):
                rows.append(
                    {
                        **{f"theta_{key}": float(v) for key, v in pt.items()},
                        "level_or_op_id": level,
                        "noisy_value": float(value),
                        "shots": setup.shots,
                        "seed": seed,
                        "train": int(train),
                        "reference": ref if train else "",
                        "exact_value": exact,
                    }
                )
    return rows
