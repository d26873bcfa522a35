"""Zero-noise extrapolation from expectations measured at amplified noise."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_LEVELS = (1.0, 1.2, 1.6)
ZNE_MODELS = ("richardson", "linear", "quadratic", "exponential", "auto")


@dataclass(frozen=True)
class NoiseLevelSet:
    """Noise scale factors ``G`` relative to the base noise; first level is 1."""

    levels: tuple[float, ...] = DEFAULT_LEVELS

    def __post_init__(self):
        lv = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "levels", lv)
        if not lv:
            raise ValueError("need at least one noise level")
        if abs(lv[0] - 1.0) > 1e-12:
            raise ValueError(f"first noise level must be 1 (base noise), got {lv[0]}")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError(f"noise levels must be strictly increasing: {lv}")

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)


def _as_levels(levels) -> np.ndarray:
    if isinstance(levels, NoiseLevelSet):
        levels = levels.levels
    return np.asarray(levels, dtype=float)


def richardson_weights(levels: NoiseLevelSet | Sequence[float]) -> np.ndarray:
    """Weights ``x_i = prod_{j != i} (-l_j) / (l_i - l_j)``.

    They satisfy ``sum x_i = 1`` and ``sum x_i l_i^k = 0`` for ``k = 1..len-1``,
    so ``sum x_i f(l_i)`` cancels every polynomial noise term up to that order.
    """
    lv = _as_levels(levels)
    if lv.size == 0:
        raise ValueError("need at least one noise level")
    if np.any(lv <= 0):
        raise ValueError("noise levels must be positive")
    if np.unique(lv).size != lv.size:
        raise ValueError(f"duplicate noise levels: {lv.tolist()}")
    out = np.ones(lv.size)
    for i in range(lv.size):
        for j in range(lv.size):
            if j != i:
                out[i] *= -lv[j] / (lv[i] - lv[j])
    return out


def _intercept_weights(lv: np.ndarray, degree: int) -> np.ndarray:
    """Row vector ``w`` such that ``w @ f`` is the least-squares polynomial at 0."""
    if lv.size < degree + 1:
        raise ValueError(f"a degree-{degree} fit needs at least {degree + 1} points, got {lv.size}")
    vander = np.vander(lv, degree + 1, increasing=True)
    return np.linalg.pinv(vander)[0]


def _exponential(lv: np.ndarray, f: np.ndarray) -> np.ndarray:
    sign = np.sign(f[..., 0])
    if np.any(np.sign(f) != sign[..., None]) or np.any(f == 0):
        raise ValueError("exponential extrapolation needs all values non-zero with the same sign")
    return sign * np.exp(np.log(np.abs(f)) @ _intercept_weights(lv, 1))


def _loo_errors(lv: np.ndarray, f: np.ndarray, model: str) -> np.ndarray:
    """Mean squared leave-one-out prediction error, per leading index."""
    err = np.zeros(f.shape[:-1])
    for i in range(lv.size):
        keep = np.arange(lv.size) != i
        lk, fk = lv[keep], f[..., keep]
        if model == "raw":
            pred = fk.mean(axis=-1)
        else:
            vander = np.vander(lk, 2, increasing=True)
            target = fk if model == "linear" else np.log(np.abs(fk))
            coef = target @ np.linalg.pinv(vander).T
            pred = coef[..., 0] + coef[..., 1] * lv[i]
            if model == "exponential":
                pred = np.sign(fk[..., 0]) * np.exp(pred)
        err += (pred - f[..., i]) ** 2
    return err / lv.size


def _auto(lv: np.ndarray, f: np.ndarray) -> np.ndarray:
    raw = f[..., 0]
    if lv.size < 3:
        return raw.copy()
    same_sign = np.all(np.sign(f) == np.sign(f[..., :1]), axis=-1) & np.all(f != 0, axis=-1)
    lin = f @ _intercept_weights(lv, 1)
    expo = np.where(same_sign, 0.0, np.nan)
    if same_sign.any():
        expo[same_sign] = _exponential(lv, f[same_sign])
    errs = np.stack(
        [
            np.where(same_sign, _loo_errors(lv, np.where(same_sign[..., None], f, 1.0), "exponential"), np.inf),
            _loo_errors(lv, f, "linear"),
            _loo_errors(lv, f, "raw"),
        ]
    )
    cands = np.stack([np.nan_to_num(expo), lin, raw])
    pick = np.argmin(errs, axis=0)
    est = np.take_along_axis(cands, pick[None], axis=0)[0]
    wild = np.abs(est) > 2 * np.abs(f).max(axis=-1)
    return np.where(wild, raw, est)


def zne_extrapolate(
    levels: NoiseLevelSet | Sequence[float],
    values: Sequence[float] | np.ndarray,
    model: str = "richardson",
) -> float | np.ndarray:
    """Estimate the zero-noise value from ``values[..., i] = f(levels[i])``.

    ``richardson`` interpolates exactly through every point; ``linear`` and
    ``quadratic`` are least-squares polynomials evaluated at 0;
    ``exponential`` fits ``b exp(a l)`` by a log-linear fit.  ``auto`` picks
    among exponential, linear and the raw base-noise value by leave-one-out
    error, and falls back to the raw value when the chosen estimate exceeds
    twice the largest measured magnitude.  Leading axes of ``values`` are
    treated as a batch.
    """
    lv = _as_levels(levels)
    f = np.asarray(values, dtype=float)
    if f.shape[-1] != lv.size:
        raise ValueError(f"got {f.shape[-1]} values for {lv.size} noise levels")
    if model == "richardson":
        est = f @ richardson_weights(lv)
    elif model == "linear":
        est = f @ _intercept_weights(lv, 1)
    elif model == "quadratic":
        est = f @ _intercept_weights(lv, 2)
    elif model == "exponential":
        if lv.size < 2:
            raise ValueError("exponential fit needs at least 2 points")
        est = _exponential(lv, f)
    elif model == "auto":
        est = _auto(lv, f)
    else:
        raise ValueError(f"unknown ZNE model {model!r}; choose from {ZNE_MODELS}")
    return float(est) if np.ndim(est) == 0 else est


def polynomial_intercept(levels: Sequence[float], values: Sequence[float], degree: int) -> float:
    """Reference path for tests: ``numpy.polyfit`` evaluated at 0."""
    coef = np.polyfit(np.asarray(levels, float), np.asarray(values, float), degree)
    return float(coef[-1])


def exponential_intercept(levels: Sequence[float], values: Sequence[float]) -> float:
    """Reference path for tests: ``polyfit`` on ``log|f|``."""
    v = np.asarray(values, float)
    coef = np.polyfit(np.asarray(levels, float), np.log(np.abs(v)), 1)
    return float(math.copysign(math.exp(coef[-1]), v[0]))
