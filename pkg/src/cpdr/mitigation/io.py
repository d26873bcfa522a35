"""CSV feature tables and JSON fit files.

Feature tables are long-format: one row per (angle point, noise level or
insertion id) with columns ``theta_*``, ``level_or_op_id``, ``noisy_value``,
``shots``, ``seed`` and ``train``.  Training rows also carry ``reference``;
an optional ``exact_value`` column enables error reporting.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .regression import RidgeFit
from .training import TrainingSample

REQUIRED_COLUMNS = ("level_or_op_id", "noisy_value", "shots", "seed", "train")


class SchemaError(ValueError):
    pass


@dataclass
class FeaturePoint:
    angles: dict[str, float]
    features: np.ndarray
    train: bool
    reference: float | None = None
    exact: float | None = None


@dataclass
class FeatureTable:
    ids: tuple[float, ...]
    points: list[FeaturePoint]

    @property
    def training(self) -> list[FeaturePoint]:
        return [p for p in self.points if p.train]

    @property
    def targets(self) -> list[FeaturePoint]:
        return [p for p in self.points if not p.train]


def _angle_columns(angles) -> dict[str, float]:
    if isinstance(angles, dict):
        return {f"theta_{k}": float(v) for k, v in angles.items()}
    return {f"theta_{i + 1}": float(v) for i, v in enumerate(angles)}


def sample_rows(
    samples: Sequence[TrainingSample],
    ids: Sequence[float],
    shots: int | None,
    seed: int,
    train: bool = True,
    exact_values: Sequence[float] | None = None,
) -> list[dict]:
    """Flatten samples to long-format rows."""
    rows = []
    for k, s in enumerate(samples):
        if len(s.features) != len(ids):
            raise SchemaError("feature length does not match the id list")
        for ident, value in zip(ids, s.features):
            row = _angle_columns(s.angles)
            row.update(
                level_or_op_id=ident,
                noisy_value=float(value),
                shots=shots if shots is not None else 0,
                seed=seed,
                train=int(train),
                reference=s.reference if train else "",
            )
            if exact_values is not None:
                row["exact_value"] = float(exact_values[k])
            rows.append(row)
    return rows


def write_rows(path: str | Path, rows: Iterable[dict]) -> None:
    rows = list(rows)
    if not rows:
        raise SchemaError("nothing to write")
    header: list[str] = []
    for r in rows:
        for key in r:
            if key not in header:
                header.append(key)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in header})


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _optional_float(text: str | None) -> float | None:
    if text is None or text.strip() == "":
        return None
    return float(text)


def read_feature_table(path: str | Path, min_ids: int = 1) -> FeatureTable:
    """Parse and validate a long-format feature table.

    Every angle point must list every id; missing entries are rejected.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        cols = list(reader.fieldnames)
        missing = [c for c in REQUIRED_COLUMNS if c not in cols]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        theta_cols = [c for c in cols if c.startswith("theta_")]
        if not theta_cols:
            raise SchemaError(f"{path}: no theta_* angle columns")
        grouped: dict[tuple, dict] = {}
        order: list[tuple] = []
        for lineno, row in enumerate(reader, start=2):
            try:
                key = tuple(float(row[c]) for c in theta_cols)
                ident = float(row["level_or_op_id"])
                value = float(row["noisy_value"])
                train = int(row["train"])
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            if train not in (0, 1):
                raise SchemaError(f"{path}:{lineno}: train must be 0 or 1")
            if key not in grouped:
                grouped[key] = {"values": {}, "train": train, "reference": None, "exact": None}
                order.append(key)
            g = grouped[key]
            if ident in g["values"]:
                raise SchemaError(f"{path}:{lineno}: duplicate id {ident} for one angle point")
            if g["train"] != train:
                raise SchemaError(f"{path}:{lineno}: inconsistent train flag within an angle point")
            g["values"][ident] = value
            ref = _optional_float(row.get("reference"))
            if ref is not None:
                g["reference"] = ref
            ex = _optional_float(row.get("exact_value"))
            if ex is not None:
                g["exact"] = ex
    if not order:
        raise SchemaError(f"{path}: no data rows")
    ids = tuple(sorted({i for g in grouped.values() for i in g["values"]}))
    if len(ids) < min_ids:
        raise SchemaError(f"{path}: need at least {min_ids} noise levels or ops, found {len(ids)}")
    points = []
    for key in order:
        g = grouped[key]
        if set(g["values"]) != set(ids):
            lacking = sorted(set(ids) - set(g["values"]))
            raise SchemaError(f"{path}: angle point {key} is missing ids {lacking}")
        if g["train"] and g["reference"] is None:
            raise SchemaError(f"{path}: training point {key} has no reference value")
        feats = np.array([g["values"][i] for i in ids])
        angles = {c[len("theta_") :]: v for c, v in zip(theta_cols, key)}
        points.append(FeaturePoint(angles, feats, bool(g["train"]), g["reference"], g["exact"]))
    return FeatureTable(ids, points)


def fit_to_json(fit: RidgeFit, protocol: str, levels_or_ops: Sequence) -> dict:
    return {
        "protocol": protocol,
        "alpha": fit.alpha,
        "levels_or_ops": list(levels_or_ops),
        "coefficients": [float(v) for v in fit.coefficients],
        "train_rmse": fit.train_rmse if math.isfinite(fit.train_rmse) else None,
    }


def write_fit_json(path: str | Path, fit: RidgeFit, protocol: str, levels_or_ops: Sequence) -> None:
    Path(path).write_text(json.dumps(fit_to_json(fit, protocol, levels_or_ops), indent=2) + "\n")


def read_fit_json(path: str | Path) -> tuple[RidgeFit, str, list]:
    data = json.loads(Path(path).read_text())
    for key in ("protocol", "alpha", "levels_or_ops", "coefficients"):
        if key not in data:
            raise SchemaError(f"{path}: missing key {key!r}")
    rmse = data.get("train_rmse")
    fit = RidgeFit(np.array(data["coefficients"], float), float(data["alpha"]), float("nan") if rmse is None else rmse)
    return fit, data["protocol"], list(data["levels_or_ops"])
