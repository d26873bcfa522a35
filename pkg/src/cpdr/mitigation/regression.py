"""Ridge regression for learned mitigation coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CPDR_ALPHA = 2e-5
# condition number above which an unregularized system is treated as singular
SINGULAR_COND = 1e12


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class RidgeFit:
    coefficients: np.ndarray
    alpha: float = CPDR_ALPHA
    train_rmse: float = float("nan")
    n_samples: int = 0
    labels: tuple = field(default=())

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not np.all(np.isfinite(c)):
            raise ValueError("fit produced non-finite coefficients")

    def __len__(self) -> int:
        return self.coefficients.size

    def predict(self, features) -> float | np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.shape[-1] != self.coefficients.size:
            raise ValueError(f"expected {self.coefficients.size} features, got {x.shape[-1]}")
        out = x @ self.coefficients
        return float(out) if np.ndim(out) == 0 else out


def ridge_fit(features, references, alpha: float = CPDR_ALPHA, labels: tuple = ()) -> RidgeFit:
    """Minimize ``||X c - y||^2 + alpha ||c||^2`` via the normal equations."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(references, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("features must be a non-empty K x l matrix")
    if y.shape != (x.shape[0],):
        raise ValueError(f"need {x.shape[0]} references, got shape {y.shape}")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("features and references must be finite")
    gram = x.T @ x + alpha * np.eye(x.shape[1])
    if alpha == 0 and (x.shape[0] < x.shape[1] or np.linalg.cond(gram) > SINGULAR_COND):
        raise SingularSystemError(
            "unregularized normal equations are singular (degenerate features); use alpha > 0"
        )
    coef = np.linalg.solve(gram, x.T @ y)
    rmse = math.sqrt(float(np.mean((x @ coef - y) ** 2)))
    return RidgeFit(coef, float(alpha), rmse, x.shape[0], tuple(labels))
