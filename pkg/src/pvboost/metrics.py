"""Regression metrics: R-squared, RMSE, and capacity-normalized MAPE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedVarianceError


@dataclass(frozen=True)
class MetricReport:
    r_squared: float
    mape_pct: float
    rmse: float
    n: int

    def as_record(self) -> str:
        """Single-line machine-readable form."""
        return (
            f"r2={self.r_squared!r} mape_pct={self.mape_pct!r} "
            f"rmse={self.rmse!r} n={self.n}"
        )


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y, dtype=np.float64)
    b = np.asarray(yhat, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D sequences")
    return a, b


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    if a.size < 1:
        raise ValueError("need at least one pair")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def r_squared(y, yhat) -> float:
    """1 - SS_res/SS_tot; rejects zero-variance labels."""
    y, yhat = _pair(y, yhat)
    if y.size < 2:
        raise ValueError("need at least two pairs")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedVarianceError("labels have zero total variance")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot


def capacity_mape(y, yhat, cap: float) -> float:
    """RMSE normalized by inverter capacity, as a percentage.

    This is the tables-consistent reading of the capacity-normalized error
    (small means good); see mape_literal for the printed-formula variant.
    """
    if cap <= 0:
        raise ValueError("cap must be positive")
    return 100.0 * rmse(y, yhat) / cap


def mape_literal(y, yhat, cap: float) -> float:
    """Literal variant: (1 - sqrt(mean((y-yhat)^2)/cap)) * 100."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    y, yhat = _pair(y, yhat)
    return float((1.0 - np.sqrt(np.mean((y - yhat) ** 2) / cap)) * 100.0)


def report(y, yhat, cap: float) -> MetricReport:
    y, yhat = _pair(y, yhat)
    return MetricReport(r_squared(y, yhat), capacity_mape(y, yhat, cap),
                        rmse(y, yhat), int(y.size))
