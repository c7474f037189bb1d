"""Regression error metrics and train/test risk reports."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricError, RiskError


@dataclass(frozen=True)
class MetricReport:
    mse: float
    rmse: float
    mae: float
    n: int


@dataclass(frozen=True)
class RiskReport:
    """Mean squared error on one data split with its standard error."""

    split: str
    risk_estimate: float
    standard_error: float
    n: int


def _paired(predicted, actual):
    p = np.asarray(predicted, dtype=float).ravel()
    a = np.asarray(actual, dtype=float).ravel()
    if p.shape != a.shape:
        raise MetricError(f"length mismatch: {p.size} predictions, {a.size} actual values")
    if p.size == 0:
        raise MetricError("empty input")
    return p, a


def regression_metrics(predicted, actual) -> MetricReport:
    p, a = _paired(predicted, actual)
    err = p - a
    mse = float(np.mean(err**2))
    return MetricReport(mse, math.sqrt(mse), float(np.mean(np.abs(err))), p.size)


def risk_report(predicted, actual, split: str) -> RiskReport:
    """Risk = mean of per-row squared errors; SE = sample std / sqrt(n)."""
    p, a = _paired(predicted, actual)
    if p.size < 2:
        raise RiskError("risk standard error needs at least 2 rows")
    sq = (p - a) ** 2
    return RiskReport(split, float(np.mean(sq)), float(np.std(sq, ddof=1) / math.sqrt(sq.size)), sq.size)
