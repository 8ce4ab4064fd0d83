"""Learning-curve metrics: ATEER, parameter MSE, AUC and average ranks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .model import PowerLawParams

DEFAULT_HORIZON = 100.0


def _antiderivative(alpha: float, k: float, tau: float) -> float:
    return alpha * tau ** (k + 1.0) / (k + 1.0)


def ateer(est: PowerLawParams, truth: PowerLawParams, horizon: float = DEFAULT_HORIZON) -> float:
    """Integrated absolute error between estimated and true cumulative intensity on [0, horizon].

    Two power curves cross at most once on (0, inf), so the integral is
    evaluated in closed form on at most two constant-sign pieces.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")

    def signed(lo: float, hi: float) -> float:
        return (_antiderivative(est.alpha, est.k, hi) - _antiderivative(truth.alpha, truth.k, hi)) - (
            _antiderivative(est.alpha, est.k, lo) - _antiderivative(truth.alpha, truth.k, lo)
        )

    cuts = [0.0]
    if est.k != truth.k:
        log_cross = (math.log(truth.alpha) - math.log(est.alpha)) / (est.k - truth.k)
        if log_cross < math.log(horizon):
            cuts.append(math.exp(log_cross))
    cuts.append(horizon)
    return float(sum(abs(signed(lo, hi)) for lo, hi in zip(cuts[:-1], cuts[1:])))


def squared_errors(est: PowerLawParams, truth: PowerLawParams) -> tuple[float, float]:
    return (est.alpha - truth.alpha) ** 2, (est.k - truth.k) ** 2


def mse(est: PowerLawParams, truth: PowerLawParams) -> float:
    """Mean over the two parameters of the squared estimation error."""
    return sum(squared_errors(est, truth)) / 2.0


@dataclass(frozen=True)
class LearningCurve:
    cycles: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.cycles) != len(self.values):
            raise ValueError("cycles and values differ in length")
        if any(b <= a for a, b in zip(self.cycles, self.cycles[1:])):
            raise ValueError("cycle indices must be strictly increasing")

    @classmethod
    def from_values(cls, values: Sequence[float], start: int = 1) -> "LearningCurve":
        return cls(tuple(range(start, start + len(values))), tuple(float(v) for v in values))

    @classmethod
    def from_pairs(cls, pairs) -> "LearningCurve":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(float(p[1]) for p in pairs))


def auc(curve) -> float:
    """Trapezoidal area under a learning curve.

    Accepts a :class:`LearningCurve` or a sequence of ``(cycle, value)`` pairs.
    """
    if not isinstance(curve, LearningCurve):
        curve = LearningCurve.from_pairs(curve)
    if len(curve.values) < 2:
        raise ValueError("auc needs at least two points")
    return float(np.trapezoid(curve.values, curve.cycles))


def average_ranks(results: Mapping[object, Mapping[str, float]]) -> dict[str, float]:
    """Mean rank of each acquisition function across configurations.

    Args:
        results: ``{config_id: {af: auc}}``. Lower AUC is better and gets
            rank 1; ties share the mean of their positions.

    Raises:
        ValueError: if any configuration lacks a value for some AF.
    """
    if not results:
        return {}
    afs = sorted({af for row in results.values() for af in row})
    missing = [(cfg, af) for cfg, row in results.items() for af in afs if af not in row]
    if missing:
        raise ValueError(f"missing AUC cells: {missing}")
    ranks = np.array([rankdata([row[af] for af in afs], method="average") for row in results.values()])
    return {af: float(r) for af, r in zip(afs, ranks.mean(axis=0))}


def rank_table(results: Mapping[object, Mapping[str, float]]) -> dict[object, dict[str, float]]:
    """Per-configuration ranks, same layout as the input."""
    out = {}
    for cfg, row in results.items():
        afs = list(row)
        out[cfg] = dict(zip(afs, map(float, rankdata([row[af] for af in afs], method="average"))))
    return out
