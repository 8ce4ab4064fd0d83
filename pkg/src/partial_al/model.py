"""Power-law NHPP: intensity, cumulative intensity, survival and failure-age sampling.

Times are dimensionless simulation months throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PowerLawParams:
    """Power-law intensity parameters.

    Attributes:
        alpha: Scale, in events per time**k. Equal to ``rate ** k``.
        k: Shape. ``k < 1`` is infant mortality, ``k > 1`` wear-out.
    """

    alpha: float
    k: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.k > 0):
            raise ValueError(f"alpha and k must be positive, got alpha={self.alpha}, k={self.k}")
        if not (math.isfinite(self.alpha) and math.isfinite(self.k)):
            raise ValueError("alpha and k must be finite")

    @classmethod
    def from_rate(cls, rate: float, k: float) -> "PowerLawParams":
        """Build from a characteristic rate, using ``alpha = rate ** k``."""
        if not (rate > 0 and k > 0):
            raise ValueError(f"rate and k must be positive, got rate={rate}, k={k}")
        return cls(alpha_from_rate(rate, k), k)

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.k])


def alpha_from_rate(rate: float, k: float) -> float:
    return rate**k


def intensity(params: PowerLawParams, t):
    """Failure intensity ``alpha * k * t**(k-1)``.

    Raises:
        ValueError: for negative ``t``, or ``t == 0`` with ``k < 1`` where
            the intensity is singular.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    if params.k < 1 and np.any(t == 0):
        raise ValueError("intensity is singular at t=0 for k < 1")
    out = params.alpha * params.k * t ** (params.k - 1.0)
    return float(out) if out.ndim == 0 else out


def cumulative_intensity(params: PowerLawParams, t):
    """Expected number of events on ``[0, t]``: ``alpha * t**k``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    out = params.alpha * t**params.k
    return float(out) if out.ndim == 0 else out


def conditional_survival(params: PowerLawParams, t_from, t_to):
    """Probability of no event in ``(t_from, t_to]``."""
    t_from = np.asarray(t_from, dtype=float)
    t_to = np.asarray(t_to, dtype=float)
    if np.any(t_from < 0) or np.any(t_to < t_from):
        raise ValueError("require 0 <= t_from <= t_to")
    out = np.exp(-params.alpha * (t_to**params.k - t_from**params.k))
    return float(out) if out.ndim == 0 else out


def sample_next_failure_age(params: PowerLawParams, t_prev, u):
    """Inverse-CDF draw of the next failure age given survival to ``t_prev``.

    ``u`` is a uniform variate in [0, 1) supplied by the caller, so the draw
    is deterministic in ``u``.
    """
    return sample_failure_age(params.alpha, params.k, t_prev, u)


def sample_failure_age(alpha, k, t_prev, u):
    """Array-friendly form of :func:`sample_next_failure_age` on raw ``(alpha, k)``.

    A zero ``alpha`` (a subsystem carrying no intensity) never fails.
    """
    alpha = np.asarray(alpha, dtype=float)
    t_prev = np.asarray(t_prev, dtype=float)
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        inc = np.where(alpha > 0, -np.log1p(-u) / np.where(alpha > 0, alpha, 1.0), np.inf)
    out = (inc + t_prev**k) ** (1.0 / k)
    # (t_prev**k)**(1/k) can land one ulp below t_prev
    out = np.maximum(out, t_prev)
    return float(out) if out.ndim == 0 else out
