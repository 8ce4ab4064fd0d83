"""Diagnostic-coverage algebra for three-subsystem hardware.

Two partial tests and a proof test split the system into three subsystems.
In ``OVERLAP`` mode the partial tests cover {1, 2} and {2, 3}; in ``SUBSET``
mode they cover {1} and {1, 2}. The proof test covers everything. With a
shared shape ``k`` the coverage coefficients fix how the total ``alpha`` is
divided among subsystems, independent of time.

Subsystems are indexed 1..3 in the public API and 0..2 in arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import PowerLawParams


class Mode(str, enum.Enum):
    OVERLAP = "overlap"
    SUBSET = "subset"


class DiagnosticTest(enum.IntEnum):
    PARTIAL1 = 0
    PARTIAL2 = 1
    PROOF = 2

    @property
    def label(self) -> str:
        return ("partial1", "partial2", "proof")[self]

    @classmethod
    def parse(cls, value) -> "DiagnosticTest":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().lower().replace("_", "").replace(" ", "")
            for test in cls:
                if key in (test.label, test.name.lower()):
                    return test
            raise ValueError(f"unknown diagnostic test {value!r}")
        return cls(int(value))


TESTS = tuple(DiagnosticTest)

# rows: test, columns: subsystem
_PT_TABLE = {
    Mode.OVERLAP: np.array([[1, 1, 0], [0, 1, 1], [1, 1, 1]], dtype=np.int8),
    Mode.SUBSET: np.array([[1, 0, 0], [1, 1, 0], [1, 1, 1]], dtype=np.int8),
}
for _table in _PT_TABLE.values():
    _table.setflags(write=False)


@dataclass(frozen=True)
class CoverageConfig:
    """Coverage mode plus the diagnostic coverage of the two partial tests."""

    mode: Mode
    c1: float
    c2: float

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        problems = validate_coverage(self.mode, self.c1, self.c2)
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def fractions(self) -> np.ndarray:
        """Share of the total ``alpha`` carried by each subsystem."""
        return subsystem_fractions(self.mode, self.c1, self.c2)

    @property
    def pt_table(self) -> np.ndarray:
        """(3 tests x 3 subsystems) 0/1 coverage table."""
        return _PT_TABLE[self.mode]


def validate_coverage(mode, c1: float, c2: float) -> list[str]:
    """List every constraint that ``(mode, c1, c2)`` violates."""
    mode = Mode(mode)
    problems = []
    for name, c in (("c1", c1), ("c2", c2)):
        if not 0 < c < 1:
            problems.append(f"{name}={c} must lie strictly inside (0, 1)")
    if mode is Mode.OVERLAP and not c1 + c2 >= 1:
        problems.append(f"overlap mode requires c1 + c2 >= 1, got {c1} + {c2}")
    if mode is Mode.SUBSET and not c1 <= c2:
        problems.append(f"subset mode requires c1 <= c2, got c1={c1}, c2={c2}")
    return problems


def subsystem_fractions(mode, c1: float, c2: float) -> np.ndarray:
    mode = Mode(mode)
    if mode is Mode.OVERLAP:
        f1, f2 = 1.0 - c2, c1 + c2 - 1.0
    else:
        f1, f2 = c1, c2 - c1
    # third share closes the partition so the fractions sum to exactly 1
    return np.array([f1, f2, 1.0 - (f1 + f2)])


@dataclass(frozen=True)
class SubsystemAlphas:
    a1: float
    a2: float
    a3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3])

    @property
    def total(self) -> float:
        return self.a1 + self.a2 + self.a3


@dataclass(frozen=True)
class PTVector:
    pt1: int
    pt2: int
    pt3: int

    def as_array(self) -> np.ndarray:
        return np.array([self.pt1, self.pt2, self.pt3], dtype=np.int8)

    def __iter__(self):
        return iter((self.pt1, self.pt2, self.pt3))


def subsystem_alphas(config: CoverageConfig, alpha: float) -> SubsystemAlphas:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    a = alpha * config.fractions
    return SubsystemAlphas(*map(float, a))


def pt_vector(config: CoverageConfig, test) -> PTVector:
    row = config.pt_table[DiagnosticTest.parse(test)]
    return PTVector(*map(int, row))


def covered_subsystems(config: CoverageConfig, test) -> frozenset[int]:
    """1-based indices of the subsystems a test inspects."""
    return frozenset(i + 1 for i, flag in enumerate(pt_vector(config, test)) if flag)


def dc_roundtrip(alphas: SubsystemAlphas, mode) -> tuple[float, float]:
    """Recover ``(c1, c2)`` from subsystem alphas."""
    a1, a2, a3 = alphas.a1, alphas.a2, alphas.a3
    if min(a1, a2, a3) < 0:
        raise ValueError("subsystem alphas must be nonnegative")
    total = a1 + a2 + a3
    if total <= 0:
        raise ValueError("total alpha must be positive")
    if Mode(mode) is Mode.OVERLAP:
        return (a1 + a2) / total, (a2 + a3) / total
    return a1 / total, (a1 + a2) / total


def coverage_exponent(fractions, alpha, k, pt, t_age, agelt):
    """Expected covered event count ``m`` over each record's open intervals.

    Args:
        fractions: (3,) subsystem shares of ``alpha``.
        alpha, k: scalars.
        pt: (..., 3) coverage flags.
        t_age: (...) system ages at test time.
        agelt: (..., 3) subsystem last-test ages.

    Returns:
        ``m`` with reliability ``exp(-m)``. The common interval is factored
        out, so records whose covered subsystems share a last-test age get
        ``alpha * sum(w) * (t_age**k - agelt**k)`` with no extra rounding.
    """
    t_age = np.asarray(t_age, dtype=float)
    agelt = np.asarray(agelt, dtype=float)
    w = np.asarray(pt) * np.asarray(fractions)
    d = t_age[..., None] ** k - agelt**k
    covered = np.asarray(pt) > 0
    d_ref = np.where(covered, d, np.inf).min(axis=-1)
    d_ref = np.where(np.isfinite(d_ref), d_ref, 0.0)
    total = w.sum(axis=-1)
    resid = (w * (d - d_ref[..., None])).sum(axis=-1)
    return alpha * (total * d_ref + resid)


def reliability_partial(
    config: CoverageConfig,
    params: PowerLawParams,
    pt,
    t_age: float,
    agelt1: float,
    agelt2: float,
    agelt3: float,
) -> float:
    """Probability that no covered subsystem fails between its last test and ``t_age``."""
    agelt = np.array([agelt1, agelt2, agelt3], dtype=float)
    if np.any(agelt < 0) or np.any(agelt > t_age):
        raise ValueError("require 0 <= agelt_i <= t_age for every subsystem")
    pt = np.asarray(tuple(pt), dtype=float)
    m = coverage_exponent(config.fractions, params.alpha, params.k, pt, t_age, agelt)
    return float(np.exp(-m))
