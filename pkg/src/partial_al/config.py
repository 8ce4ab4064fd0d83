"""Experiment-grid configuration: JSON file in, validated grid of cells out.

Every field is optional. Defaults reproduce the published parameter tables:
three (rate, k) life stages, J in {50, 100}, budgets {5, 10, 25},
delta_t in {2.5, 5}, all five acquisition functions, 100 trials and the
per-mode diagnostic-coverage settings below.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .acquisition import AF_NAMES, normalize_af
from .coverage import CoverageConfig, Mode, validate_coverage
from .metrics import DEFAULT_HORIZON
from .model import PowerLawParams
from .simulator import WorldConfig

OVERLAP_DC = (
    (0.3, 0.8), (0.3, 0.9), (0.4, 0.9), (0.5, 0.6), (0.5, 0.8), (0.5, 0.9),
    (0.6, 0.7), (0.6, 0.8), (0.6, 0.9), (0.7, 0.8), (0.7, 0.9), (0.8, 0.9),
)  # fmt: skip
SUBSET_DC = (
    (0.1, 0.8), (0.1, 0.7), (0.1, 0.6), (0.2, 0.8), (0.2, 0.7), (0.2, 0.6), (0.3, 0.8),
    (0.3, 0.7), (0.3, 0.6), (0.4, 0.8), (0.4, 0.7), (0.5, 0.8), (0.5, 0.9),
)  # fmt: skip
DEFAULT_DC = {Mode.OVERLAP: OVERLAP_DC, Mode.SUBSET: SUBSET_DC}
DEFAULT_PARAMS = ((0.1, 1.3), (0.5, 0.5), (0.25, 2.0))


class ConfigError(Exception):
    """Unreadable or invalid experiment configuration."""


class Costs(BaseModel):
    model_config = ConfigDict(extra="forbid")

    partial1: float = Field(1.0, gt=0)
    partial2: float = Field(1.0, gt=0)
    proof: float = Field(1.0, gt=0)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.partial1, self.partial2, self.proof)


@dataclass(frozen=True)
class Cell:
    """One point of the grid; trials and AFs are run inside it."""

    index: int
    mode: Mode
    c1: float
    c2: float
    rate: float
    k: float
    J: int
    budget: float
    delta_t: float

    @property
    def cell_id(self) -> str:
        return (
            f"cell{self.index:04d}_{self.mode.value}_c1-{self.c1:g}_c2-{self.c2:g}"
            f"_rate-{self.rate:g}_k-{self.k:g}_J-{self.J}_B-{self.budget:g}_dt-{self.delta_t:g}"
        )

    def world(self, grid: "ExperimentGrid", seed: int) -> WorldConfig:
        return WorldConfig(
            true_params=PowerLawParams.from_rate(self.rate, self.k),
            coverage=CoverageConfig(self.mode, self.c1, self.c2),
            J=self.J,
            delta_t=self.delta_t,
            budget=self.budget,
            costs=grid.costs.as_tuple(),
            cycles=grid.cycles,
            seed=seed,
            horizon=grid.ateer_horizon,
        )


class ExperimentGrid(BaseModel):
    model_config = ConfigDict(extra="forbid")

    modes: list[Mode] = Field(default_factory=lambda: [Mode.OVERLAP, Mode.SUBSET], min_length=1)
    dc_settings: Optional[list[tuple[float, float]]] = None
    param_settings: list[tuple[float, float]] = Field(
        default_factory=lambda: [tuple(p) for p in DEFAULT_PARAMS], min_length=1
    )
    J_values: list[int] = Field(default_factory=lambda: [50, 100], min_length=1)
    budgets: list[float] = Field(default_factory=lambda: [5.0, 10.0, 25.0], min_length=1)
    delta_t_values: list[float] = Field(default_factory=lambda: [2.5, 5.0], min_length=1)
    afs: list[str] = Field(default_factory=lambda: list(AF_NAMES), min_length=1)
    trials: int = Field(100, ge=1)
    cycles: int = Field(50, ge=1)
    base_seed: int = Field(0, ge=0)
    costs: Costs = Field(default_factory=Costs)
    ateer_horizon: float = Field(DEFAULT_HORIZON, gt=0)

    @field_validator("modes", mode="before")
    @classmethod
    def _lower_modes(cls, v):
        if isinstance(v, str):
            v = [v]
        return [m.lower() if isinstance(m, str) else m for m in v]

    @field_validator("afs")
    @classmethod
    def _known_afs(cls, v):
        return [normalize_af(a) for a in v]

    @model_validator(mode="after")
    def _check_values(self):
        problems = []
        for mode in self.modes:
            for c1, c2 in self.dc_for(mode):
                for p in validate_coverage(mode, c1, c2):
                    problems.append(f"dc_settings ({c1}, {c2}) in {mode.value} mode: {p}")
        for rate, k in self.param_settings:
            if not (rate > 0 and k > 0):
                problems.append(f"param_settings ({rate}, {k}): rate and k must be positive")
        problems += [f"J_values: {j} must be >= 1" for j in self.J_values if j < 1]
        problems += [f"budgets: {b} must be >= 0" for b in self.budgets if b < 0]
        problems += [f"delta_t_values: {d} must be > 0" for d in self.delta_t_values if not d > 0]
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def dc_for(self, mode: Mode) -> list[tuple[float, float]]:
        if self.dc_settings is not None:
            return [tuple(dc) for dc in self.dc_settings]
        return list(DEFAULT_DC[Mode(mode)])

    def cells(self) -> list[Cell]:
        coverage = [(mode, c1, c2) for mode in self.modes for c1, c2 in self.dc_for(mode)]
        combos = itertools.product(
            coverage, self.param_settings, self.J_values, self.budgets, self.delta_t_values
        )
        return [
            Cell(n, mode, c1, c2, rate, k, J, budget, dt)
            for n, ((mode, c1, c2), (rate, k), J, budget, dt) in enumerate(combos)
        ]

    def size(self) -> int:
        """Number of simulation runs: cells x AFs x trials."""
        return len(self.cells()) * len(self.afs) * self.trials

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


def parse_config(text: str, source: str = "<config>") -> ExperimentGrid:
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")
    try:
        return ExperimentGrid.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"  {loc}: {err['msg']}")
        raise ConfigError(f"{source}: invalid configuration\n" + "\n".join(lines)) from None


def load_config(path) -> ExperimentGrid:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def write_config(grid: ExperimentGrid, path) -> None:
    Path(path).write_text(grid.to_json() + "\n", encoding="utf-8")

