"""Ground-truth maintenance simulation and the active-learning loop.

Each subsystem carries a latent age at its next failure. A failure stays
latent until a test covering that subsystem runs; every test repairs what
it covers (minimal repair), so the covered failure ages are redrawn
conditional on survival past the test age whether or not a failure was
found.

Timeline: systems are deployed at age 0 and the first maintenance epoch is
at ``delta_t``. At each epoch the acquisition function picks tests, the
tests run at the current age, and then every system ages by ``delta_t``.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import acquisition as acq
from .coverage import TESTS, CoverageConfig, DiagnosticTest, coverage_exponent
from .dataset import Dataset, TestRecord, fmt
from .inference import DEFAULT_INIT, dataset_fim, fit_mle, information_terms
from .metrics import DEFAULT_HORIZON, ateer, mse, squared_errors
from .model import PowerLawParams, sample_failure_age

log = logging.getLogger(__name__)

TRACE_HEADER = ("cycle", "alpha_hat", "k_hat", "ateer", "mse", "dataset_size")
SELECTION_HEADER = ("cycle", "system_id", "test", "y", "cost")
TEST_PCT_HEADER = ("cycle", "pct_partial1", "pct_partial2", "pct_proof")
DEFAULT_COSTS = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class WorldConfig:
    true_params: PowerLawParams
    coverage: CoverageConfig
    J: int
    delta_t: float
    budget: float
    costs: tuple[float, float, float] = DEFAULT_COSTS
    cycles: int = 50
    seed: int = 0
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be at least 1")
        if self.cycles < 0:
            raise ValueError("cycles must be nonnegative")
        if not self.delta_t > 0:
            raise ValueError("delta_t must be positive")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if len(self.costs) != 3 or any(not c > 0 for c in self.costs):
            raise ValueError("costs must be three positive numbers")
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))


@dataclass(frozen=True)
class SystemState:
    system_id: int
    t_age: float
    agelt1: float
    agelt2: float
    agelt3: float
    gamma1: float
    gamma2: float
    gamma3: float

    @property
    def agelt(self) -> tuple[float, float, float]:
        return (self.agelt1, self.agelt2, self.agelt3)

    @property
    def gamma(self) -> tuple[float, float, float]:
        return (self.gamma1, self.gamma2, self.gamma3)


class World:
    """Mutable population of systems plus the labeled set they produce."""

    def __init__(self, config: WorldConfig):
        self.config = config
        J = config.J
        self.t_age = np.zeros(J)
        self.agelt = np.zeros((J, 3))
        self.gamma = np.zeros((J, 3))
        self.gamma_origin = np.zeros((J, 3))
        self.dataset = Dataset()
        self.cycle = 0
        self.sub_alphas = config.true_params.alpha * config.coverage.fractions
        # one stream per (system, subsystem): the AF never perturbs untested subsystems
        self._rngs = [
            [np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0, j, i))) for i in range(3)]
            for j in range(J)
        ]
        for j in range(J):
            for i in range(3):
                self._regenerate(j, i)

    def af_rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.config.seed, spawn_key=(1,)))

    def _regenerate(self, j: int, i: int) -> None:
        u = self._rngs[j][i].random()
        origin = self.t_age[j]
        self.gamma[j, i] = sample_failure_age(self.sub_alphas[i], self.config.true_params.k, origin, u)
        self.gamma_origin[j, i] = origin

    def state(self, j: int) -> SystemState:
        return SystemState(int(j), float(self.t_age[j]), *map(float, self.agelt[j]), *map(float, self.gamma[j]))

    def states(self) -> list[SystemState]:
        return [self.state(j) for j in range(self.config.J)]

    def advance(self, dt: float | None = None) -> None:
        self.t_age += self.config.delta_t if dt is None else dt


def init_world(config: WorldConfig) -> World:
    """All systems new: age 0, never tested, failure ages drawn from age 0."""
    return World(config)


def detect_failure(state: SystemState, test, coverage: CoverageConfig) -> int:
    """1 when some covered subsystem's latent failure age has been reached."""
    covered = coverage.pt_table[DiagnosticTest.parse(test)] > 0
    return int(min(g for g, c in zip(state.gamma, covered) if c) <= state.t_age)


def _selection_pairs(selection) -> list[tuple[int, DiagnosticTest]]:
    if isinstance(selection, acq.SelectionPlan):
        selection = selection.selected
    return [(int(j), DiagnosticTest.parse(t)) for j, t in selection]


def maintenance_update(world: World, selection) -> list[TestRecord]:
    """Run the selected tests, repair what they cover, then age every system.

    Returns the records appended to ``world.dataset`` (ages before aging).
    """
    pairs = _selection_pairs(selection)
    ids = [j for j, _ in pairs]
    if len(set(ids)) != len(ids):
        raise ValueError("a system may receive at most one test per cycle")
    if any(not 0 <= j < world.config.J for j in ids):
        raise ValueError("selection names an unknown system")
    cov = world.config.coverage
    cycle = world.cycle + 1
    records = []
    for j, test in pairs:
        state = world.state(j)
        pt = tuple(int(p) for p in cov.pt_table[test])
        rec = TestRecord(
            y=detect_failure(state, test, cov),
            t_age=state.t_age,
            agelt1=state.agelt1,
            agelt2=state.agelt2,
            agelt3=state.agelt3,
            pt=pt,
            system_id=j,
            cycle=cycle,
        )
        world.dataset.append(rec)
        records.append(rec)
    for j, test in pairs:
        for i in np.flatnonzero(cov.pt_table[test]):
            world.agelt[j, i] = world.t_age[j]
            world._regenerate(j, i)
    world.advance()
    world.cycle = cycle
    return records


def build_candidates(world: World, estimate: PowerLawParams, with_fim: bool) -> acq.CandidateSet:
    """Every (system, test) pair at the current epoch, scored at ``estimate``."""
    cfg = world.config
    cov = cfg.coverage
    J, V = cfg.J, len(TESTS)
    system_ids = np.repeat(np.arange(J), V)
    tests = np.tile(np.arange(V), J)
    pt = np.tile(cov.pt_table.astype(float), (J, 1))
    t_age = world.t_age[system_ids]
    agelt = world.agelt[system_ids]
    m = coverage_exponent(cov.fractions, estimate.alpha, estimate.k, pt, t_age, agelt)
    oldest = np.where(pt > 0, agelt, np.inf).min(axis=1)
    fims = None
    if with_fim:
        # the state already sits at the maintenance epoch, so the hypothetical interval ends now
        fims = information_terms(cov.fractions, estimate, pt, t_age, agelt)
    return acq.CandidateSet(
        system_ids=system_ids,
        tests=tests,
        costs=np.asarray(cfg.costs)[tests],
        reliability=np.exp(-m),
        oldest_age=oldest,
        fims=fims,
    )


@dataclass
class CycleResult:
    cycle: int
    estimate: PowerLawParams
    fit_converged: bool
    ateer: float
    mse: float
    se_alpha: float
    se_k: float
    dataset_size: int
    selections: list[tuple[int, DiagnosticTest, int, float]] = field(default_factory=list)
    solver_converged: bool = True


@dataclass
class RunTrace:
    af: str
    config: WorldConfig
    cycles: list[CycleResult] = field(default_factory=list)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for c in self.cycles:
            w.writerow(
                [c.cycle, fmt(c.estimate.alpha), fmt(c.estimate.k), fmt(c.ateer), fmt(c.mse), c.dataset_size]
            )
        return buf.getvalue()

    def selection_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SELECTION_HEADER)
        for c in self.cycles:
            for sid, test, y, cost in c.selections:
                w.writerow([c.cycle, sid, test.label, y, fmt(cost)])
        return buf.getvalue()

    def test_counts(self) -> np.ndarray:
        """(cycles x 3) count of each diagnostic test chosen per cycle."""
        counts = np.zeros((len(self.cycles), len(TESTS)), dtype=int)
        for n, c in enumerate(self.cycles):
            for _, test, _, _ in c.selections:
                counts[n, int(test)] += 1
        return counts

    def curve(self, name: str) -> list[float]:
        return [getattr(c, name) for c in self.cycles]


def select(af: str, cands: acq.CandidateSet, budget: float, rng, estimate, base_fim) -> acq.SelectionPlan:
    af = acq.normalize_af(af)
    if af == "random":
        return acq.af_random(cands, budget, rng)
    if af == "oldest":
        return acq.af_oldest(cands, budget)
    if af == "likely_failure":
        return acq.af_most_likely_failure(cands, budget, estimate)
    if af == "entropy":
        return acq.af_entropy(cands, budget, estimate)
    return acq.af_fim_aoptimal(cands, budget, base_fim)


def run_experiment(config: WorldConfig, af_name: str, params_init: PowerLawParams | None = None) -> RunTrace:
    """Simulate ``config.cycles`` maintenance cycles driven by one acquisition function.

    Fully deterministic given ``(config.seed, af_name)``. Fits that fail to
    converge are logged and the best iterate is kept.
    """
    af = acq.normalize_af(af_name)
    trace = RunTrace(af=af, config=config)
    world = init_world(config)
    world.advance()
    rng = world.af_rng()
    estimate = params_init or DEFAULT_INIT
    truth = config.true_params
    cov = config.coverage
    for _ in range(config.cycles):
        cands = build_candidates(world, estimate, with_fim=af == "fim")
        base = dataset_fim(world.dataset, cov, estimate) if af == "fim" else None
        plan = select(af, cands, config.budget, rng, estimate, base)
        tests = plan.tests_by_system()
        records = maintenance_update(world, plan)
        fit = fit_mle(world.dataset, cov, init=estimate)
        if not fit.converged:
            log.info("cycle %d (%s): MLE not converged, keeping best iterate", world.cycle, af)
        estimate = fit.params
        se_a, se_k = squared_errors(estimate, truth)
        trace.cycles.append(
            CycleResult(
                cycle=world.cycle,
                estimate=estimate,
                fit_converged=fit.converged,
                ateer=ateer(estimate, truth, config.horizon),
                mse=mse(estimate, truth),
                se_alpha=se_a,
                se_k=se_k,
                dataset_size=len(world.dataset),
                selections=[
                    (r.system_id, tests[r.system_id], r.y, config.costs[tests[r.system_id]]) for r in records
                ],
                solver_converged=plan.converged,
            )
        )
    return trace
