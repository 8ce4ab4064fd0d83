"""Acquisition functions that choose (system, diagnostic test) pairs each cycle.

Every function returns a :class:`SelectionPlan` that tests each system at
most once and keeps total cost within the budget.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coverage import DiagnosticTest

log = logging.getLogger(__name__)

BUDGET_SLACK = 1e-9
SOLVER_TOL = 1e-8
SOLVER_MAX_ITER = 5000
# stationarity threshold on the scaled projected-gradient step
SOLVER_PG_TOL = 1e-6
_STALL = 4 * np.finfo(float).eps
_PAD = -1e100


@dataclass(frozen=True)
class Candidate:
    system_id: int
    test: DiagnosticTest
    cost: float
    fim: np.ndarray | None = None
    reliability: float = 1.0
    agelt: tuple[float, float, float] = (0.0, 0.0, 0.0)
    t_age: float = 0.0
    pt: tuple[int, int, int] = (1, 1, 1)

    def __post_init__(self):
        if not self.cost > 0:
            raise ValueError(f"candidate cost must be positive, got {self.cost}")

    @property
    def oldest_age(self) -> float:
        """Smallest last-test age among the subsystems this test covers."""
        ages = [a for a, p in zip(self.agelt, self.pt) if p]
        return min(ages) if ages else self.t_age


@dataclass
class CandidateSet:
    """Columnar view of the candidates for one cycle."""

    system_ids: np.ndarray
    tests: np.ndarray
    costs: np.ndarray
    reliability: np.ndarray
    oldest_age: np.ndarray
    fims: np.ndarray | None = None

    def __post_init__(self):
        self.system_ids = np.asarray(self.system_ids, dtype=int)
        self.tests = np.asarray(self.tests, dtype=int)
        self.costs = np.asarray(self.costs, dtype=float)
        self.reliability = np.asarray(self.reliability, dtype=float)
        self.oldest_age = np.asarray(self.oldest_age, dtype=float)
        if np.any(self.costs <= 0):
            raise ValueError("candidate costs must be positive")

    @classmethod
    def from_candidates(cls, candidates) -> "CandidateSet":
        candidates = list(candidates)
        fims = None
        if candidates and all(c.fim is not None for c in candidates):
            fims = np.array([np.asarray(c.fim, dtype=float) for c in candidates])
        return cls(
            system_ids=[c.system_id for c in candidates],
            tests=[int(c.test) for c in candidates],
            costs=[c.cost for c in candidates],
            reliability=[c.reliability for c in candidates],
            oldest_age=[c.oldest_age for c in candidates],
            fims=fims,
        )

    def __len__(self) -> int:
        return len(self.system_ids)

    def keys(self) -> list[tuple[int, DiagnosticTest]]:
        return [(int(s), DiagnosticTest(int(t))) for s, t in zip(self.system_ids, self.tests)]


def as_candidate_set(candidates) -> CandidateSet:
    if isinstance(candidates, CandidateSet):
        return candidates
    return CandidateSet.from_candidates(candidates)


@dataclass
class SelectionPlan:
    """Relaxed weights ``q`` (aligned with the candidates) and the integer selection."""

    q: np.ndarray
    selected: list[tuple[int, DiagnosticTest]]
    spent: float
    keys: list[tuple[int, DiagnosticTest]] = field(default_factory=list)
    objective: float | None = None
    converged: bool = True

    def q_by_pair(self) -> dict[tuple[int, DiagnosticTest], float]:
        return dict(zip(self.keys, map(float, self.q)))

    def tests_by_system(self) -> dict[int, DiagnosticTest]:
        return dict(self.selected)


def _greedy(order, cands: CandidateSet, budget: float) -> tuple[np.ndarray, float]:
    chosen = np.zeros(len(cands), dtype=bool)
    used: set[int] = set()
    spent = 0.0
    for idx in order:
        sid = cands.system_ids[idx]
        if sid in used:
            continue
        cost = cands.costs[idx]
        if spent + cost <= budget + BUDGET_SLACK:
            chosen[idx] = True
            used.add(sid)
            spent += cost
    return chosen, spent


def _plan(order, cands: CandidateSet, budget: float) -> SelectionPlan:
    chosen, spent = _greedy(order, cands, budget)
    keys = cands.keys()
    selected = [keys[i] for i in order if chosen[i]]
    return SelectionPlan(q=chosen.astype(float), selected=selected, spent=spent, keys=keys)


def _ranked(score, cands: CandidateSet, descending: bool) -> np.ndarray:
    """Candidate indices by score, ties broken by (system_id, test)."""
    primary = -np.asarray(score, dtype=float) if descending else np.asarray(score, dtype=float)
    return np.lexsort((cands.tests, cands.system_ids, primary))


def af_random(candidates, budget: float, rng: np.random.Generator) -> SelectionPlan:
    cands = as_candidate_set(candidates)
    if budget <= 0 or len(cands) == 0:
        return _plan([], cands, budget)
    return _plan(rng.permutation(len(cands)), cands, budget)


def af_oldest(candidates, budget: float) -> SelectionPlan:
    """Prefer tests whose covered subsystems have gone longest without a test."""
    cands = as_candidate_set(candidates)
    return _plan(_ranked(cands.oldest_age, cands, descending=False), cands, budget)


def failure_score(reliability) -> np.ndarray:
    return 1.0 - np.asarray(reliability, dtype=float)


def entropy_score(reliability) -> np.ndarray:
    """Binary entropy of the detection outcome, with ``0 ln 0 = 0``."""
    r = np.clip(np.asarray(reliability, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(r > 0, r * np.log(r), 0.0) - np.where(r < 1, (1 - r) * np.log1p(-r), 0.0)
    return h


def af_most_likely_failure(candidates, budget: float, params_est=None) -> SelectionPlan:
    """Prefer the highest predicted failure probability.

    Candidate reliabilities must already be evaluated at ``params_est``;
    the argument is accepted for symmetry with the other AFs.
    """
    cands = as_candidate_set(candidates)
    return _plan(_ranked(failure_score(cands.reliability), cands, descending=True), cands, budget)


def af_entropy(candidates, budget: float, params_est=None) -> SelectionPlan:
    cands = as_candidate_set(candidates)
    return _plan(_ranked(entropy_score(cands.reliability), cands, descending=True), cands, budget)


# ---------------------------------------------------------------------------
# relaxed A-optimal design
# ---------------------------------------------------------------------------


def ridge(base_fim: np.ndarray) -> float:
    d = base_fim.shape[0]
    return 1e-6 * (1.0 + np.trace(base_fim) / d)


def aoptimal_objective(q, fims, base_fim) -> float:
    """``tr((base + ridge I + sum_n q_n A_n)^-1)``."""
    base_fim = np.asarray(base_fim, dtype=float)
    mat = base_fim + ridge(base_fim) * np.eye(base_fim.shape[0])
    mat = mat + np.einsum("n,nij->ij", np.asarray(q, dtype=float), fims)
    return float(np.trace(np.linalg.inv(mat)))


class _Polytope:
    """Projection onto ``{0 <= q, sum q over each system <= 1, costs . q <= budget}``.

    The per-system caps make ``q <= 1`` redundant. The budget is handled by
    a scalar multiplier: for ``mu >= 0`` the projection of ``x - mu * w``
    onto the per-system sets is separable, and spending is monotone in
    ``mu``, so a bracketed root search on ``mu`` finishes the job.
    """

    def __init__(self, groups: np.ndarray, costs: np.ndarray, budget: float):
        self.budget = float(budget)
        self.costs = costs
        uniq, inverse = np.unique(groups, return_inverse=True)
        counts = np.bincount(inverse, minlength=len(uniq))
        width = counts.max(initial=0)
        order = np.argsort(inverse, kind="stable")
        slot = np.empty(len(groups), dtype=int)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        slot[order] = np.arange(len(groups)) - np.repeat(starts, counts)
        self.rows, self.cols = inverse, slot
        self.shape = (len(uniq), width)
        self.ranks = np.arange(1, width + 1)

    def _rows(self, x: np.ndarray) -> np.ndarray:
        y = np.full(self.shape, _PAD)
        y[self.rows, self.cols] = x
        z = np.maximum(y, 0.0)
        over = z.sum(axis=1) > 1.0
        if np.any(over):
            yo = y[over]
            u = -np.sort(-yo, axis=1)
            css = np.cumsum(u, axis=1) - 1.0
            cond = u - css / self.ranks > 0
            rho = self.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
            theta = css[np.arange(len(rho)), rho] / (rho + 1)
            z[over] = np.maximum(yo - theta[:, None], 0.0)
        return z[self.rows, self.cols]

    def project(self, x: np.ndarray) -> np.ndarray:
        w, budget = self.costs, self.budget
        p = self._rows(x)
        spend = w @ p
        if spend <= budget:
            return p
        lo, s_lo = 0.0, spend
        hi = float(np.max(x / w)) + 1.0
        p_hi = np.zeros_like(x)
        s_hi = 0.0
        side = 0
        for _ in range(200):
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
            # Illinois-style regula falsi on the piecewise-linear spending curve
            mu = lo + (s_lo - budget) * (hi - lo) / (s_lo - s_hi)
            if not lo < mu < hi:
                mu = 0.5 * (lo + hi)
            p = self._rows(x - mu * w)
            spend = w @ p
            if abs(spend - budget) <= 1e-13 * max(1.0, budget):
                if spend <= budget:
                    return p
                # nudge just inside the budget
                return p * (budget / spend)
            if spend > budget:
                lo, s_lo = mu, spend
                if side == -1:
                    s_hi = budget + 0.5 * (s_hi - budget)
                side = -1
            else:
                hi, s_hi, p_hi = mu, spend, p
                if side == 1:
                    s_lo = budget + 0.5 * (s_lo - budget)
                side = 1
        return p_hi


def _stationarity(poly: _Polytope, q: np.ndarray, g: np.ndarray) -> float:
    gmax = np.max(np.abs(g))
    if gmax == 0:
        return 0.0
    return float(np.max(np.abs(poly.project(q - g / gmax) - q)))


@dataclass
class RelaxedSolution:
    q: np.ndarray
    objective: float
    history: list[float]
    converged: bool
    iterations: int


def solve_relaxed(
    fims,
    costs,
    groups,
    budget: float,
    base_fim,
    tol: float = SOLVER_TOL,
    max_iter: int = SOLVER_MAX_ITER,
) -> RelaxedSolution:
    """Minimize ``tr((base + ridge I + sum q A)^-1)`` over the relaxed selection polytope.

    Spectral projected gradient with a monotone Armijo line search, so the
    recorded objective history never increases. Stops when the relative
    objective change drops below ``tol`` and the scaled projected-gradient
    step ``||P(q - g / max|g|) - q||_inf`` is below ``SOLVER_PG_TOL``, or after
    ``max_iter`` iterations. The second test keeps a single short step along
    nearly collinear candidates from ending the search early; a step that no
    longer changes the objective at floating-point resolution also stops.
    """
    fims = np.asarray(fims, dtype=float)
    costs = np.asarray(costs, dtype=float)
    base_fim = np.asarray(base_fim, dtype=float)
    d = base_fim.shape[0]
    m0 = base_fim + ridge(base_fim) * np.eye(d)
    n = len(costs)
    if n == 0 or budget <= 0:
        f0 = float(np.trace(np.linalg.inv(m0)))
        return RelaxedSolution(np.zeros(n), f0, [f0], True, 0)

    poly = _Polytope(np.asarray(groups), costs, budget)

    def evaluate(q):
        inv = np.linalg.inv(m0 + np.einsum("n,nij->ij", q, fims))
        return float(np.trace(inv)), inv

    def gradient(inv):
        return -np.einsum("nij,ji->n", fims, inv @ inv)

    q = poly.project(np.ones(n))
    f, inv = evaluate(q)
    g = gradient(inv)
    history = [f]
    gmax = np.max(np.abs(g))
    step = 1.0 / gmax if gmax > 0 else 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        direction = poly.project(q - step * g) - q
        slope = g @ direction
        if not np.any(direction) or slope >= 0:
            converged = True
            break
        t = 1.0
        for _ in range(60):
            f_new, inv_new = evaluate(q + t * direction)
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            converged = True
            break
        q_new = q + t * direction
        g_new = gradient(inv_new)
        s, yv = q_new - q, g_new - g
        sy = s @ yv
        step = (s @ s) / sy if sy > 0 else 1.0 / max(np.max(np.abs(g_new)), 1e-300)
        step = min(max(step, 1e-30), 1e30)
        rel = (f - f_new) / abs(f) if f != 0 else 0.0
        q, f, g = q_new, f_new, g_new
        history.append(f)
        if rel < tol and (rel <= _STALL or _stationarity(poly, q, g) < SOLVER_PG_TOL):
            converged = True
            break
    if not converged:
        log.debug("relaxed A-optimal solver stopped at max_iter=%d", max_iter)
    return RelaxedSolution(np.clip(q, 0.0, 1.0), f, history, converged, it)


def round_selection(q, candidates, budget: float) -> SelectionPlan:
    """Deterministic rounding of relaxed weights to one test per system.

    Each system keeps its highest-weight test; systems are then taken in
    decreasing weight (ties by system id) while the budget allows.
    """
    cands = as_candidate_set(candidates)
    q = np.asarray(q, dtype=float)
    n = len(cands)
    if n == 0:
        return SelectionPlan(q=q, selected=[], spent=0.0, keys=[])
    # best test per system: highest q, then lowest test index
    order = np.lexsort((cands.tests, -q, cands.system_ids))
    first = np.ones(n, dtype=bool)
    first[1:] = cands.system_ids[order][1:] != cands.system_ids[order][:-1]
    best = order[first]
    ranked = best[np.lexsort((cands.system_ids[best], -q[best]))]
    chosen, spent = _greedy(ranked, cands, budget)
    keys = cands.keys()
    selected = [keys[i] for i in ranked if chosen[i]]
    return SelectionPlan(q=q, selected=selected, spent=spent, keys=keys)


def af_fim_aoptimal(candidates, budget: float, base_fim) -> SelectionPlan:
    """A-optimal design over candidate Fisher matrices, relaxed then rounded."""
    cands = as_candidate_set(candidates)
    if cands.fims is None:
        raise ValueError("A-optimal acquisition needs a Fisher matrix on every candidate")
    sol = solve_relaxed(cands.fims, cands.costs, cands.system_ids, budget, base_fim)
    plan = round_selection(sol.q, cands, budget)
    plan.objective = sol.objective
    plan.converged = sol.converged
    return plan


AF_NAMES = ("random", "oldest", "likely_failure", "entropy", "fim")

AcquisitionFn = Callable[..., SelectionPlan]


def normalize_af(name: str) -> str:
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    aliases = {
        "most_likely_failure": "likely_failure",
        "likely": "likely_failure",
        "oldest_subsystem": "oldest",
        "ours": "fim",
        "aoptimal": "fim",
        "fim_aoptimal": "fim",
        "proposed": "fim",
    }
    key = aliases.get(key, key)
    if key not in AF_NAMES:
        raise ValueError(f"unknown acquisition function {name!r}; choose from {AF_NAMES}")
    return key
