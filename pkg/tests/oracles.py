"""Independent reference computations shared by the unit and acceptance tests.

Nothing here calls into the package's likelihood, sampler or solver code;
each helper re-derives its quantity from first principles or from scipy.
"""

import itertools

import numpy as np
from scipy import stats

from partial_al.coverage import CoverageConfig, Mode
from partial_al.dataset import Dataset, TestRecord


def random_config(rng) -> CoverageConfig:
    if rng.random() < 0.5:
        c1 = rng.uniform(0.05, 0.95)
        c2 = rng.uniform(max(1 - c1, 0.05), 0.95)
        return CoverageConfig(Mode.OVERLAP, c1, c2)
    c1, c2 = np.sort(rng.uniform(0.05, 0.95, 2))
    return CoverageConfig(Mode.SUBSET, c1, c2)


def random_dataset(rng, config, n_records=None) -> Dataset:
    """Records with random ages, coverage rows and labels (not model-generated)."""
    n = n_records or int(rng.integers(1, 20))
    records = []
    for sid in range(n):
        t_age = rng.uniform(0.5, 20.0)
        agelt = rng.uniform(0.0, 0.95, 3) * t_age
        pt = config.pt_table[rng.integers(3)]
        records.append(TestRecord(int(rng.integers(2)), t_age, *agelt, pt=tuple(pt), system_id=sid))
    return Dataset(records)


def m_direct(config, alpha, k, record) -> float:
    """Expected covered event count, summed subsystem by subsystem."""
    f = config.fractions
    return sum(
        alpha * f[i] * (record.t_age**k - record.agelt[i] ** k) for i in range(3) if record.pt[i]
    )


def nll_direct(config, alpha, k, dataset) -> float:
    total = 0.0
    for r in dataset:
        m = m_direct(config, alpha, k, r)
        total += -np.log1p(-np.exp(-m)) if r.y else m
    return total


def central_difference(f, x, rel_step=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(len(x)):
        h = rel_step * max(abs(x[i]), 1e-3)
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def conditional_weibull_draw(alpha, k, t_from, u):
    """Next failure age given survival to ``t_from`` via scipy's Weibull tail."""
    dist = stats.weibull_min(k, scale=alpha ** (-1.0 / k))
    return dist.isf(np.asarray(u) * dist.sf(t_from))


def proof_only_dataset(alpha, k, n_systems, n_cycles, delta_t, rng) -> Dataset:
    """Every system proof-tested every cycle; labels from scipy Weibull draws."""
    last = np.zeros(n_systems)
    records = []
    for c in range(1, n_cycles + 1):
        t = c * delta_t
        fail_age = conditional_weibull_draw(alpha, k, last, rng.random(n_systems))
        for sid in range(n_systems):
            records.append(
                TestRecord(int(fail_age[sid] <= t), t, last[sid], last[sid], last[sid], (1, 1, 1), system_id=sid, cycle=c)
            )
        last[:] = t
    return Dataset(records)


def enumerate_integer_designs(groups, costs, budget):
    """Every 0/1 selection with at most one candidate per group and cost within budget."""
    groups = np.asarray(groups)
    per_group = [np.flatnonzero(groups == g) for g in np.unique(groups)]
    for choice in itertools.product(*[[None, *idx] for idx in per_group]):
        q = np.zeros(len(groups))
        for c in choice:
            if c is not None:
                q[c] = 1.0
        if q @ costs <= budget + 1e-9:
            yield q


def trace_inverse(q, fims, base):
    d = base.shape[0]
    delta = 1e-6 * (1 + np.trace(base) / d)
    mat = base + delta * np.eye(d) + sum(qi * a for qi, a in zip(q, fims))
    return float(np.trace(np.linalg.inv(mat)))


def random_psd_rank1(rng, scale=1.0):
    v = rng.normal(size=2) * scale
    return np.outer(v, v)
