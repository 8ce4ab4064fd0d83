"""Likelihood, analytic gradients, MLE and conditional Fisher information.

Each record contributes a Bernoulli observation with success (no detected
failure) probability ``R = exp(-m)``, where ``m`` is the expected number of
covered events since each subsystem's last test. Parameter order in every
gradient and Fisher matrix is ``(alpha, k)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .coverage import CoverageConfig, DiagnosticTest, coverage_exponent
from .model import PowerLawParams

log = logging.getLogger(__name__)

ALPHA_FLOOR = K_FLOOR = 1e-8
ALPHA_CEIL = K_CEIL = 1e6
M_GUARD = 1e-12
DEFAULT_INIT = PowerLawParams(0.1, 1.0)
GTOL = 1e-8
STALL_GTOL = 1e-5  # accepted when the line search can no longer make progress
MAX_ITER = 200
_MAX_STEP = 3.0  # largest move per iteration in log space

_LOG_BOUNDS = [(math.log(ALPHA_FLOOR), math.log(ALPHA_CEIL)), (math.log(K_FLOOR), math.log(K_CEIL))]


@dataclass(frozen=True)
class FitResult:
    params: PowerLawParams
    nll: float
    converged: bool
    iterations: int


def _pow_log(x, k):
    """``x**k * ln(x)`` with the limit value 0 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, safe**k * np.log(safe), 0.0)


def exponent_terms(fractions, alpha: float, k: float, pt, t_age, agelt):
    """Vectorized ``m`` and ``(dm/dalpha, dm/dk)`` for arrays of records.

    Returns:
        ``(m, grad)`` with shapes ``(n,)`` and ``(n, 2)``.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        m = coverage_exponent(fractions, alpha, k, pt, t_age, agelt)
        w = np.asarray(pt) * np.asarray(fractions)
        dk = _pow_log(np.asarray(t_age)[..., None], k) - _pow_log(agelt, k)
        grad_k = alpha * (w * dk).sum(axis=-1)
    grad = np.stack([m / alpha, grad_k], axis=-1)
    return m, grad


def _columns(dataset):
    view = dataset.snapshot() if hasattr(dataset, "snapshot") else dataset
    return view.y, view.t_age, view.agelt, view.pt


def record_exponent(config: CoverageConfig, params: PowerLawParams, record):
    """``m`` and its gradient for a single :class:`~partial_al.dataset.TestRecord`."""
    m, grad = exponent_terms(
        config.fractions,
        params.alpha,
        params.k,
        np.asarray(record.pt, dtype=float),
        record.t_age,
        np.asarray(record.agelt, dtype=float),
    )
    return float(m), grad


def _nll_terms(y, m):
    """Per-record negative log-likelihood and the factor multiplying ``grad_m``."""
    m_fail = np.maximum(m, M_GUARD)
    with np.errstate(over="ignore", divide="ignore"):
        fail_nll = -np.log(-np.expm1(-m_fail))
        odds = 1.0 / np.expm1(m_fail)  # R / (1 - R)
    terms = np.where(y > 0, fail_nll, m)
    factor = np.where(y > 0, -odds, 1.0)
    return terms, factor


def nll(dataset, config: CoverageConfig, params: PowerLawParams) -> float:
    y, t_age, agelt, pt = _columns(dataset)
    if len(y) == 0:
        return 0.0
    m, _ = exponent_terms(config.fractions, params.alpha, params.k, pt, t_age, agelt)
    terms, _ = _nll_terms(y, m)
    return float(terms.sum())


def nll_gradient(dataset, config: CoverageConfig, params: PowerLawParams) -> np.ndarray:
    y, t_age, agelt, pt = _columns(dataset)
    if len(y) == 0:
        return np.zeros(2)
    m, grad = exponent_terms(config.fractions, params.alpha, params.k, pt, t_age, agelt)
    _, factor = _nll_terms(y, m)
    return (factor[:, None] * grad).sum(axis=0)


def _objective(cols, fractions):
    y, t_age, agelt, pt = cols

    def f_and_g(theta):
        alpha, k = np.exp(theta)
        with np.errstate(over="ignore", invalid="ignore"):
            m, grad = exponent_terms(fractions, alpha, k, pt, t_age, agelt)
            terms, factor = _nll_terms(y, m)
            f = terms.sum()
            g = (factor[:, None] * grad).sum(axis=0) * np.array([alpha, k])
        return f, g

    return f_and_g


def _proj_grad_norm(x, g, lo, hi) -> float:
    pinned = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
    return float(np.max(np.abs(np.where(pinned, 0.0, g))))


def _fit_from(cols, fractions, init: PowerLawParams) -> FitResult:
    """Projected BFGS in ``(ln alpha, ln k)`` with Armijo backtracking.

    Trial points where the objective overflows are rejected by the line
    search like any other insufficient decrease. Converged means a projected
    gradient below ``GTOL``, or below ``STALL_GTOL * max(1, |f|)`` once the
    line search stalls at floating-point resolution.
    """
    f_and_g = _objective(cols, fractions)
    lo, hi = np.array(_LOG_BOUNDS).T
    x = np.clip(np.log([init.alpha, init.k]), lo, hi)
    f, g = f_and_g(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        x = np.log([DEFAULT_INIT.alpha, DEFAULT_INIT.k])
        f, g = f_and_g(x)
    H = np.eye(2)
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        pinned = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        pg = np.where(pinned, 0.0, g)
        if _proj_grad_norm(x, g, lo, hi) < GTOL:
            converged = True
            break
        free = ~pinned
        d = np.zeros(2)
        d[free] = -H[np.ix_(free, free)] @ g[free]
        if g @ d >= 0:
            H = np.eye(2)
            d = -pg
        d *= min(1.0, _MAX_STEP / np.max(np.abs(d)))
        t = 1.0
        for _ in range(60):
            x_new = np.clip(x + t * d, lo, hi)
            f_new, g_new = f_and_g(x_new)
            if np.isfinite(f_new) and np.all(np.isfinite(g_new)) and f_new <= f + 1e-4 * (g @ (x_new - x)):
                break
            t *= 0.5
        else:
            converged = _proj_grad_norm(x, g, lo, hi) < STALL_GTOL * max(1.0, abs(f))
            break
        s, yv = x_new - x, g_new - g
        if not np.any(s):
            converged = _proj_grad_norm(x, g, lo, hi) < STALL_GTOL * max(1.0, abs(f))
            break
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if it == 1:
                H = (sy / (yv @ yv)) * np.eye(2)
            rho = 1.0 / sy
            V = np.eye(2) - rho * np.outer(s, yv)
            H = V @ H @ V.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
    else:
        converged = _proj_grad_norm(x, g, lo, hi) < GTOL
    alpha, k = np.exp(x)
    return FitResult(PowerLawParams(float(alpha), float(k)), float(f), bool(converged), it)


def fit_mle(dataset, config: CoverageConfig, init: PowerLawParams | None = None) -> FitResult:
    """Maximum-likelihood ``(alpha, k)`` over the box ``[1e-8, 1e6]**2``.

    The search runs in log-parameter space (see :func:`_fit_from`). When ``init``
    differs from the default start ``(0.1, 1.0)`` both starts are tried and
    the lower objective wins, so a warm start stuck on a plateau from an
    earlier, smaller dataset cannot trap the fit.
    """
    cols = _columns(dataset)
    init = init or DEFAULT_INIT
    if len(cols[0]) == 0:
        return FitResult(init, 0.0, True, 0)
    fractions = config.fractions
    best = _fit_from(cols, fractions, init)
    if init != DEFAULT_INIT:
        alt = _fit_from(cols, fractions, DEFAULT_INIT)
        if alt.nll < best.nll:
            best = alt
    if not best.converged:
        log.debug("MLE did not converge after %d iterations", best.iterations)
    return best


def information_terms(fractions, params: PowerLawParams, pt, t_age, agelt) -> np.ndarray:
    """Expected per-record Fisher matrices, shape ``(n, 2, 2)``.

    ``E[score score^T] = grad_m grad_m^T * R / (1 - R)``; zero when ``m = 0``.
    """
    m, grad = exponent_terms(fractions, params.alpha, params.k, pt, t_age, agelt)
    with np.errstate(over="ignore", divide="ignore"):
        odds = np.where(m > 0, 1.0 / np.expm1(np.where(m > 0, m, 1.0)), 0.0)
    fim = odds[:, None, None] * grad[:, :, None] * grad[:, None, :]
    return np.where(np.isfinite(fim), fim, 0.0)


def dataset_fim(dataset, config: CoverageConfig, params: PowerLawParams) -> np.ndarray:
    """Summed expected information of the labeled records at ``params``."""
    _, t_age, agelt, pt = _columns(dataset)
    if len(t_age) == 0:
        return np.zeros((2, 2))
    return information_terms(config.fractions, params, pt, t_age, agelt).sum(axis=0)


def candidate_fim(
    config: CoverageConfig,
    params: PowerLawParams,
    test,
    state,
    delta_t: float,
) -> np.ndarray:
    """Fisher matrix of the record that ``test`` on ``state`` would produce.

    The hypothetical interval ends at ``state.t_age + delta_t``.
    """
    pt = config.pt_table[DiagnosticTest.parse(test)].astype(float)
    agelt = np.array([state.agelt1, state.agelt2, state.agelt3], dtype=float)
    t_age = np.array([state.t_age + delta_t])
    return information_terms(config.fractions, params, pt[None, :], t_age, agelt[None, :])[0]
