"""Ensemble cost/gradient estimators, approximate control variates and budgeting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .sampling import SamplingDistribution, score_vector

logger = logging.getLogger(__name__)

C_MAX = 0.999
_EXP_LIMIT = 700.0


def exponentiate(f, beta_exp: float, f_ref: float = 0.0):
    """``-exp(-beta_exp (f - f_ref))``; monotone decreasing in ``f``.

    ``f_ref`` is normally the smallest cost sampled in the iteration, which keeps
    the exponent non-positive for every sample.
    """
    if not beta_exp > 0:
        raise ValueError(f"beta_exp must be positive, got {beta_exp}")
    expo = -beta_exp * (np.asarray(f, dtype=float) - f_ref)
    if np.any(expo > _EXP_LIMIT):
        logger.warning("cost exponentiation overflow clamped (exponent %.1f)", float(np.max(expo)))
        expo = np.minimum(expo, _EXP_LIMIT)
    out = -np.exp(expo)
    return float(out) if out.ndim == 0 else out


def ensemble_cost(costs) -> float:
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        raise ValueError("ensemble cost needs at least one sample")
    return float(np.mean(costs))


def ensemble_gradient(q: np.ndarray, costs) -> np.ndarray:
    """Score-function estimate ``<q f>``.

    Args:
        q: (M, n) score vectors of the sampled perturbations.
        costs: (M,) costs of the same samples.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    costs = np.asarray(costs, dtype=float).ravel()
    if q.shape[0] != costs.size:
        raise ValueError(f"{q.shape[0]} score vectors for {costs.size} costs")
    if costs.size == 0:
        raise ValueError("ensemble gradient needs at least one sample")
    return costs @ q / costs.size


def cv_statistics(qf: np.ndarray, qh: np.ndarray) -> tuple[float, float]:
    """Component-averaged (beta_CV, correlation) from paired samples.

    ``beta = mean_k Cov_k / mean_k Var_k[qh]`` and the correlation is the mean
    of the per-component correlations. Components with no spread in either
    factor are skipped for the correlation.
    """
    qf = np.atleast_2d(qf)
    qh = np.atleast_2d(qh)
    if qf.shape[0] < 2:
        return 0.0, 0.0
    df = qf - qf.mean(axis=0)
    dh = qh - qh.mean(axis=0)
    m = qf.shape[0] - 1
    cov = np.sum(df * dh, axis=0) / m
    var_f = np.sum(df * df, axis=0) / m
    var_h = np.sum(dh * dh, axis=0) / m
    vh = float(np.mean(var_h))
    scale = max(float(np.mean(var_f)), vh)
    if not vh > 1e-300 or vh <= 1e-14 * scale:
        return 0.0, 0.0
    beta = float(np.mean(cov) / vh)
    ok = (var_f > 0) & (var_h > 0)
    corr = float(np.mean(cov[ok] / np.sqrt(var_f[ok] * var_h[ok]))) if np.any(ok) else 0.0
    return beta, corr


def acv_combine(qf_hi: np.ndarray, qh_hi: np.ndarray, qh_all: np.ndarray | None, beta: float,
                exact_mean: np.ndarray | None = None) -> np.ndarray:
    """Control-variate gradient from precomputed products.

    ``mean_M(qf - beta qh) + beta * E[qh]`` where ``E[qh]`` is ``exact_mean``
    when given, otherwise the mean over all low-fidelity samples ``qh_all``
    (whose first M rows are the paired ones).
    """
    qf_hi = np.atleast_2d(qf_hi)
    qh_hi = np.atleast_2d(qh_hi)
    if qf_hi.shape != qh_hi.shape:
        raise ValueError("paired high/low products must have the same shape")
    if exact_mean is not None:
        ref = np.asarray(exact_mean, dtype=float)
    else:
        if qh_all is None:
            raise ValueError("need either the low-fidelity ensemble or the exact mean")
        ref = np.atleast_2d(qh_all).mean(axis=0)
    return np.mean(qf_hi - beta * qh_hi, axis=0) + beta * ref


def acv_gradient(q: np.ndarray, f_hi, h_lo, beta: float | None = None) -> tuple[np.ndarray, float, float]:
    """Approximate-control-variate ensemble gradient.

    Args:
        q: (r M, n) score vectors; the first M rows belong to members with a
            high-fidelity cost.
        f_hi: (M,) high-fidelity costs.
        h_lo: (r M,) low-fidelity costs for every member.
        beta: control-variate weight; estimated from the paired members when None.

    Returns:
        The gradient, the beta used and the component-averaged correlation.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    f_hi = np.asarray(f_hi, dtype=float).ravel()
    h_lo = np.asarray(h_lo, dtype=float).ravel()
    m = f_hi.size
    if h_lo.size != q.shape[0] or m > h_lo.size or m == 0:
        raise ValueError("need M high-fidelity and rM >= M low-fidelity samples matching q")
    qf = f_hi[:, None] * q[:m]
    qh = h_lo[:, None] * q
    est_beta, corr = cv_statistics(qf, qh[:m])
    if beta is None:
        beta = est_beta
        if beta == 0.0 and m > 1:
            logger.warning("control-variate variance is numerically zero; using the plain estimator")
    return acv_combine(qf, qh[:m], qh, beta), float(beta), corr


@dataclass
class BudgetPolicy:
    """Adaptive split of the per-iteration budget between fidelities.

    Attributes:
        t_hf, t_lf: cost of one high/low-fidelity evaluation.
        t_iter: budget per iteration, in the same units.
        m_min: lower bound on high-fidelity samples.
    """

    t_hf: float
    t_lf: float
    t_iter: float
    m_min: int = 5

    def __post_init__(self):
        if not (self.t_hf > 0 and self.t_lf > 0 and self.t_iter > 0):
            raise ValueError("evaluation times and the iteration budget must be positive")
        if self.m_min < 2:
            raise ValueError("m_min must be at least 2 to estimate correlations")
        if self.m_min * (self.t_hf + self.t_lf) > self.t_iter * (1 + 1e-12):
            raise ValueError(
                f"budget {self.t_iter} cannot fit {self.m_min} paired evaluations "
                f"({self.m_min * (self.t_hf + self.t_lf)})"
            )

    def fits(self, m: int, r_cv: int) -> bool:
        return m * (self.t_hf + r_cv * self.t_lf) <= self.t_iter * (1 + 1e-12)


def continuous_ratio(c: float, t_hf: float, t_lf: float) -> float:
    c = min(max(c, 0.0), C_MAX)
    return c * math.sqrt(t_hf / (t_lf * (1.0 - c * c)))


def update_budget(policy: BudgetPolicy, c: float) -> tuple[int, int]:
    """Optimal (M, r_CV) for the correlation measured in the previous iteration.

    A ratio below 1 means the low-fidelity model is not worth extra samples;
    r_CV = 1 is returned then, which still pairs every member (so the next
    correlation can be measured) but leaves the estimator equal to the plain one.
    """
    if c >= 1.0:
        logger.warning("correlation %.6f clamped to %.3f", c, C_MAX)
    c = min(max(float(c), 0.0), C_MAX)
    t_hf, t_lf, t_iter = policy.t_hf, policy.t_lf, policy.t_iter
    denom = t_hf + c * t_lf * math.sqrt(t_hf / (t_lf * (1.0 - c * c)))
    m = max(int(math.floor(t_iter / denom)), policy.m_min)
    r = int(math.floor((t_iter - m * t_hf) / (m * t_lf)))
    if r < 1:
        r = 1
        m = max(int(math.floor(t_iter / (t_hf + t_lf))), policy.m_min)
    while not policy.fits(m, r) and r > 1:
        r -= 1
    return m, r


@dataclass(frozen=True)
class Incumbent:
    cost: float = math.inf
    design: Any = None
    iteration: int = -1

    @property
    def empty(self) -> bool:
        return self.design is None


def track_best(costs, designs, incumbent: Incumbent | None = None, iteration: int = -1) -> Incumbent:
    """Cumulative minimum over raw (un-exponentiated) costs; the incumbent wins ties."""
    best = incumbent or Incumbent()
    for cost, design in zip(costs, designs):
        if cost < best.cost:
            best = Incumbent(float(cost), design, iteration)
    return best


@dataclass
class EstimatorOutput:
    ensemble_cost: float
    ensemble_cost_exp: float
    gradient: np.ndarray
    beta_cv: float = 0.0
    corr: float = 0.0
    m: int = 0
    r_cv: int = 0
    extra: dict = field(default_factory=dict)


def estimate(
    dist: SamplingDistribution,
    sigma_r: float,
    deltas: np.ndarray,
    f_hi,
    h_lo=None,
    beta_exp: float | None = 20.0,
) -> EstimatorOutput:
    """Full estimator for one iteration.

    ``deltas`` holds all sampled perturbations; the first ``len(f_hi)`` carry a
    high-fidelity cost. With ``h_lo`` (one value per delta) the ACV gradient is
    used. Both fidelities share the same exponentiation shift.
    """
    f_hi = np.asarray(f_hi, dtype=float)
    m = f_hi.size
    q = score_vector(deltas, dist, sigma_r)
    raw_cost = ensemble_cost(f_hi)
    if h_lo is None:
        if beta_exp is None:
            fe = f_hi
        else:
            fe = exponentiate(f_hi, beta_exp, float(np.min(f_hi)))
        grad = ensemble_gradient(q[:m], fe)
        return EstimatorOutput(raw_cost, ensemble_cost(fe), grad, 0.0, 0.0, m, 0)
    h_lo = np.asarray(h_lo, dtype=float)
    if beta_exp is None:
        fe, he = f_hi, h_lo
    else:
        ref = float(min(np.min(f_hi), np.min(h_lo)))
        fe = exponentiate(f_hi, beta_exp, ref)
        he = exponentiate(h_lo, beta_exp, ref)
    grad, beta, corr = acv_gradient(q, fe, he)
    r_cv = h_lo.size // max(m, 1)
    return EstimatorOutput(raw_cost, ensemble_cost(fe), grad, beta, corr, m, r_cv)

