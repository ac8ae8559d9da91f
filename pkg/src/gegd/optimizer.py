"""Gaussian ensemble gradient descent.

Each iteration: dummy variables -> mean reward field; draw perturbations;
turn every perturbed reward into a feasible design; evaluate costs; estimate
the smoothed-cost gradient from the same samples; pull it back to the dummy
variables and take an ADAM step with a radially growing step size.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dispatch import Dispatcher, dispatch_costs
from .estimator import BudgetPolicy, Incumbent, estimate, track_best, update_budget
from .fdg import FeasibleDesign, generate
from .field_chain import FieldChain, bound_map
from .problems import Problem
from .sampling import SamplingDistribution, distribution_for_grid, draw_ensemble

logger = logging.getLogger(__name__)

TRACE_FIELDS = ("iteration", "ensemble_cost", "best_cost", "mu_L_norm", "eta", "M", "r_cv", "corr")


class NumericalAbort(RuntimeError):
    """Raised when the optimizer meets non-finite numbers it cannot recover from."""


@dataclass
class AdamState:
    n: int
    beta1: float = 0.9
    beta2: float = 0.999
    eta0: float = 1e-4
    eps_adam: float = 1e-8
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    iteration: int = 0

    def __post_init__(self):
        self.m = np.zeros(self.n)
        self.v = np.zeros(self.n)


def adam_update(state: AdamState, params: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """One bias-corrected ADAM step; ``state`` is updated in place."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != (state.n,):
        raise ValueError(f"gradient has shape {grad.shape}, expected ({state.n},)")
    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad))
        raise NumericalAbort(f"non-finite gradient at {bad.size} entries (first: {bad[:5].tolist()})")
    state.iteration += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.iteration)
    v_hat = state.v / (1.0 - state.beta2**state.iteration)
    return params - eta * m_hat / (np.sqrt(v_hat) + state.eps_adam)


def step_size(iteration: int, norm_history: dict[int, float], eta0: float) -> float:
    """Radial schedule ``eta0 * (|mu_L^(i-1)| / |mu_L^(2)|)^(1/3)`` from iteration 3 on.

    ``norm_history`` maps an iteration number to the latent-mean norm after that
    iteration (key 0 is the starting point).
    """
    if iteration < 1:
        raise ValueError("iterations are numbered from 1")
    if iteration <= 2:
        return eta0
    ref = norm_history.get(2, 0.0)
    if ref <= 0.0:
        logger.warning("latent mean norm at iteration 2 is zero; using the base step size")
        return eta0
    return eta0 * (norm_history[iteration - 1] / ref) ** (1.0 / 3.0)


@dataclass
class GegdConfig:
    sigma_r: float = 0.005
    beta_exp: float | None = 20.0
    m: int = 10
    max_iterations: int = 300
    seed: int = 0
    covariance: str = "rbf"
    kappa: float = 1e6
    acv: bool = False
    t_hf: float | None = None
    t_lf: float | None = None
    t_iter: float | None = None
    m_min: int = 5
    eta0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    beta_proj: float = 8.0
    checkpoints: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.sigma_r > 0:
            raise ValueError("sigma_r must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.m < 1:
            raise ValueError("ensemble size must be at least 1")
        if self.beta_exp is not None and not self.beta_exp > 0:
            raise ValueError("beta_exp must be positive (or None to disable exponentiation)")
        if self.covariance not in ("rbf", "isotropic"):
            raise ValueError(f"unknown covariance mode {self.covariance!r}")


@dataclass
class OptimizationTrace:
    algorithm: str
    records: list[dict] = field(default_factory=list)
    best: Incumbent = field(default_factory=Incumbent)
    checkpoints: dict[int, FeasibleDesign] = field(default_factory=dict)
    evaluations: float = 0.0  # high-fidelity-equivalent cost spent
    extra: dict = field(default_factory=dict)

    @property
    def best_cost(self) -> float:
        return self.best.cost

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)


class DesignSampler:
    """Perturbed rewards -> symmetrized -> feasible designs, fanned out over a dispatcher."""

    def __init__(self, grid, dispatcher: Dispatcher):
        self.grid = grid
        self.brush = grid.brush()
        self.dispatcher = dispatcher

    def designs(self, mean_reward: np.ndarray, deltas: np.ndarray) -> list[FeasibleDesign]:
        grid = self.grid

        def one(delta):
            reward = grid.symmetrize(mean_reward + delta.reshape(grid.shape))
            return generate(reward, grid, self.brush)

        return self.dispatcher.map(one, list(deltas))


def run(config: GegdConfig, problem: Problem, dispatcher: Dispatcher | None = None,
        dist: SamplingDistribution | None = None,
        callback: Callable[[dict], None] | None = None) -> OptimizationTrace:
    """Run GEGD from the origin of the latent space."""
    grid = problem.grid
    own = dispatcher is None
    dispatcher = dispatcher or Dispatcher(1)
    chain = FieldChain.for_fdg(grid, beta=config.beta_proj)
    if dist is None:
        dist = distribution_for_grid(grid, config.covariance, config.kappa)
    if dist.n != grid.size:
        raise ValueError("sampling distribution does not match the grid")
    sampler = DesignSampler(grid, dispatcher)

    policy = None
    if config.acv:
        if not problem.supports_low_fidelity:
            raise ValueError("control variates need a problem with a low-fidelity model")
        t_hf = config.t_hf if config.t_hf is not None else problem.t_hf
        t_lf = config.t_lf if config.t_lf is not None else problem.t_lf
        t_iter = config.t_iter if config.t_iter is not None else config.m * t_hf
        policy = BudgetPolicy(t_hf, t_lf, t_iter, config.m_min)

    zeta = np.zeros(grid.n_params)
    adam = AdamState(grid.n_params, config.beta1, config.beta2, config.eta0, config.eps_adam)
    norms = {0: 0.0}
    corr_prev = 0.0
    trace = OptimizationTrace("gegd")
    try:
        for it in range(1, config.max_iterations + 1):
            state = chain.forward(zeta)
            mean_reward = state.reward.rho_r
            if policy is not None:
                m, r_cv = update_budget(policy, corr_prev)
                n_draw = m * r_cv
            else:
                m, r_cv, n_draw = config.m, 0, config.m
            ens = draw_ensemble(dist, config.sigma_r, n_draw, config.seed, it)
            designs = sampler.designs(mean_reward, ens.deltas)
            fidelities = ["hi"] * m
            f_hi = dispatch_costs(problem, designs[:m], fidelities, dispatcher)
            h_lo = None
            if policy is not None:
                h_lo = dispatch_costs(problem, designs, ["lo"] * n_draw, dispatcher)
                trace.evaluations += m * policy.t_hf + n_draw * policy.t_lf
            else:
                trace.evaluations += m * problem.t_hf

            keep = np.isfinite(f_hi)
            if h_lo is not None:
                keep &= np.isfinite(h_lo[:m])
                keep_lo = np.isfinite(h_lo)
                keep_lo[:m] = keep
            if not np.any(keep):
                raise NumericalAbort(f"every ensemble member failed in iteration {it}")
            if not np.all(keep):
                logger.warning("iteration %d: dropping %d failed members", it, int((~keep).sum()))
            deltas = ens.deltas
            if h_lo is None:
                idx = np.flatnonzero(keep)
                est = estimate(dist, config.sigma_r, deltas[idx], f_hi[idx], None, config.beta_exp)
            else:
                idx = np.concatenate([np.flatnonzero(keep), m + np.flatnonzero(keep_lo[m:])])
                est = estimate(dist, config.sigma_r, deltas[idx], f_hi[keep], h_lo[idx], config.beta_exp)
                corr_prev = est.corr

            grad_zeta = chain.backward(state, est.gradient)
            eta = step_size(it, norms, config.eta0)
            zeta = adam_update(adam, zeta, grad_zeta, eta)
            mu_l, _ = bound_map(zeta)
            norms[it] = float(np.linalg.norm(mu_l))

            good = [designs[k] for k in np.flatnonzero(keep)]
            trace.best = track_best(f_hi[keep], good, trace.best, it)
            rec = {
                "iteration": it,
                "ensemble_cost": est.ensemble_cost,
                "best_cost": trace.best.cost,
                "mu_L_norm": norms[it],
                "eta": eta,
                "M": int(keep.sum()),
                "r_cv": r_cv,
                "corr": est.corr,
                "beta_cv": est.beta_cv,
                "ensemble_cost_exp": est.ensemble_cost_exp,
            }
            trace.records.append(rec)
            if it in config.checkpoints:
                trace.checkpoints[it] = trace.best.design
            if callback is not None:
                callback(rec)
    finally:
        if own:
            dispatcher.close()
    trace.extra["zeta"] = zeta
    trace.extra["mu_L"] = bound_map(zeta)[0]
    return trace
