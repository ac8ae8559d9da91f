"""Comparison optimizers: three-field L-BFGS-B (TF), always-feasible STE and PSO."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .dispatch import Dispatcher, dispatch_costs
from .estimator import Incumbent, track_best
from .fdg import FeasibleDesign, check_feasibility, generate
from .field_chain import FieldChain, bound_map, inverse_bound_map
from .optimizer import AdamState, OptimizationTrace, adam_update
from .problems import Problem, UnsupportedProblemError

logger = logging.getLogger(__name__)


@dataclass
class TfConfig:
    beta_schedule: tuple[float, ...] = (8.0, 16.0, 32.0, 64.0, 128.0)
    iterations_per_beta: int = 100
    maxcor: int = 10
    init_scale: float = 0.5
    seed: int = 0

    def __post_init__(self):
        b = list(self.beta_schedule)
        if not b or any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("beta_schedule must be strictly increasing")
        if self.iterations_per_beta < 1:
            raise ValueError("iterations_per_beta must be positive")


@dataclass
class SteConfig:
    beta1: float = 0.667
    beta2: float = 0.9
    eta0: float = 0.001
    eps_adam: float = 1e-8
    iterations: int = 200
    beta_proj: float = 8.0
    init_scale: float = 0.5
    seed: int = 0


@dataclass
class PsoConfig:
    swarm_size: int = 10
    iterations: int = 200
    cognitive: float = 1.49
    social: float = 1.49
    inertia0: float = 0.9
    inertia_decay: float = 0.95
    stall_window: int = 5
    craziness_prob: float = 0.22
    craziness_fraction: float = 0.10
    v_max: float = 0.5
    beta_proj: float = 8.0
    seed: int = 0

    def __post_init__(self):
        for name in ("craziness_prob", "craziness_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.swarm_size < 1 or self.iterations < 1:
            raise ValueError("swarm_size and iterations must be positive")


def initial_latent(n: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-scale, scale, n)


def run_tf(config: TfConfig, problem: Problem, x0: np.ndarray | None = None) -> OptimizationTrace:
    """Grayscale three-field optimization with a continuation on the projection strength.

    The latent densities are box-bounded in [-1, 1]; each projection stage is a
    separate L-BFGS-B call capped at ``iterations_per_beta`` iterations. The
    final density is binarized at 0 and the binary cost is reported, flagged
    with its (not guaranteed) feasibility.
    """
    if not problem.supports_gradient:
        raise UnsupportedProblemError("TF needs cost gradients")
    grid = problem.grid
    rng = np.random.default_rng(config.seed)
    x = initial_latent(grid.n_params, config.init_scale, rng) if x0 is None else np.asarray(x0, dtype=float).copy()
    trace = OptimizationTrace("tf")
    evals = 0
    it = 0
    for stage, beta in enumerate(config.beta_schedule):
        chain = FieldChain.for_three_field(grid, beta)

        last = {}

        def fun(v, billed=True):
            nonlocal evals
            state = chain.forward_latent(v)
            density = 0.5 * (state.reward.rho_r + 1.0)
            cost, g = problem.cost_and_grad(density)
            if billed:
                evals += 1
                last["x"], last["cost"] = v.copy(), cost
            return cost, chain.backward_latent(state, 0.5 * g)

        def record(v):
            nonlocal it
            it += 1
            if "x" in last and np.array_equal(last["x"], v):
                cost = last["cost"]
            else:
                cost = fun(v, billed=False)[0]
            trace.records.append({"iteration": it, "ensemble_cost": cost, "best_cost": cost,
                                  "mu_L_norm": float(np.linalg.norm(v)), "eta": beta,
                                  "M": 1, "r_cv": 0, "corr": 0.0, "stage": stage})

        res = optimize.minimize(fun, x, jac=True, method="L-BFGS-B", bounds=[(-1.0, 1.0)] * grid.n_params,
                                callback=record,
                                options={"maxiter": config.iterations_per_beta, "maxcor": config.maxcor})
        x = res.x
    chain = FieldChain.for_three_field(grid, config.beta_schedule[-1])
    rho_r = chain.forward_latent(x).reward.rho_r
    gray = 0.5 * (rho_r + 1.0)
    binary = (rho_r > 0).astype(np.int8)
    final_cost = problem.cost(binary, "hi")
    gray_cost = problem.cost(gray, "hi")
    trace.evaluations = evals * problem.gradient_cost_factor * problem.t_hf
    trace.best = Incumbent(float(final_cost), FeasibleDesign(binary), it)
    trace.extra.update(latent=x, gray_cost=gray_cost, binary_cost=final_cost,
                       feasible=check_feasibility(binary, grid.brush()))
    return trace


def run_af_ste(config: SteConfig, problem: Problem, zeta0: np.ndarray | None = None,
               check_designs: bool = False) -> OptimizationTrace:
    """Always-feasible gradient descent with a straight-through FDG gradient."""
    if not problem.supports_gradient:
        raise UnsupportedProblemError("AF-STE needs cost gradients")
    grid = problem.grid
    brush = grid.brush()
    chain = FieldChain.for_fdg(grid, config.beta_proj)
    rng = np.random.default_rng(config.seed)
    if zeta0 is None:
        zeta = inverse_bound_map(initial_latent(grid.n_params, config.init_scale, rng))
    else:
        zeta = np.asarray(zeta0, dtype=float).copy()
    adam = AdamState(grid.n_params, config.beta1, config.beta2, config.eta0, config.eps_adam)
    trace = OptimizationTrace("af_ste")
    for it in range(1, config.iterations + 1):
        state = chain.forward(zeta)
        design = generate(state.reward.rho_r, grid, brush)
        if check_designs and not check_feasibility(design, brush):  # pragma: no cover - FDG invariant
            raise AssertionError("AF-STE evaluated an infeasible design")
        cost, g_f = problem.cost_and_grad(design.rho_f.astype(float))
        trace.evaluations += problem.gradient_cost_factor * problem.t_hf
        # straight-through: d rho_F / d rho_R treated as identity
        grad = chain.backward(state, g_f)
        zeta = adam_update(adam, zeta, grad, config.eta0)
        trace.best = track_best([cost], [design], trace.best, it)
        trace.records.append({"iteration": it, "ensemble_cost": cost, "best_cost": trace.best.cost,
                              "mu_L_norm": float(np.linalg.norm(bound_map(zeta)[0])), "eta": config.eta0,
                              "M": 1, "r_cv": 0, "corr": 0.0})
    trace.extra["zeta"] = zeta
    return trace


def pso_minimize(objective: Callable[[np.ndarray], np.ndarray], dim: int, config: PsoConfig,
                 rng: np.random.Generator, lower: float = -1.0, upper: float = 1.0,
                 callback: Callable[[int, float], None] | None = None):
    """Global-best PSO with stall-triggered inertia decay and velocity craziness.

    ``objective`` maps a (swarm, dim) position array to a (swarm,) cost array.
    Returns (best position, best cost, per-iteration global best list).
    """
    s = config.swarm_size
    x = rng.uniform(lower, upper, (s, dim))
    v = np.zeros((s, dim))
    cost = np.asarray(objective(x), dtype=float)
    pbest, pcost = x.copy(), cost.copy()
    g = int(np.argmin(pcost))
    gbest, gcost = pbest[g].copy(), float(pcost[g])
    history = [gcost]
    if callback:
        callback(1, gcost)
    inertia = config.inertia0
    stall = 0
    n_crazy = max(1, int(math.ceil(config.craziness_fraction * s))) if config.craziness_fraction > 0 else 0
    for it in range(2, config.iterations + 1):
        r1 = rng.random((s, dim))
        r2 = rng.random((s, dim))
        v = inertia * v + config.cognitive * r1 * (pbest - x) + config.social * r2 * (gbest - x)
        if n_crazy and rng.random() < config.craziness_prob:
            pick = rng.choice(s, size=n_crazy, replace=False)
            v[pick] = rng.uniform(-config.v_max, config.v_max, (n_crazy, dim))
        v = np.clip(v, -config.v_max, config.v_max)
        x = np.clip(x + v, lower, upper)
        cost = np.asarray(objective(x), dtype=float)
        better = cost < pcost
        pbest[better] = x[better]
        pcost[better] = cost[better]
        g = int(np.argmin(pcost))
        if pcost[g] < gcost:
            gbest, gcost = pbest[g].copy(), float(pcost[g])
            stall = 0
        else:
            stall += 1
            if stall >= config.stall_window:
                inertia *= config.inertia_decay
        history.append(gcost)
        if callback:
            callback(it, gcost)
    return gbest, gcost, history


def run_af_pso(config: PsoConfig, problem: Problem, dispatcher: Dispatcher | None = None,
               check_designs: bool = False) -> OptimizationTrace:
    """PSO over latent densities; every particle is evaluated on its feasible design."""
    grid = problem.grid
    brush = grid.brush()
    chain = FieldChain.for_fdg(grid, config.beta_proj)
    rng = np.random.default_rng(config.seed)
    own = dispatcher is None
    dispatcher = dispatcher or Dispatcher(1)
    trace = OptimizationTrace("af_pso")
    it_box = [0]

    def objective(xs):
        it_box[0] += 1
        designs = dispatcher.map(lambda x: generate(chain.forward_latent(x).reward.rho_r, grid, brush), list(xs))
        if check_designs and not all(check_feasibility(d, brush) for d in designs):  # pragma: no cover
            raise AssertionError("AF-PSO evaluated an infeasible design")
        costs = dispatch_costs(problem, designs, ["hi"] * len(designs), dispatcher)
        costs = np.where(np.isfinite(costs), costs, np.inf)
        trace.evaluations += len(designs) * problem.t_hf
        trace.best = track_best(costs, designs, trace.best, it_box[0])
        trace.records.append({"iteration": it_box[0], "ensemble_cost": float(np.mean(costs)),
                              "best_cost": trace.best.cost, "mu_L_norm": float(np.linalg.norm(xs.mean(axis=0))),
                              "eta": 0.0, "M": len(designs), "r_cv": 0, "corr": 0.0})
        return costs

    try:
        gbest, _, _ = pso_minimize(objective, grid.n_params, config, rng)
    finally:
        if own:
            dispatcher.close()
    trace.extra["gbest"] = gbest
    return trace
