"""Analytic multi-well test function, its noisy control variate and the benchmark harness."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .field_chain import FieldChain
from .grid import DesignGrid, Symmetry
from .problems import Problem

WELL_DEPTH = 3.0
WIDTH_NUMERATOR = 15.0


@dataclass(frozen=True)
class TestFunctionSpec:
    __test__ = False  # not a pytest class

    rows: int = 35
    cols: int = 70
    min_feature: int = 7
    symmetry: str = "d1-cols"
    num_wells: int = 10
    depth: float = WELL_DEPTH
    width_numerator: float = WIDTH_NUMERATOR
    seed: int = 0
    noise_scale: float = 0.001
    noise_seed: int = 0

    @property
    def grid(self) -> DesignGrid:
        return DesignGrid(self.rows, self.cols, self.min_feature, Symmetry.parse(self.symmetry))

    @classmethod
    def desk(cls, **kw) -> "TestFunctionSpec":
        kw.setdefault("rows", 18)
        kw.setdefault("cols", 36)
        kw.setdefault("min_feature", 4)
        return cls(**kw)


def make_wells(spec: TestFunctionSpec, seed: int | None = None) -> np.ndarray:
    """Random smooth grayscale minima, shape (num_wells, rows, cols), values in (0, 1).

    Uniform noise on the independent half -> mirror expansion -> Gaussian blur
    (sigma = sqrt(2) L_min / 4) -> tanh projection (beta = 8) -> [0, 1].
    """
    grid = spec.grid
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    chain = FieldChain.for_fdg(grid, beta=8.0)
    wells = []
    for _ in range(spec.num_wells):
        half = rng.uniform(-1.0, 1.0, grid.n_params)
        wells.append(0.5 * (chain.forward_latent(half).reward.rho_r + 1.0))
    return np.stack(wells)


def design_noise(design_bits: np.ndarray, noise_seed: int) -> float:
    """Standard normal draw fixed by the design content."""
    bits = np.ascontiguousarray(np.asarray(design_bits).astype(np.uint8))
    h = hashlib.sha256()
    h.update(np.asarray(bits.shape, dtype="<i8").tobytes())
    h.update(np.packbits(bits.ravel()).tobytes())
    h.update(int(noise_seed).to_bytes(8, "little", signed=True))
    key = int.from_bytes(h.digest()[:16], "little")
    rng = np.random.Generator(np.random.Philox(key=[key & (2**64 - 1), key >> 64]))
    return float(rng.standard_normal())


class TestFunction(Problem):
    """``-sum_i depth * exp(-(15/N) ||w_i - rho||^2)`` over the independent half.

    The high fidelity is the smooth function; the low fidelity adds a fixed,
    design-dependent Gaussian noise of scale ``noise_scale``.
    """

    __test__ = False  # not a pytest class
    supports_gradient = True
    supports_low_fidelity = True

    def __init__(self, spec: TestFunctionSpec | None = None, wells: np.ndarray | None = None,
                 t_hf: float = 1.0, t_lf: float = 1.0 / 33.0):
        self.spec = spec or TestFunctionSpec()
        super().__init__(self.spec.grid, t_hf=t_hf, t_lf=t_lf)
        self.wells = make_wells(self.spec) if wells is None else np.asarray(wells, dtype=float)
        if self.wells.shape[1:] != self.grid.shape:
            raise ValueError("well fields do not match the grid")
        self._wells_half = np.stack([self.grid.restrict(w) for w in self.wells])
        self.width = self.spec.width_numerator / self.grid.n_params

    def terms(self, density) -> np.ndarray:
        rho = self.grid.restrict(self.check_shape(density))
        d2 = np.sum((self._wells_half - rho) ** 2, axis=1)
        return -self.spec.depth * np.exp(-self.width * d2)

    def f_test(self, design) -> float:
        return float(np.sum(self.terms(design)))

    def f_test_cv(self, design) -> float:
        rho = self.check_shape(design)
        return self.f_test(rho) + self.spec.noise_scale * design_noise(rho > 0.5, self.spec.noise_seed)

    def cost(self, design, fidelity: str = "hi") -> float:
        if fidelity == "lo":
            return self.f_test_cv(design)
        return self.f_test(design)

    def cost_and_grad(self, density):
        rho_full = self.check_shape(density)
        rho = self.grid.restrict(rho_full)
        diff = rho - self._wells_half
        e = self.spec.depth * np.exp(-self.width * np.sum(diff**2, axis=1))
        cost = -float(np.sum(e))
        grad_half = 2.0 * self.width * (e @ diff)
        grad = np.zeros(self.grid.shape)
        r, c = self.grid.half_shape
        grad[:r, :c] = grad_half.reshape(r, c)
        return cost, grad


def f_test(design, problem: TestFunction) -> float:
    return problem.f_test(design)


def f_test_cv(design, problem: TestFunction) -> float:
    return problem.f_test_cv(design)


ALGORITHMS = ("gegd", "tf", "af_ste", "af_pso")
ABLATIONS = ("isotropic", "rbf", "rbf_cv")


class BudgetMismatchError(ValueError):
    pass


@dataclass
class BenchmarkSettings:
    """Budget-matched settings for one benchmark.

    GEGD and AF-PSO spend ``ensemble`` high-fidelity evaluations per iteration;
    TF and AF-STE get ``restarts`` independent runs whose iterations cost
    ``gradient_factor`` evaluations each.
    """

    iterations: int = 200
    ensemble: int = 10
    restarts: int = 7
    gradient_factor: float = 1.5
    tolerance: float = 0.05
    gegd: dict = field(default_factory=dict)
    tf: dict = field(default_factory=dict)
    af_ste: dict = field(default_factory=dict)
    af_pso: dict = field(default_factory=dict)

    def nominal_budget(self, algorithm: str) -> float:
        if algorithm in ("gegd", "af_pso"):
            return float(self.iterations * self.ensemble)
        if algorithm in ("tf", "af_ste"):
            return self.restarts * self.iterations * self.gradient_factor
        raise ValueError(f"unknown algorithm {algorithm!r}")

    def check(self, algorithms) -> None:
        ref = self.nominal_budget("gegd")
        for alg in algorithms:
            b = self.nominal_budget(alg)
            if abs(b - ref) > self.tolerance * ref + 1e-9:
                raise BudgetMismatchError(
                    f"{alg} budget {b:g} differs from {ref:g} by more than {self.tolerance:.0%}"
                )


@dataclass
class RepResult:
    algorithm: str
    rep: int
    best_cost: float
    wall_time: float
    hf_equiv_cost: float
    traces: list = field(default_factory=list)


def _seed_for(master_seed: int, algorithm: str, rep: int, restart: int = 0) -> int:
    tag = sum(ord(ch) * 131**k for k, ch in enumerate(algorithm)) % (2**31)
    ss = np.random.SeedSequence([int(master_seed), tag, int(rep), int(restart)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def run_repetition(algorithm: str, rep: int, problem: Problem, settings: BenchmarkSettings,
                   master_seed: int = 0, dispatcher=None, dist=None) -> RepResult:
    """One budget-matched repetition of one algorithm."""
    from .baselines import PsoConfig, SteConfig, TfConfig, run_af_pso, run_af_ste, run_tf
    from .optimizer import GegdConfig, run

    start = time.perf_counter()
    traces = []
    if algorithm == "gegd":
        cfg = GegdConfig(**{"max_iterations": settings.iterations, "m": settings.ensemble, **settings.gegd,
                            "seed": _seed_for(master_seed, algorithm, rep)})
        traces.append(run(cfg, problem, dispatcher=dispatcher, dist=dist))
    elif algorithm == "af_pso":
        cfg = PsoConfig(**{"iterations": settings.iterations, "swarm_size": settings.ensemble, **settings.af_pso,
                           "seed": _seed_for(master_seed, algorithm, rep)})
        traces.append(run_af_pso(cfg, problem, dispatcher=dispatcher))
    elif algorithm == "tf":
        kw = dict(settings.tf)
        schedule = tuple(kw.pop("beta_schedule", (8.0, 16.0, 32.0, 64.0, 128.0)))
        per_beta = kw.pop("iterations_per_beta", max(1, settings.iterations // len(schedule)))
        for k in range(settings.restarts):
            cfg = TfConfig(beta_schedule=schedule, iterations_per_beta=per_beta, **kw,
                           seed=_seed_for(master_seed, algorithm, rep, k))
            traces.append(run_tf(cfg, problem))
    elif algorithm == "af_ste":
        for k in range(settings.restarts):
            cfg = SteConfig(**{"iterations": settings.iterations, **settings.af_ste,
                               "seed": _seed_for(master_seed, algorithm, rep, k)})
            traces.append(run_af_ste(cfg, problem))
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    best = min(t.best_cost for t in traces)
    spent = sum(t.evaluations for t in traces)
    return RepResult(algorithm, rep, float(best), time.perf_counter() - start, float(spent), traces)


@dataclass
class BenchmarkResult:
    results: list[RepResult]

    def costs(self, algorithm: str) -> np.ndarray:
        return np.array([r.best_cost for r in self.results if r.algorithm == algorithm])

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for alg in dict.fromkeys(r.algorithm for r in self.results):
            c = self.costs(alg)
            q = np.quantile(c, [0.0, 0.25, 0.5, 0.75, 1.0])
            out[alg] = dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))
        return out


def run_benchmark(problem: Problem, algorithms=ALGORITHMS, repetitions: int = 20,
                  settings: BenchmarkSettings | None = None, master_seed: int = 0,
                  dispatcher=None, progress=None) -> BenchmarkResult:
    """Budget-matched comparison; deterministic for a fixed master seed."""
    from .sampling import distribution_for_grid

    settings = settings or BenchmarkSettings()
    settings.check(algorithms)
    dist = None
    if "gegd" in algorithms:
        g = settings.gegd
        dist = distribution_for_grid(problem.grid, g.get("covariance", "rbf"), g.get("kappa", 1e6))
    results = []
    for alg in algorithms:
        for rep in range(repetitions):
            res = run_repetition(alg, rep, problem, settings, master_seed, dispatcher, dist)
            results.append(res)
            if progress:
                progress(res)
    return BenchmarkResult(results)


def ablation_settings(mode: str, t_lf_ratio: float = 33.0) -> dict:
    """GEGD overrides for the sampling-efficiency ablation."""
    if mode == "isotropic":
        return {"covariance": "isotropic", "acv": False}
    if mode == "rbf":
        return {"covariance": "rbf", "acv": False}
    if mode == "rbf_cv":
        return {"covariance": "rbf", "acv": True, "t_hf": 1.0, "t_lf": 1.0 / t_lf_ratio}
    raise ValueError(f"unknown ablation mode {mode!r}")


def converged_cost(trace, window: int = 10) -> float:
    """Mean raw ensemble cost over the last ``window`` iterations."""
    return float(np.mean(trace.column("ensemble_cost")[-window:]))


def run_ablation(problem: Problem, repetitions: int = 10, iterations: int = 200, master_seed: int = 0,
                 modes=ABLATIONS, window: int = 10, dispatcher=None, progress=None) -> dict[str, np.ndarray]:
    """Converged ensemble cost per repetition for each ablation mode."""
    from .optimizer import GegdConfig, run
    from .sampling import distribution_for_grid

    out = {}
    for mode in modes:
        over = ablation_settings(mode)
        dist = distribution_for_grid(problem.grid, over["covariance"])
        vals = []
        for rep in range(repetitions):
            cfg = GegdConfig(max_iterations=iterations, m=10, seed=_seed_for(master_seed, "ablation", rep), **over)
            tr = run(cfg, problem, dispatcher=dispatcher, dist=dist)
            vals.append(converged_cost(tr, window))
            if progress:
                progress(mode, rep, vals[-1])
        out[mode] = np.array(vals)
    return out
