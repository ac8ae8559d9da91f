"""Command-line entry point: run, bench, feascheck, covcache.

Exit codes: 0 success, 1 infeasible design (feascheck only), 2 invalid
configuration, 3 cost backend failure, 4 numerical abort. Failures print a
one-line JSON object ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import run_af_pso, run_af_ste, run_tf
from .bench import (
    BenchmarkSettings,
    BudgetMismatchError,
    TestFunction,
    TestFunctionSpec,
    run_ablation,
    run_benchmark,
)
from .config import ConfigError, RunConfig, load_config
from .dispatch import Dispatcher, ExternalProblem
from .fdg import check_feasibility
from .grid import Brush
from .io import read_design, write_pgm, write_summary, write_trace
from .optimizer import NumericalAbort, run as run_gegd
from .problems import CostEvaluationError, UnsupportedProblemError
from .sampling import CovarianceError, build_rbf_covariance, cache_path, write_covariance_cache

logger = logging.getLogger("gegd")

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_BACKEND, EXIT_NUMERICAL = 0, 1, 2, 3, 4


def build_problem(cfg: RunConfig):
    p = cfg.problem
    if p.kind == "test_function":
        spec = TestFunctionSpec(rows=p.rows, cols=p.cols, min_feature=p.min_feature, symmetry=p.symmetry,
                                num_wells=p.num_wells, seed=p.wells_seed, noise_scale=p.noise_scale,
                                noise_seed=p.noise_seed)
        return TestFunction(spec, t_hf=p.t_hf, t_lf=p.t_lf)
    try:
        return ExternalProblem(cfg.grid, p.command, processes=p.processes, t_hf=p.t_hf, t_lf=p.t_lf)
    except OSError as exc:
        raise CostEvaluationError(f"cannot start external cost process: {exc}") from exc


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be positive")
        cfg.workers = args.workers
    if getattr(args, "out", None) is not None:
        cfg.output = args.out
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    problem = build_problem(cfg)
    try:
        with Dispatcher(cfg.workers) as dispatcher:
            if cfg.algorithm == "gegd":
                trace = run_gegd(cfg.gegd_config(), problem, dispatcher=dispatcher)
            elif cfg.algorithm == "tf":
                trace = run_tf(cfg.tf_config(), problem)
            elif cfg.algorithm == "af_ste":
                trace = run_af_ste(cfg.ste_config(), problem)
            else:
                trace = run_af_pso(cfg.pso_config(), problem, dispatcher=dispatcher)
    finally:
        problem.close()
    write_trace(out / "trace.csv", trace, tagged=cfg.algorithm != "gegd")
    for it, design in sorted(trace.checkpoints.items()):
        if design is not None:
            write_pgm(out / f"best_iter{it:05d}.pgm", design)
    if trace.best.design is not None:
        write_pgm(out / "best.pgm", trace.best.design)
    summary = {
        "algorithm": cfg.algorithm,
        "seed": cfg.seed,
        "best_cost": trace.best_cost,
        "best_iteration": trace.best.iteration,
        "iterations": len(trace.records),
        "hf_equiv_cost": trace.evaluations,
    }
    if "feasible" in trace.extra:
        summary["feasible"] = bool(trace.extra["feasible"])
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    b = cfg.bench
    problem = build_problem(cfg)
    try:
        with Dispatcher(cfg.workers) as dispatcher:
            if b.mode == "ablation":
                res = run_ablation(problem, repetitions=b.repetitions, iterations=b.iterations,
                                   master_seed=cfg.seed, window=b.window, dispatcher=dispatcher)
                lines = ["mode,rep,converged_cost"]
                for mode, vals in res.items():
                    lines += [f"{mode},{k},{float(v)!r}" for k, v in enumerate(vals)]
                (out / "ablation.csv").write_text("\n".join(lines) + "\n")
                medians = {mode: float(np.median(v)) for mode, v in res.items()}
                print(json.dumps({"median_converged_cost": medians}))
                return EXIT_OK
            settings = BenchmarkSettings(iterations=b.iterations, ensemble=b.ensemble, restarts=b.restarts,
                                         tolerance=b.tolerance, gegd=dict(cfg.gegd), tf=dict(cfg.tf),
                                         af_ste=dict(cfg.af_ste), af_pso=dict(cfg.af_pso))
            result = run_benchmark(problem, algorithms=tuple(b.algorithms), repetitions=b.repetitions,
                                   settings=settings, master_seed=cfg.seed, dispatcher=dispatcher,
                                   progress=lambda r: logger.info("%s rep %d: %.6g", r.algorithm, r.rep, r.best_cost))
    finally:
        problem.close()
    write_summary(out / "summary.csv", result.results)
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for r in result.results:
        for k, tr in enumerate(r.traces):
            suffix = f"_run{k}" if len(r.traces) > 1 else ""
            write_trace(traces / f"{r.algorithm}_rep{r.rep:02d}{suffix}.csv", tr, tagged=True)
    stats = result.summary()
    lines = ["algorithm,min,q1,median,q3,max"]
    lines += [",".join([alg] + [repr(v[k]) for k in ("min", "q1", "median", "q3", "max")]) for alg, v in stats.items()]
    (out / "quartiles.csv").write_text("\n".join(lines) + "\n")
    print(json.dumps({"median_best_cost": {a: v["median"] for a, v in stats.items()}}))
    return EXIT_OK


def cmd_feascheck(args) -> int:
    design = read_design(args.design)
    if args.min_feature is not None:
        diameter = args.min_feature
    elif args.config is not None:
        diameter = load_config(args.config).problem.min_feature
    else:
        raise ConfigError("feascheck needs --min-feature or --config")
    try:
        brush = Brush(diameter)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ok = check_feasibility(design, brush)
    print(json.dumps({"design": str(args.design), "shape": list(design.shape),
                      "min_feature": diameter, "feasible": bool(ok)}))
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_covcache(cfg: RunConfig, kappa: float) -> int:
    out = _out_dir(cfg)
    grid = cfg.grid
    path = cache_path(out, grid, kappa)
    dist = build_rbf_covariance(grid.pixel_coords() / grid.pixel_pitch, grid.min_feature, kappa)
    write_covariance_cache(path, grid.rows, grid.cols, dist)
    print(json.dumps({"path": str(path), "rows": grid.rows, "cols": grid.cols,
                      "sigma_rbf": dist.sigma_rbf, "epsilon": dist.epsilon, "kappa": kappa}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gegd", description="Gaussian ensemble gradient descent toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--workers", type=int, help="cost-evaluation worker threads")
        p.add_argument("--out", help="output directory")

    common(sub.add_parser("run", help="run one optimization"))
    common(sub.add_parser("bench", help="run the budget-matched benchmark or the ablation"))
    fc = sub.add_parser("feascheck", help="check a design file for minimum-feature feasibility")
    fc.add_argument("design", help="PGM or 0/1 CSV design file")
    fc.add_argument("--min-feature", type=int, help="brush diameter in pixels")
    fc.add_argument("--config", help="take the brush diameter from this configuration")
    cc = sub.add_parser("covcache", help="prebuild the RBF covariance factor for the configured grid")
    common(cc)
    cc.add_argument("--kappa", type=float, default=1e6, help="target condition number")
    return parser


def _fail(kind: str, exc: BaseException, code: int) -> int:
    print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "feascheck":
            return cmd_feascheck(args)
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "bench":
            return cmd_bench(cfg)
        return cmd_covcache(cfg, args.kappa)
    except (ConfigError, BudgetMismatchError, UnsupportedProblemError) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except (OSError, ValueError) as exc:
        if args.command == "feascheck":
            return _fail("input", exc, EXIT_CONFIG)
        return _fail("config", exc, EXIT_CONFIG)
    except CostEvaluationError as exc:
        return _fail("backend", exc, EXIT_BACKEND)
    except (NumericalAbort, CovarianceError, FloatingPointError) as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
