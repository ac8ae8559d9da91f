"""Versioned TOML run configuration, validated before any computation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .baselines import PsoConfig, SteConfig, TfConfig
from .grid import DesignGrid, Symmetry
from .optimizer import GegdConfig

SCHEMA_VERSION = 1
ALGORITHM_CHOICES = ("gegd", "tf", "af_ste", "af_pso")
PROBLEM_KINDS = ("test_function", "external")


class ConfigError(ValueError):
    """Invalid or unsupported configuration document."""


@dataclass
class ProblemConfig:
    kind: str = "test_function"
    rows: int = 18
    cols: int = 36
    min_feature: int = 4
    symmetry: str = "d1-cols"
    num_wells: int = 10
    wells_seed: int = 0
    noise_scale: float = 0.001
    noise_seed: int = 0
    command: list = field(default_factory=list)
    processes: int = 1
    t_hf: float = 1.0
    t_lf: float = 1.0 / 33.0


@dataclass
class BenchConfig:
    mode: str = "compare"
    algorithms: list = field(default_factory=lambda: list(ALGORITHM_CHOICES))
    repetitions: int = 20
    iterations: int = 200
    ensemble: int = 10
    restarts: int = 7
    tolerance: float = 0.05
    window: int = 10


@dataclass
class RunConfig:
    version: int = SCHEMA_VERSION
    algorithm: str = "gegd"
    seed: int = 0
    workers: int = 1
    output: str = "out"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    gegd: dict = field(default_factory=dict)
    tf: dict = field(default_factory=dict)
    af_ste: dict = field(default_factory=dict)
    af_pso: dict = field(default_factory=dict)
    bench: BenchConfig = field(default_factory=BenchConfig)

    @property
    def grid(self) -> DesignGrid:
        p = self.problem
        return DesignGrid(p.rows, p.cols, p.min_feature, Symmetry.parse(p.symmetry))

    def gegd_config(self) -> GegdConfig:
        return GegdConfig(**{**self.gegd, "seed": self.seed})

    def tf_config(self) -> TfConfig:
        kw = dict(self.tf)
        if "beta_schedule" in kw:
            kw["beta_schedule"] = tuple(kw["beta_schedule"])
        return TfConfig(**{**kw, "seed": self.seed})

    def ste_config(self) -> SteConfig:
        return SteConfig(**{**self.af_ste, "seed": self.seed})

    def pso_config(self) -> PsoConfig:
        return PsoConfig(**{**self.af_pso, "seed": self.seed})


def _names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _check_keys(section: str, data: dict, allowed: set[str]) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a table")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def _build(cls, section: str, data: dict):
    _check_keys(section, data, _names(cls))
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


_ALGO_CLASSES = {"gegd": GegdConfig, "tf": TfConfig, "af_ste": SteConfig, "af_pso": PsoConfig}


def parse_config(data: dict) -> RunConfig:
    """Validate a decoded document; every section and key is checked."""
    _check_keys("top level", data, _names(RunConfig))
    if "version" not in data:
        raise ConfigError("missing required key: version")
    if data["version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config version {data['version']!r} (expected {SCHEMA_VERSION})")
    top = {k: v for k, v in data.items() if k not in ("problem", "bench", *_ALGO_CLASSES)}
    cfg = RunConfig(**top)
    cfg.problem = _build(ProblemConfig, "problem", data.get("problem", {}))
    cfg.bench = _build(BenchConfig, "bench", data.get("bench", {}))
    for name, cls in _ALGO_CLASSES.items():
        section = data.get(name, {})
        _check_keys(name, section, _names(cls) - {"seed"})
        setattr(cfg, name, dict(section))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.algorithm not in ALGORITHM_CHOICES:
        raise ConfigError(f"algorithm must be one of {ALGORITHM_CHOICES}, got {cfg.algorithm!r}")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not isinstance(cfg.workers, int) or cfg.workers < 1:
        raise ConfigError("workers must be a positive integer")
    p = cfg.problem
    if p.kind not in PROBLEM_KINDS:
        raise ConfigError(f"problem.kind must be one of {PROBLEM_KINDS}, got {p.kind!r}")
    if p.kind == "external" and not p.command:
        raise ConfigError("external problems need a command")
    if p.t_hf <= 0 or p.t_lf <= 0:
        raise ConfigError("t_hf and t_lf must be positive")
    try:
        cfg.grid
    except ValueError as exc:
        raise ConfigError(f"[problem]: {exc}") from exc
    b = cfg.bench
    if b.mode not in ("compare", "ablation"):
        raise ConfigError("bench.mode must be 'compare' or 'ablation'")
    bad = sorted(set(b.algorithms) - set(ALGORITHM_CHOICES))
    if bad or not b.algorithms:
        raise ConfigError(f"bench.algorithms has unknown entries: {bad}")
    if b.repetitions < 1 or b.iterations < 1:
        raise ConfigError("bench repetitions and iterations must be positive")
    # constructing each algorithm config surfaces value errors early
    for build in (cfg.gegd_config, cfg.tf_config, cfg.ste_config, cfg.pso_config):
        try:
            build()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = tomllib.loads(text.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)
