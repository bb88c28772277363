"""
Experiment configuration files.

A config is a YAML mapping with one section per component::

    trajectory: {d: 20, T: 1000, model: ar, ...}
    signal: {noise_sigma: 0.1, ...}
    objective: {alpha: 2.0, beta: 0.1, gamma: 0.98, ...}
    learner: {predictor: prior, step_rule: adaptive, ...}
    benchmark: {predictors: [identity, prior], beta_grid: [...]}
    seeds: [0, 1, 2]

Missing keys take their defaults; unknown keys are rejected.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .dynamics import SignalConfig, TrajectoryConfig
from .objective import ObjectiveParams

PREDICTORS = ("identity", "prior", "ar", "transition", "data_driven")


class ConfigError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 needs a dot in floats; accept plain exponents such as 1e-8 too
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


@dataclass(frozen=True)
class LearnerConfig:
    predictor: str = "identity"
    step_rule: str | float = "adaptive"
    P: int = 3
    prediction_step: float | None = None
    degree_guard: float = 0.5
    snapshot_every: int = 0
    regret: bool = False
    regret_tol: float = 1e-8

    def __post_init__(self):
        if self.predictor not in PREDICTORS:
            raise ValueError(f"unknown predictor {self.predictor!r}; choose from {PREDICTORS}")
        if isinstance(self.step_rule, str):
            if self.step_rule not in ("adaptive", "fixed"):
                raise ValueError(f"step_rule must be 'adaptive', 'fixed' or a number, got {self.step_rule!r}")
        elif not float(self.step_rule) > 0:
            raise ValueError("a constant step_rule must be positive")
        if self.P < 1:
            raise ValueError("P must be at least 1")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be nonnegative")


@dataclass(frozen=True)
class BenchmarkConfig:
    predictors: tuple[str, ...] = ("identity", "prior")
    beta_grid: tuple[float, ...] = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
    recover_window: int = 50
    recover_factor: float = 1.1

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        if not self.predictors:
            raise ValueError("benchmark needs at least one predictor")
        for name in self.predictors:
            if name not in PREDICTORS:
                raise ValueError(f"unknown predictor {name!r}")
        if not self.beta_grid or min(self.beta_grid) <= 0:
            raise ValueError("beta_grid must be a nonempty list of positive values")


@dataclass(frozen=True)
class ExperimentConfig:
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    objective: ObjectiveParams = field(default_factory=ObjectiveParams)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("seed list must not be empty")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if f.name == "seeds" else _section_to_dict(value)
        return out


SECTIONS = {
    "trajectory": TrajectoryConfig,
    "signal": SignalConfig,
    "objective": ObjectiveParams,
    "learner": LearnerConfig,
    "benchmark": BenchmarkConfig,
}


def _section_to_dict(section) -> dict:
    out = asdict(section)
    for key, value in out.items():
        if isinstance(value, tuple):
            out[key] = list(value)
    return out


def from_dict(data: dict) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")
    unknown = set(data) - set(SECTIONS) - {"seeds"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    try:
        for name, cls in SECTIONS.items():
            section = data.get(name) or {}
            allowed = {f.name for f in fields(cls)}
            bad = set(section) - allowed
            if bad:
                raise ConfigError(f"[{name}] unknown keys: {sorted(bad)}")
            kwargs[name] = cls(**section)
        if "seeds" in data:
            kwargs["seeds"] = data["seeds"]
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return from_dict(data)


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def load_config(path) -> ExperimentConfig:
    return loads(Path(path).read_text())


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
