"""Experiment configuration: one JSON document with defaults for everything.

Sections map onto pipeline stages (scene, activation, sampler, fit,
metrics) plus harness settings for the experiment, gradient check, and
benchmark subcommands.  Parsing is strict: unknown keys are an error, as
are duplicate seeds.  The ridge strength is spelled "lambda" in JSON and
`lam` in code.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .activation import ActivationKind, DepthActivation
from .errors import ConfigError
from .fitter import FitConfig
from .synth import BasisMode, SamplerConfig, SceneKind


def _from_mapping(cls, data: dict, section: str, rename: dict | None = None):
    rename = rename or {}
    # JSON keys are the field names except renamed ones, which are only
    # addressable under their JSON spelling ("lambda", not "lam")
    allowed = ({f.name for f in fields(cls)} - set(rename.values())) | set(rename)
    kwargs = {}
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in section '{section}'")
        kwargs[rename.get(key, key)] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section '{section}': {exc}") from exc


@dataclass(frozen=True)
class SceneParams:
    height: int = 64
    width: int = 64
    kind: str = SceneKind.PLANES_AND_BUMPS.value
    depth_cap: float = 10.0
    bump_amplitude: float = 1.0

    def __post_init__(self):
        SceneKind(self.kind)
        if self.height < 1 or self.width < 1:
            raise ValueError("scene dims must be positive")


@dataclass(frozen=True)
class ActivationParams:
    kind: str = ActivationKind.INVERSE_SIGMOID.value
    a: float = 1.0
    epsilon: float = 1e-6

    def build(self) -> DepthActivation:
        return DepthActivation(kind=ActivationKind(self.kind), a=self.a, epsilon=self.epsilon)


@dataclass(frozen=True)
class SamplerParams:
    density: float = 0.04
    depth_cap: float = 10.0
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_range: tuple = (0.5, 1.5)

    def __post_init__(self):
        self.build(seed=0)  # bounds live in SamplerConfig; fail at parse time

    def build(self, seed: int) -> SamplerConfig:
        return SamplerConfig(
            density=self.density,
            depth_cap=self.depth_cap,
            noise_sigma=self.noise_sigma,
            outlier_fraction=self.outlier_fraction,
            outlier_range=tuple(self.outlier_range),
            seed=seed,
        )


@dataclass(frozen=True)
class FitParams:
    lam: float = 1e-4
    iterations: int = 2
    robust: bool = True
    huber_delta: float = 1.0

    def build(self, iterations: int | None = None, robust: bool | None = None) -> FitConfig:
        return FitConfig(
            lam=self.lam,
            iterations=self.iterations if iterations is None else iterations,
            robust=self.robust if robust is None else robust,
            huber_delta=self.huber_delta,
        )


@dataclass(frozen=True)
class GradcheckParams:
    instances: int = 12
    samples: int = 20
    channels: int = 5
    step: float = 1e-6
    tolerance_linear: float = 1e-5
    tolerance_gn: float = 1e-4
    seed: int = 1234
    max_redraws: int = 8


@dataclass(frozen=True)
class BenchParams:
    sizes: tuple = ((512, 512),)
    samples: int = 1024
    repeats: int = 21
    channel_plans: tuple = ((4, 8, 16, 32),)


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneParams = field(default_factory=SceneParams)
    activation: ActivationParams = field(default_factory=ActivationParams)
    channel_plan: tuple = (4, 8, 16, 32)
    basis_mode: str = BasisMode.REALIZABLE.value
    sampler: SamplerParams = field(default_factory=SamplerParams)
    fit: FitParams = field(default_factory=FitParams)
    metric_depth_cap: float = 10.0
    seeds: tuple = (0, 1, 2, 3, 4, 5, 6, 7)
    gradcheck: GradcheckParams = field(default_factory=GradcheckParams)
    bench: BenchParams = field(default_factory=BenchParams)

    def __post_init__(self):
        BasisMode(self.basis_mode)
        object.__setattr__(self, "channel_plan", tuple(int(c) for c in self.channel_plan))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seeds=(int(seed),))


_SECTIONS = {
    "scene": (SceneParams, {}),
    "activation": (ActivationParams, {}),
    "sampler": (SamplerParams, {}),
    "fit": (FitParams, {"lambda": "lam"}),
    "gradcheck": (GradcheckParams, {}),
    "bench": (BenchParams, {}),
}


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    kwargs = {}
    top_level = {f.name for f in fields(ExperimentConfig)}
    for key, value in data.items():
        if key not in top_level:
            raise ConfigError(f"unknown top-level key '{key}'")
        if key in _SECTIONS:
            cls, rename = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"section '{key}' must be an object")
            kwargs[key] = _from_mapping(cls, value, key, rename)
        else:
            kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    data = asdict(cfg)
    data["fit"]["lambda"] = data["fit"].pop("lam")
    return data


def dump_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
