"""Experiment configuration: parsing, validation, canonical hashing.

A config is a flat JSON object whose keys mirror ``ExperimentConfig``.
Method strings combine an integrator with a guidance variant, separated
by a slash: "ddpm-vp/tmpd", "em-vp/dps", "ddpm-vp/dps-chung:1.0",
"ddpm-ve/dtmpd:rowsum", or "<integrator>/none" for unconditional runs.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json

from ..guidance import GuidanceKind, parse_guidance
from ..sampler import SamplerConfig

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ParsedMethod",
    "parse_method",
    "default_config",
    "smoke_config",
]

_INTEGRATORS = ("em-vp", "em-ve", "ddpm-vp", "ddpm-ve")


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


@dataclasses.dataclass(frozen=True)
class ParsedMethod:
    """A validated method string split into its parts."""

    label: str
    sampler: str
    guidance: GuidanceKind | None


def parse_method(text: str) -> ParsedMethod:
    sampler, sep, guidance_text = text.strip().partition("/")
    if not sep or sampler not in _INTEGRATORS:
        raise ConfigError(
            f"bad method {text!r}; expected '<integrator>/<guidance>' with "
            f"integrator in {_INTEGRATORS}"
        )
    try:
        kind = parse_guidance(guidance_text)
    except ValueError as exc:
        raise ConfigError(f"bad method {text!r}: {exc}") from exc
    return ParsedMethod(label=text.strip(), sampler=sampler, guidance=kind)


@dataclasses.dataclass
class ExperimentConfig:
    """Everything a benchmark run depends on, minus the output path.

    The gmm experiment sweeps the cell grid d_x x d_y x sigma_y with
    ``n_models`` independent measurement draws per cell.  The grf
    experiment runs one measurement draw on a grid_side^2 random field
    and traces metric-versus-sample-count curves; there d_x and d_y are
    derived from ``grid_side`` and ``obs_fraction``.
    """

    experiment: str
    methods: list[str]
    d_x: list[int] = dataclasses.field(default_factory=list)
    d_y: list[int] = dataclasses.field(default_factory=list)
    sigma_y: list[float] = dataclasses.field(default_factory=lambda: [0.1])
    n_models: int = 20
    n_samples: int = 1000
    steps: int = 1000
    n_slices: int = 10_000
    seed: int = 0
    metric_seed: int = 1_000_003
    beta_min: float = 0.1
    beta_max: float = 20.0
    sigma_min: float = 0.01
    sigma_max: float = 50.0
    grid_side: int = 32
    domain: list[float] = dataclasses.field(default_factory=lambda: [-5.0, 5.0])
    jitter: float = 1e-6
    obs_fraction: float = 0.5
    sample_counts: list[int] = dataclasses.field(
        default_factory=lambda: [9, 30, 100, 300, 700, 1500]
    )

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in ("gmm", "grf"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.methods:
            raise ConfigError("methods must be a nonempty list")
        for text in self.methods:
            parse_method(text)
        if self.n_models < 1 or self.n_samples < 2 or self.steps < 2:
            raise ConfigError("need n_models >= 1, n_samples >= 2, steps >= 2")
        if self.n_slices < 1:
            raise ConfigError("need n_slices >= 1")
        if not 0.0 < self.beta_min <= self.beta_max:
            raise ConfigError("need 0 < beta_min <= beta_max")
        if not 0.0 < self.sigma_min < self.sigma_max:
            raise ConfigError("need 0 < sigma_min < sigma_max")
        if any(s <= 0.0 for s in self.sigma_y):
            raise ConfigError("sigma_y values must be positive")
        if self.experiment == "gmm":
            if not self.d_x or not self.d_y or not self.sigma_y:
                raise ConfigError("gmm needs nonempty d_x, d_y, sigma_y lists")
            for dx in self.d_x:
                if dx < 2 or dx % 2:
                    raise ConfigError(f"gmm d_x must be even >= 2, got {dx}")
                for dy in self.d_y:
                    if not 1 <= dy <= dx:
                        raise ConfigError(f"invalid cell d_x={dx}, d_y={dy}")
        else:
            if self.grid_side < 2:
                raise ConfigError("need grid_side >= 2")
            if not 0.0 < self.obs_fraction <= 1.0:
                raise ConfigError("need 0 < obs_fraction <= 1")
            if len(self.sigma_y) != 1:
                raise ConfigError("grf takes exactly one sigma_y")
            if not self.sample_counts or any(
                c < 2 for c in self.sample_counts
            ):
                raise ConfigError("sample_counts must all be >= 2")
            if max(self.sample_counts) > self.n_samples:
                raise ConfigError("sample_counts cannot exceed n_samples")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data or "methods" not in data:
            raise ConfigError("config needs 'experiment' and 'methods'")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def replace(self, **kwargs) -> "ExperimentConfig":
        return dataclasses.replace(self, **kwargs)

    def schedule_for(self, sampler_method: str):
        from ..schedule import VeSchedule, VpSchedule

        if sampler_method.endswith("-vp"):
            return VpSchedule(self.beta_min, self.beta_max)
        return VeSchedule(self.sigma_min, self.sigma_max)

    def sampler_config(self, method: ParsedMethod, seed: int) -> SamplerConfig:
        return SamplerConfig(
            method=method.sampler,
            steps=self.steps,
            batch=self.n_samples,
            seed=seed,
            guidance=method.guidance,
        )


def default_config(experiment: str) -> ExperimentConfig:
    """Full-scale defaults for each experiment."""
    if experiment == "gmm":
        return ExperimentConfig(
            experiment="gmm",
            methods=[
                "ddpm-vp/tmpd",
                "ddpm-vp/dtmpd",
                "ddpm-vp/pigdm",
                "ddpm-vp/dps-chung:1.0",
            ],
            d_x=[8, 80, 800],
            d_y=[1, 2, 4],
            sigma_y=[0.01, 0.1, 1.0],
            beta_max=500.0,
        )
    if experiment == "grf":
        return ExperimentConfig(
            experiment="grf",
            methods=["em-vp/tmpd", "em-vp/dtmpd", "em-vp/pigdm", "em-vp/dps"],
            n_models=1,
            n_samples=1500,
            sigma_y=[0.1],
            beta_max=20.0,
        )
    raise ConfigError(f"unknown experiment {experiment!r}")


def smoke_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Shrink a config to a seconds-scale sanity run."""
    small = dict(
        n_models=1,
        n_samples=32,
        steps=16,
        n_slices=64,
    )
    if cfg.experiment == "gmm":
        small.update(d_x=[cfg.d_x[0]], d_y=[cfg.d_y[0]], sigma_y=[cfg.sigma_y[0]])
    else:
        small.update(grid_side=4, sample_counts=[8, 32])
    return cfg.replace(**small)
