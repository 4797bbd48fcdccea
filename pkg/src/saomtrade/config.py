"""Declarative run configuration (YAML, checked against ``config_schema.json``)."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .effects import EffectSpec
from .estimate import EstimationOptions


class ConfigError(ValueError):
    pass


_SCHEMA = None


def schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        _SCHEMA = json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())
    return _SCHEMA


@dataclass
class InputConfig:
    panel: str | None = None
    flows: str | None = None
    flow_columns: dict[str, str] = field(default_factory=dict)
    commodity: str | None = None
    macro: str | None = None
    calibration: str | None = None
    market_model: dict[str, float] | None = None
    dyadic: str | None = None
    log_covariates: list[str] = field(default_factory=lambda: ["distance"])
    continuity: str | None = None
    years: list[int] | None = None


@dataclass
class Dichotomization:
    scheme: str
    threshold: float | None = None
    coverage: float = 0.95

    @property
    def parameter(self) -> float:
        return self.threshold if self.scheme == "relative" else self.coverage


@dataclass
class SimulationConfig:
    rates: list[float]
    chains: int = 100


@dataclass
class NonparamConfig:
    p_method: str = "permutation"
    resamples: int = 10_000


@dataclass
class ScoreTestConfig:
    effect: EffectSpec
    chains: int = 1000


@dataclass
class MagnitudeConfig:
    influence_beta: float
    distance_beta: float
    distance_mean: float
    distance_sd: float
    distance_min: float | None = None
    distance_max: float | None = None
    max_influences: int = 4


@dataclass
class RunConfig:
    seed: int
    output_dir: str = "out"
    input: InputConfig = field(default_factory=InputConfig)
    dichotomization: Dichotomization | None = None
    effects: list[EffectSpec] = field(default_factory=list)
    estimation: EstimationOptions = field(default_factory=EstimationOptions)
    initial_rates: list[float] | None = None
    score_test: ScoreTestConfig | None = None
    simulation: SimulationConfig | None = None
    nonparam: NonparamConfig = field(default_factory=NonparamConfig)
    sweep_thresholds: list[float] | None = None
    sweep_effect: str = "transitive_mediated_triads"
    magnitude: MagnitudeConfig | None = None
    raw: dict = field(default_factory=dict, repr=False)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def path(self, p: str | None) -> Path | None:
        """Input path resolved against the config file's directory."""
        if p is None:
            return None
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    @property
    def digest(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _field_path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate(raw: Any) -> None:
    """Raise :class:`ConfigError` listing every schema violation by field."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>: configuration must be a mapping")
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors:
            if e.validator == "oneOf" and _field_path(e) == "dichotomization":
                msg = "select exactly one scheme: relative with 'threshold', or absolute with optional 'coverage'"
            else:
                msg = e.message
            lines.append(f"{_field_path(e)}: {msg}")
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))


def _effect(d: dict) -> EffectSpec:
    try:
        return EffectSpec(d["kind"], d.get("parametrization", "evaluation"), float(d.get("beta", 0.0)),
                          d.get("covariate"), bool(d.get("fixed", False)))
    except ValueError as exc:
        raise ConfigError(f"effects: {exc}") from exc


def from_dict(raw: dict, base_dir: Path | None = None) -> RunConfig:
    validate(raw)
    est = dict(raw.get("estimation", {}))
    initial_rates = est.pop("initial_rates", None)
    cfg = RunConfig(
        seed=raw["seed"],
        output_dir=raw.get("output_dir", "out"),
        input=InputConfig(**raw.get("input", {})),
        dichotomization=Dichotomization(**raw["dichotomization"]) if "dichotomization" in raw else None,
        effects=[_effect(e) for e in raw.get("effects", [])],
        estimation=EstimationOptions(**est),
        initial_rates=initial_rates,
        raw=raw,
        base_dir=base_dir or Path.cwd(),
    )
    if "score_test" in raw:
        st = raw["score_test"]
        cfg.score_test = ScoreTestConfig(_effect(st["effect"]), st.get("chains", 1000))
    if "simulation" in raw:
        cfg.simulation = SimulationConfig(**raw["simulation"])
    if "nonparam" in raw:
        cfg.nonparam = NonparamConfig(**raw["nonparam"])
    if "sweep" in raw:
        cfg.sweep_thresholds = list(raw["sweep"]["thresholds"])
        cfg.sweep_effect = raw["sweep"].get("effect", cfg.sweep_effect)
    if "magnitude" in raw:
        cfg.magnitude = MagnitudeConfig(**raw["magnitude"])
    keys = [e.key for e in cfg.effects]
    if len(set(keys)) != len(keys):
        raise ConfigError("effects: duplicate effect entries")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(raw, path.parent.resolve())

