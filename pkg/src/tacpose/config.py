"""Experiment configuration: INI parsing, resolution, digests, seeds.

Config files are INI-style with sections [experiment], [workspace],
[filter], [sensor], [baseline], [training], [diffusion]; every key has a
default, and the fully resolved configuration is printed and persisted with
each run so no value is ever substituted silently. Artifacts embed the
resolved-config digest and master seed.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .baselines import LocalSamplerConfig
from .diffusion import TrainConfig
from .filter import FilterConfig
from .sensor import LikelihoodParams, SensorParams

ENV_SEED = "TACPOSE_SEED"
ENV_OUT = "TACPOSE_OUT"


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    object_id: str = "006_mustard_bottle"
    density: float = 1.56
    proposer: str = "ddim"  # ddim | sdf | sdf-ft
    scenario: str = "static"  # static | push
    resolution: int = 128
    seed: int = 0
    out_dir: str = "artifacts"
    episodes: int = 100
    contacts: int = 6
    pushes: int = 8
    reruns: int = 5
    n_records: int = 20000
    n_hypotheses: int = 100
    # nested blocks
    filter: FilterConfig = field(default_factory=FilterConfig)
    sensor: SensorParams = field(default_factory=SensorParams)
    baseline: LocalSamplerConfig = field(default_factory=LocalSamplerConfig)
    training: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.proposer not in ("ddim", "sdf", "sdf-ft"):
            raise ConfigError(f"unknown proposer '{self.proposer}'")
        if self.scenario not in ("static", "push"):
            raise ConfigError(f"unknown scenario '{self.scenario}'")

    def resolved(self) -> dict:
        out = asdict(self)
        out["filter"]["likelihood"] = asdict(self.filter.likelihood)
        return _plain(out)

    def digest(self) -> str:
        return config_digest(self.resolved())


def _plain(obj):
    """JSON-safe copy (tuples to lists, numpy scalars to python)."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def config_digest(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _apply_section(section, target):
    """Build kwargs for a dataclass from a configparser section."""
    kwargs = {}
    valid = {f.name: f.type for f in fields(target)}
    for key, raw in section.items():
        if key not in valid:
            raise ConfigError(f"unknown key '{key}' for {target.__name__}")
        kwargs[key] = _parse_value(raw)
    return kwargs


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if "," in raw:
        return tuple(float(x) for x in raw.split(","))
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Parse an INI config; later CLI overrides win, then env vars."""
    parser = configparser.ConfigParser()
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")

    def section(name):
        return dict(parser[name]) if parser.has_section(name) else {}

    try:
        lik_keys = section("likelihood")
        filt_kwargs = _apply_section(section("filter"), FilterConfig)
        if lik_keys:
            filt_kwargs["likelihood"] = LikelihoodParams(**{k: _parse_value(v) for k, v in lik_keys.items()})
        cfg = ExperimentConfig(
            **_apply_section(section("experiment"), ExperimentConfig),
            filter=FilterConfig(**filt_kwargs),
            sensor=SensorParams(**_apply_section(section("sensor"), SensorParams)),
            baseline=LocalSamplerConfig(**_apply_section(section("baseline"), LocalSamplerConfig)),
            training=TrainConfig(**_apply_section(section("training"), TrainConfig)),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc

    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown override '{key}'")
        setattr(cfg, key, val)
    if ENV_SEED in os.environ:
        cfg.seed = int(os.environ[ENV_SEED])
    if ENV_OUT in os.environ:
        cfg.out_dir = os.environ[ENV_OUT]
    cfg.__post_init__()
    return cfg


def persist_resolved(cfg: ExperimentConfig, path) -> dict:
    """Write the resolved config next to an artifact; returns the dict."""
    resolved = cfg.resolved()
    resolved["config_digest"] = cfg.digest()
    Path(path).write_text(json.dumps(resolved, indent=2))
    return resolved
