"""Run configuration: one YAML document with frontend/augment/model/trainer/
eval/paths sections, plus a stable content hash for provenance."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .augment import AugmentConfig
from .frontend import FeatureSpec
from .models import ModelConfig
from .trainer import TrainConfig

KNOWN_SECTIONS = ("frontend", "augment", "model", "trainer", "eval", "paths")


class ConfigError(ValueError):
    pass


def _build_section(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"section {section!r}: unknown keys {sorted(unknown)}")
    if "gemini_time_freq_ratio" in data:
        data = dict(data, gemini_time_freq_ratio=tuple(data["gemini_time_freq_ratio"]))
    for key in ("noise_snr_db_range", "pitch_semitone_range", "stretch_rate_range"):
        if key in data:
            data = dict(data, **{key: tuple(data[key])})
    return cls(**data)


@dataclass
class RunConfig:
    frontend: FeatureSpec = field(default_factory=FeatureSpec)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainConfig = field(default_factory=TrainConfig)
    eval: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    config_hash: str = ""

    @classmethod
    def from_dict(cls, document: dict) -> "RunConfig":
        if not isinstance(document, dict):
            raise ConfigError("run configuration must be a mapping")
        unknown = set(document) - set(KNOWN_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown configuration sections: {sorted(unknown)}")
        trainer_data = dict(document.get("trainer", {}))
        augment_data = document.get("augment", {})
        trainer_data["augment"] = _build_section(AugmentConfig, dict(augment_data), "augment")
        cfg = cls(
            frontend=_build_section(FeatureSpec, dict(document.get("frontend", {})), "frontend"),
            augment=_build_section(AugmentConfig, dict(augment_data), "augment"),
            model=_build_section(ModelConfig, dict(document.get("model", {})), "model"),
            trainer=_build_section(TrainConfig, trainer_data, "trainer"),
            eval=dict(document.get("eval", {})),
            paths=dict(document.get("paths", {})),
        )
        cfg.config_hash = config_hash(document)
        return cfg


def config_hash(document: dict) -> str:
    """Stable digest of the canonicalized document (key order irrelevant)."""
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_run_config(path: Optional[str]) -> RunConfig:
    if path is None:
        cfg = RunConfig()
        cfg.config_hash = config_hash({})
        return cfg
    document = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    return RunConfig.from_dict(document)
