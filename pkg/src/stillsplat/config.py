"""Declarative pipeline configuration: one YAML file drives every stage."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .optimizer import TrainConfig
from .tmp import TmpSchedule
from .tmr import TmrConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    provider: str = "oracle"      # oracle | files
    dim: int = 32
    sigma: float = 0.05
    patch_size: int = 4           # synthetic default; real exports use 14
    files_dir: str = ""

    def __post_init__(self):
        if self.provider not in ("oracle", "files"):
            raise ConfigError(f"unknown feature provider {self.provider!r}")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    segmenter: str = "oracle"     # oracle | identity
    features: FeatureConfig = dataclasses.field(default_factory=FeatureConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    tmp: TmpSchedule = dataclasses.field(default_factory=TmpSchedule)
    tmr: TmrConfig = dataclasses.field(default_factory=TmrConfig)

    def __post_init__(self):
        if self.segmenter not in ("oracle", "identity"):
            raise ConfigError(f"unknown segmenter {self.segmenter!r}")
        if self.features.provider == "files" and self.tmp.use_consistency:
            raise ConfigError(
                "file-backed features cannot featurize live renders; "
                "set tmp.use_consistency: false"
            )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_SECTIONS = {
    "features": FeatureConfig,
    "train": TrainConfig,
    "tmp": TmpSchedule,
    "tmr": TmrConfig,
}


def _build_section(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where!r}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where!r} section: {exc}") from exc


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"config parse error in {path}{loc}: {getattr(exc, 'problem', exc)}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping in {path}")
    top_allowed = {"seed", "segmenter", *_SECTIONS}
    unknown = set(raw) - top_allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {}
    if "seed" in raw:
        kwargs["seed"] = int(raw["seed"])
    if "segmenter" in raw:
        kwargs["segmenter"] = raw["segmenter"]
    for name, cls in _SECTIONS.items():
        kwargs[name] = _build_section(cls, raw.get(name), name)
    return PipelineConfig(**kwargs)
