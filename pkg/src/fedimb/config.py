"""Strict key = value experiment configuration.

Sections map one-to-one onto dataclasses; any unknown section or key, or a
value that fails validation, raises :class:`ConfigError` before any work
is done.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from typing import Any, get_type_hints

from .augment import METHODS, GanConfig
from .dataio import DataError, Schema, SplitSpec, schema_from_mapping
from .fedsim import CentralizedConfig, FederationConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSection:
    method: str = "none"
    mode: str = "federated"
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.mode not in ("federated", "centralized"):
            raise ValueError(f"mode must be federated or centralized, got {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class DataSection:
    source: str = ""
    path: str = ""
    table1_scale: float = 1.0

    def __post_init__(self):
        if self.source not in ("csv", "blobs", "table1"):
            raise ValueError("data source must be csv, blobs or table1")
        if self.source == "csv" and not self.path:
            raise ValueError("data source csv needs a path")
        if not 0 < self.table1_scale <= 1:
            raise ValueError("table1_scale must lie in (0, 1]")


@dataclass(frozen=True)
class BlobSection:
    n_rows: int = 2000
    minority_ratio: float = 0.1
    dims: int = 2
    mean_negative: float = 0.3
    mean_positive: float = 0.7
    stddev: float = 0.12
    stations: int = 9

    def __post_init__(self):
        if self.n_rows < 2 or self.dims < 1 or self.stations < 1:
            raise ValueError("blobs need n_rows >= 2, dims >= 1, stations >= 1")
        if not 0 < self.minority_ratio <= 0.5:
            raise ValueError("minority_ratio must lie in (0, 0.5]")
        if self.stddev <= 0:
            raise ValueError("stddev must be positive")


@dataclass(frozen=True)
class SmoteSection:
    k_neighbors: int = 5

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


@dataclass(frozen=True)
class GanSection:
    latent_dim: int = 13
    batch_size: int = 64
    epochs: int = 100
    clip_value: float = 0.01
    clip_discriminator: bool = True
    learning_rate: float = 0.001
    lambda_gp: float = 10.0
    critic_iterations: int = 5
    wgan_learning_rate: float = 0.0001
    wgan_clip: bool = True
    smote_gan_keep_smote: bool = False

    def to_gan_config(self) -> GanConfig:
        kw = dataclasses.asdict(self)
        kw.pop("smote_gan_keep_smote")
        return GanConfig(**kw)

    def __post_init__(self):
        self.to_gan_config()


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    data: DataSection = field(default_factory=lambda: DataSection(source="blobs"))
    schema: Schema = field(default_factory=Schema)
    blobs: BlobSection = field(default_factory=BlobSection)
    split: SplitSpec = field(default_factory=SplitSpec)
    smote: SmoteSection = field(default_factory=SmoteSection)
    gan: GanSection = field(default_factory=GanSection)
    federation: FederationConfig = field(default_factory=FederationConfig)
    centralized: CentralizedConfig = field(default_factory=CentralizedConfig)

    def replace(self, **sections) -> "ExperimentConfig":
        return dataclasses.replace(self, **sections)

    def with_method(self, method: str) -> "ExperimentConfig":
        return self.replace(experiment=dataclasses.replace(self.experiment, method=method))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.replace(experiment=dataclasses.replace(self.experiment, seed=seed))


_SECTIONS = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(raw: str, typ, where: str) -> Any:
    if typ is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    try:
        if typ is int:
            return int(raw.strip(), 0)
        if typ is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected {typ.__name__}, got {raw!r}") from None
    return raw.strip()


def _section_from_mapping(name: str, items: dict[str, str]):
    cls = _SECTIONS[name].default_factory().__class__  # type: ignore[misc]
    if name == "schema":
        try:
            return schema_from_mapping(items)
        except DataError as exc:
            raise ConfigError(f"[schema] {exc}") from None
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(items) - known)
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(unknown)}")
    kw = {k: _coerce(v, hints[k], f"[{name}] {k}") for k, v in items.items()}
    try:
        return cls(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown = [s for s in cp.sections() if s not in _SECTIONS]
    if unknown:
        raise ConfigError(f"{source}: unknown section(s): {', '.join(unknown)}")
    if "data" not in cp or "source" not in cp["data"]:
        raise ConfigError(f"{source}: [data] source is required")
    kw = {name: _section_from_mapping(name, dict(cp[name])) for name in cp.sections()}
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def config_to_dict(cfg: ExperimentConfig) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for f in fields(cfg):
        sec = getattr(cfg, f.name)
        d = {}
        for sf in fields(sec):
            v = getattr(sec, sf.name)
            if sf.name in ("feature_columns", "positive_label_values", "negative_label_values"):
                v = ",".join(sorted(v) if isinstance(v, frozenset) else v)
            d[sf.name] = v
        out[f.name] = d
    return out


def config_to_text(cfg: ExperimentConfig) -> str:
    """Round-trippable key = value rendering of every resolved field."""
    lines = []
    for name, sec in config_to_dict(cfg).items():
        lines.append(f"[{name}]")
        for k, v in sec.items():
            lines.append(f"{k} = {_render(v)}")
        lines.append("")
    return "\n".join(lines)


def config_from_dict(d: dict) -> ExperimentConfig:
    return ExperimentConfig(**{name: _section_from_mapping(name, {k: _render(v) for k, v in sec.items()}) for name, sec in d.items()})


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
