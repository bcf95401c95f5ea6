"""Pipeline configuration: one JSON document, strict keys, full defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError

STAGES = ("full", "rigid-only")


@dataclass
class PathsConfig:
    output: str = "out"
    ct_lumen: Optional[str] = None
    ct_wall: Optional[str] = None
    centerline: Optional[str] = None
    oct_lumen: Optional[str] = None
    oct_wall: Optional[str] = None
    landmarks: Optional[str] = None
    result: Optional[str] = None
    mask: Optional[str] = None


@dataclass
class GridConfig:
    frame_shape: tuple = (96, 96)
    in_plane_spacing: float = 0.08
    frame_spacing: float = 0.4


@dataclass
class SdfConfig:
    tau: float = 2.0
    smooth_sigma: float = 1.0
    smooth_ksize: int = 3


@dataclass
class RigidConfig:
    gamma: int = 30
    min_overlap: int = 40


@dataclass
class NonrigidConfig:
    lr_long: float = 0.001
    lr_rot: float = 0.01
    lr_trans: float = 0.01
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_rel: float = 0.35
    m_s: int = 30
    m_theta: int = 20
    m_d: int = 60


@dataclass
class MetricsConfig:
    gate_frames: float = 6
    mm_per_frame: Optional[float] = None


@dataclass
class PhantomConfig:
    n_frames: int = 256
    n_bifurcations: int = 6
    vessel: dict = field(default_factory=dict)
    motion: dict = field(default_factory=dict)


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    sdf: SdfConfig = field(default_factory=SdfConfig)
    rigid: RigidConfig = field(default_factory=RigidConfig)
    nonrigid: NonrigidConfig = field(default_factory=NonrigidConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    stage: str = "full"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}, got {self.stage!r}")
        g = self.grid
        if len(g.frame_shape) != 2 or min(g.frame_shape) < 2:
            raise ConfigError("grid.frame_shape must be two sizes >= 2")
        g.frame_shape = tuple(int(v) for v in g.frame_shape)
        if g.in_plane_spacing <= 0 or g.frame_spacing <= 0:
            raise ConfigError("grid spacings must be > 0")
        if self.sdf.tau <= 0:
            raise ConfigError("sdf.tau must be > 0")
        if self.sdf.smooth_ksize < 1 or self.sdf.smooth_ksize % 2 == 0:
            raise ConfigError("sdf.smooth_ksize must be odd and >= 1")
        if self.rigid.gamma < 2 or self.rigid.min_overlap < 1:
            raise ConfigError("rigid.gamma must be >= 2 and rigid.min_overlap >= 1")
        n = self.nonrigid
        if min(n.lr_long, n.lr_rot, n.lr_trans) <= 0:
            raise ConfigError("learning rates must be > 0")
        if n.epochs < 0:
            raise ConfigError("nonrigid.epochs must be >= 0")
        if min(n.m_s, n.m_theta, n.m_d) < 4:
            raise ConfigError("control point counts must be >= 4")
        mpf = self.metrics.mm_per_frame
        if mpf is not None and (isinstance(mpf, bool) or not isinstance(mpf, (int, float)) or mpf <= 0):
            raise ConfigError("metrics.mm_per_frame must be a number > 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"]["frame_shape"] = list(self.grid.frame_shape)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}" if where else name)
        else:
            kwargs[name] = _coerce(current, value, f"{where}.{name}" if where else name)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def _coerce(default, value, where: str):
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where} must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, (tuple, list)):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be a list")
        return tuple(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be an object")
        return dict(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{where} must be a string")
    return value


def from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "")


def load(path) -> PipelineConfig:
    """Read a config file; relative paths are resolved against its folder.

    Every input path that is set must exist; the output folder may not.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = from_dict(data)
    base = path.resolve().parent
    for f in fields(PathsConfig):
        v = getattr(cfg.paths, f.name)
        if v is None:
            continue
        if not Path(v).is_absolute():
            v = str(base / v)
            setattr(cfg.paths, f.name, v)
        if f.name != "output" and not Path(v).exists():
            raise ConfigError(f"paths.{f.name} does not exist: {v}")
    return cfg


def set_value(cfg: PipelineConfig, dotted: str, raw: str) -> None:
    """Apply a ``section.key=value`` override; the value is parsed as JSON
    when possible, otherwise taken as a string."""
    parts = dotted.split(".")
    target = cfg
    for p in parts[:-1]:
        if not hasattr(target, p) or not is_dataclass(getattr(target, p)):
            raise ConfigError(f"unknown config section {dotted!r}")
        target = getattr(target, p)
    key = parts[-1]
    if not is_dataclass(target) or key not in {f.name for f in fields(target)}:
        raise ConfigError(f"unknown config key {dotted!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    current = getattr(target, key)
    if is_dataclass(current):
        setattr(target, key, _build(type(current), value, dotted))
    else:
        setattr(target, key, _coerce(current if current is not None else value, value, dotted))
    cfg.validate()
