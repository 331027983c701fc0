"""Run configuration: one flat ``key = value`` file shared by every subcommand."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import TerragrainError
from .mapping import RANGE_GATE, CameraModel, GridSpec
from .segmentation import SegmentationConfig
from .trainer import TrainConfig


class ConfigError(TerragrainError, ValueError):
    """Malformed config text, unknown key or invalid value."""


_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


@dataclass
class RunConfig:
    # training
    temperature: float = 0.1
    steps: int = 3000
    learning_rate: float = 0.01
    momentum: float = 0.9
    negatives: int = 10
    fg_size: int = 64
    bg_size: int = 320
    seed: int = 0
    augmentation: bool = True
    background: bool = True
    hidden_size: int = 64
    embedding_dim: int = 32
    # clustering and segmentation
    K: int = 6
    kmeans_max_iters: int = 100
    step: int = 3
    # camera and grid
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    mount_height: float = 1.5
    pitch: float = 0.1
    range_gate: float = RANGE_GATE
    grid_resolution: float = 0.2
    grid_x_min: float = -5.0
    grid_x_max: float = 60.0
    grid_y_min: float = -20.0
    grid_y_max: float = 20.0
    # evaluation
    eval_k: list = field(default_factory=list)  # empty: just K
    # paths
    train_manifest: str = ""
    test_manifests: list = field(default_factory=list)
    output_dir: str = "out"

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def train_config(self) -> TrainConfig:
        names = TrainConfig.keys()
        try:
            return TrainConfig(**{k: getattr(self, k) for k in names})
        except ValueError as exc:
            raise ConfigError(f"invalid training config: {exc}") from None

    def segmentation_config(self) -> SegmentationConfig:
        return SegmentationConfig(self.fg_size, self.bg_size, self.step, self.background)

    def camera(self) -> CameraModel:
        return CameraModel(self.fx, self.fy, self.cx, self.cy, self.mount_height, self.pitch)

    def grid_spec(self) -> GridSpec:
        return GridSpec(self.grid_resolution, self.grid_x_min, self.grid_x_max,
                        self.grid_y_min, self.grid_y_max)

    def k_values(self) -> list[int]:
        return list(self.eval_k) or [self.K]

    def set(self, key: str, text: str, where: str = "") -> None:
        if key not in self.keys():
            raise ConfigError(f"{where}unknown config key {key!r}")
        setattr(self, key, _parse(key, text, type(getattr(RunConfig(), key)), where))

    def render(self) -> str:
        return "".join(f"{k} = {_format(getattr(self, k))}\n" for k in self.keys())


def _parse(key: str, text: str, kind, where: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError("expected on|off")
        if kind is list:
            items = [t.strip() for t in text.split(",") if t.strip()]
            return [int(t) for t in items] if key == "eval_k" else items
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}bad value {text!r} for {key}: {exc}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


def parse_config(text: str, source: str = "<config>", base: RunConfig | None = None) -> RunConfig:
    """Apply ``key = value`` lines to ``base`` (defaults if omitted).  ``#`` starts a comment."""
    cfg = RunConfig() if base is None else base
    seen = set()
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{n}: "
        if "=" not in line:
            raise ConfigError(f"{where}expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{where}duplicate key {key!r}")
        seen.add(key)
        cfg.set(key, value, where)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"missing file: {path}")
    cfg = parse_config(path.read_text(encoding="utf-8"), str(path))
    # relative paths in the file are relative to the file
    base = path.parent
    if cfg.train_manifest:
        cfg.train_manifest = str(base / cfg.train_manifest)
    cfg.test_manifests = [str(base / p) for p in cfg.test_manifests]
    cfg.output_dir = str(base / cfg.output_dir)
    return cfg
