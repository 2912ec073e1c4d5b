"""Run configuration: one YAML file describes data, model, loss and training.

Every run directory keeps a verbatim copy of the config it was launched
with, so any artifact in it can be reproduced from config + seed + dataset.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .losses import LossConfig
from .model import ModelConfig
from .types import DEFAULT_CLASS_NAMES, DEFAULT_IGNORE_INDEX, DatasetSpec


@dataclass
class DataConfig:
    root_dir: str = "data/synth"
    patch_size: int = 64
    stride: int = 64
    num_classes: int = 6
    ignore_index: int = DEFAULT_IGNORE_INDEX
    class_names: Optional[tuple[str, ...]] = None
    augment: bool = True
    # classes left out of mF1/mIoU (catch-all classes distort the means);
    # None defaults to the clutter class when one exists
    exclude_from_means: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.class_names is None:
            if self.num_classes == len(DEFAULT_CLASS_NAMES):
                self.class_names = DEFAULT_CLASS_NAMES
            else:
                self.class_names = tuple(f"class_{i}" for i in range(self.num_classes))
        self.class_names = tuple(self.class_names)
        if len(self.class_names) != self.num_classes:
            raise ValueError(
                f"data.class_names: {len(self.class_names)} names for "
                f"{self.num_classes} classes"
            )
        if self.exclude_from_means is None:
            self.exclude_from_means = ("clutter",) if "clutter" in self.class_names else ()
        self.exclude_from_means = tuple(self.exclude_from_means)
        for name in self.exclude_from_means:
            if name not in self.class_names:
                raise ValueError(f"data.exclude_from_means: unknown class '{name}'")

    def spec(self, split: str) -> DatasetSpec:
        return DatasetSpec(
            root_dir=Path(self.root_dir),
            split=split,
            patch_size=self.patch_size,
            stride=self.stride,
            num_classes=self.num_classes,
            ignore_index=self.ignore_index,
            class_names=self.class_names,
        )

    def excluded_indices(self) -> tuple[int, ...]:
        return tuple(self.class_names.index(n) for n in self.exclude_from_means)


@dataclass
class LossSettings:
    label_smoothing: float = 0.05
    dice_smooth: float = 1.0
    lambda_l1: float = 100.0
    auto_class_weights: bool = True
    class_weights: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.class_weights is not None:
            self.class_weights = tuple(self.class_weights)


@dataclass
class OptimConfig:
    lr: float = 2e-4
    seg_betas: tuple[float, float] = (0.9, 0.999)
    gan_betas: tuple[float, float] = (0.5, 0.999)
    grad_clip: float = 5.0

    def __post_init__(self):
        self.seg_betas = tuple(self.seg_betas)
        self.gan_betas = tuple(self.gan_betas)
        if self.lr <= 0:
            raise ValueError("optim.lr must be positive")
        if self.grad_clip <= 0:
            raise ValueError("optim.grad_clip must be positive")


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossSettings = field(default_factory=LossSettings)
    optim: OptimConfig = field(default_factory=OptimConfig)
    seed: int = 0
    max_steps: int = 500
    eval_every: int = 100
    batch_size: int = 4
    out_dir: str = "runs/run"

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.model.num_classes != self.data.num_classes:
            raise ValueError(
                f"model.num_classes ({self.model.num_classes}) disagrees with "
                f"data.num_classes ({self.data.num_classes})"
            )

    def loss_config(self, class_weights: Optional[tuple[float, ...]] = None) -> LossConfig:
        return LossConfig(
            num_classes=self.data.num_classes,
            class_weights=class_weights if class_weights is not None else self.loss.class_weights,
            label_smoothing=self.loss.label_smoothing,
            dice_smooth=self.loss.dice_smooth,
            lambda_l1=self.loss.lambda_l1,
            ignore_index=self.data.ignore_index,
            mode=self.model.mode,
        )

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {"data": DataConfig, "model": ModelConfig, "loss": LossSettings, "optim": OptimConfig}


def _build_section(cls, payload: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"config section '{section}': unknown keys {sorted(unknown)}")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config section '{section}': {exc}") from exc


def run_config_from_dict(payload: dict) -> RunConfig:
    payload = dict(payload or {})
    raw = {s: dict(payload.pop(s, {}) or {}) for s in _SECTIONS}
    # model class count follows the data section unless set explicitly
    if "num_classes" not in raw["model"] and "num_classes" in raw["data"]:
        raw["model"]["num_classes"] = raw["data"]["num_classes"]
    kwargs = {s: _build_section(cls, raw[s], s) for s, cls in _SECTIONS.items()}
    known = {f.name for f in fields(RunConfig)} - set(_SECTIONS)
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"config: unknown top-level keys {sorted(unknown)}")
    try:
        return RunConfig(**kwargs, **payload)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config: {exc}") from exc


def load_run_config(path: Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    with path.open() as fh:
        payload = yaml.safe_load(fh)
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise ValueError(f"config {path}: expected a mapping at top level")
    return run_config_from_dict(payload)


def save_run_config(path: Path, config: RunConfig) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        yaml.safe_dump(_plainify(config.to_dict()), fh, sort_keys=False)


def _plainify(value):
    """yaml-safe copy: tuples -> lists, paths -> str."""
    if isinstance(value, dict):
        return {k: _plainify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plainify(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value
