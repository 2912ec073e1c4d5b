"""Core data containers shared across the pipeline, model and harness."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import torch

RGIR_CHANNELS = 3
NDSM_CHANNELS = 1
MODALITIES = ("rgir", "ndsm")

DEFAULT_IGNORE_INDEX = 255
DEFAULT_CLASS_NAMES = (
    "impervious",
    "building",
    "low_vegetation",
    "tree",
    "car",
    "clutter",
)


class Scenario(str, Enum):
    """Evaluation condition: which modalities the model may read."""

    FULL = "full"
    MISSING_RGIR = "missing_rgir"
    MISSING_NDSM = "missing_ndsm"


@dataclass(frozen=True)
class ModalityMask:
    """Availability flags for the two input modalities.

    The all-false combination is rejected at construction: with no modality
    present there is nothing to segment and nothing to synthesize from.
    """

    rgir_available: bool
    ndsm_available: bool

    def __post_init__(self):
        if not (self.rgir_available or self.ndsm_available):
            raise ValueError("at least one modality must be available")

    @property
    def missing(self) -> tuple[str, ...]:
        out = []
        if not self.rgir_available:
            out.append("rgir")
        if not self.ndsm_available:
            out.append("ndsm")
        return tuple(out)

    @property
    def available(self) -> tuple[str, ...]:
        return tuple(m for m in MODALITIES if getattr(self, f"{m}_available"))

    @classmethod
    def from_scenario(cls, scenario: Scenario | str) -> "ModalityMask":
        scenario = Scenario(scenario)
        if scenario is Scenario.FULL:
            return cls(True, True)
        if scenario is Scenario.MISSING_RGIR:
            return cls(False, True)
        return cls(True, False)


MASK_FULL = ModalityMask(True, True)
MASK_MISSING_NDSM = ModalityMask(True, False)
MASK_MISSING_RGIR = ModalityMask(False, True)
# Order matters: training samples one of these three uniformly.
TRAINING_MASKS = (MASK_FULL, MASK_MISSING_NDSM, MASK_MISSING_RGIR)


@dataclass
class ModalityBundle:
    """One co-registered sample: spectral raster, height raster and labels.

    rgir:  float tensor [3, H, W], values in [0, 1]
    ndsm:  float tensor [1, H, W], values in [0, 1]
    label: integer tensor [H, W], class ids or the ignore sentinel
    """

    rgir: torch.Tensor
    ndsm: torch.Tensor
    label: torch.Tensor
    sample_id: str

    def __post_init__(self):
        if self.rgir.ndim != 3 or self.rgir.shape[0] != RGIR_CHANNELS:
            raise ValueError(
                f"sample '{self.sample_id}': rgir must be [3, H, W], got {tuple(self.rgir.shape)}"
            )
        if self.ndsm.ndim != 3 or self.ndsm.shape[0] != NDSM_CHANNELS:
            raise ValueError(
                f"sample '{self.sample_id}': ndsm must be [1, H, W], got {tuple(self.ndsm.shape)}"
            )
        if self.label.ndim != 2:
            raise ValueError(
                f"sample '{self.sample_id}': label must be [H, W], got {tuple(self.label.shape)}"
            )
        shapes = {self.rgir.shape[1:], self.ndsm.shape[1:], self.label.shape}
        if len(shapes) != 1:
            raise ValueError(
                f"sample '{self.sample_id}': modality shapes disagree: "
                f"rgir {tuple(self.rgir.shape[1:])}, ndsm {tuple(self.ndsm.shape[1:])}, "
                f"label {tuple(self.label.shape)}"
            )
        for name in ("rgir", "ndsm"):
            t = getattr(self, name)
            if not torch.isfinite(t).all():
                raise ValueError(f"sample '{self.sample_id}': non-finite values in {name}")

    @property
    def height(self) -> int:
        return self.label.shape[0]

    @property
    def width(self) -> int:
        return self.label.shape[1]

    def modality(self, name: str) -> torch.Tensor:
        if name not in MODALITIES:
            raise KeyError(f"unknown modality '{name}'")
        return getattr(self, name)

    def validate_labels(self, num_classes: int, ignore_index: int) -> None:
        """Check that every label value is a class id or exactly the sentinel."""
        values = torch.unique(self.label)
        bad = values[(values < 0) | ((values >= num_classes) & (values != ignore_index))]
        if bad.numel():
            raise ValueError(
                f"sample '{self.sample_id}': label values {bad.tolist()} outside "
                f"0..{num_classes - 1} and != ignore index {ignore_index}"
            )


@dataclass
class DatasetSpec:
    """Where a dataset lives on disk and how to cut it into samples."""

    root_dir: Path
    split: str = "train"
    patch_size: int = 512
    stride: int = 512
    num_classes: int = len(DEFAULT_CLASS_NAMES)
    ignore_index: int = DEFAULT_IGNORE_INDEX
    class_names: tuple[str, ...] = field(default_factory=lambda: DEFAULT_CLASS_NAMES)

    def __post_init__(self):
        self.root_dir = Path(self.root_dir)
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"split must be train/val/test, got '{self.split}'")
        if self.patch_size <= 0:
            raise ValueError("patch_size must be positive")
        if not (0 < self.stride <= self.patch_size):
            raise ValueError("stride must satisfy 0 < stride <= patch_size")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        self.class_names = tuple(self.class_names)
        if len(self.class_names) != self.num_classes:
            raise ValueError(
                f"class_names has {len(self.class_names)} entries for {self.num_classes} classes"
            )

    @property
    def split_dir(self) -> Path:
        return self.root_dir / self.split
