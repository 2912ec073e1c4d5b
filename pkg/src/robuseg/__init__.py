"""Multimodal semantic segmentation that stays usable when a modality is missing.

The model pairs per-modality feature pyramids with cross-modal fusion and a
translation network that synthesizes whichever input raster is absent, so a
single checkpoint serves full and degraded sensor configurations.
"""

from .config import DataConfig, LossSettings, ModelConfig, OptimConfig, RunConfig
from .losses import LossBreakdown, LossConfig, composite_loss
from .metrics import ConfusionMatrix, abs_delta_pp, relative_delta
from .model import ModelOutputs, MultimodalSegmenter
from .types import (
    ModalityBundle,
    ModalityMask,
    Scenario,
    MASK_FULL,
    MASK_MISSING_NDSM,
    MASK_MISSING_RGIR,
)

__all__ = [
    "ConfusionMatrix",
    "DataConfig",
    "LossBreakdown",
    "LossConfig",
    "LossSettings",
    "MASK_FULL",
    "MASK_MISSING_NDSM",
    "MASK_MISSING_RGIR",
    "ModalityBundle",
    "ModalityMask",
    "ModelConfig",
    "ModelOutputs",
    "MultimodalSegmenter",
    "OptimConfig",
    "RunConfig",
    "Scenario",
    "abs_delta_pp",
    "composite_loss",
    "relative_delta",
]
