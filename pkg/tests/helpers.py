"""Shared test utilities: tiny configs, fixture data, independent oracles."""

from __future__ import annotations

import numpy as np
import torch

from robuseg.model import ModelConfig, MultimodalSegmenter
from robuseg.synthetic import synth_dataset
from robuseg.types import ModalityBundle

TINY_WIDTH = 0.125  # channel schedule [4, 8, 16, 32, 64]


def tiny_config(**overrides) -> ModelConfig:
    kwargs = dict(num_classes=6, width_multiplier=TINY_WIDTH)
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


def tiny_model(seed: int = 0, **overrides) -> MultimodalSegmenter:
    torch.manual_seed(seed)
    return MultimodalSegmenter(tiny_config(**overrides))


def one_patch(seed: int = 1, size: int = 64, num_classes: int = 6) -> ModalityBundle:
    tile = synth_dataset(seed=seed, n_tiles=1, tile_size=max(size, 64), num_classes=num_classes)[0]
    return ModalityBundle(
        rgir=tile.rgir[:, :size, :size].clone(),
        ndsm=tile.ndsm[:, :size, :size].clone(),
        label=tile.label[:size, :size].clone(),
        sample_id=tile.sample_id,
    )


def batched(bundle: ModalityBundle):
    return (
        bundle.rgir.unsqueeze(0),
        bundle.ndsm.unsqueeze(0),
        bundle.label.unsqueeze(0),
    )


def random_labels(rng: np.random.Generator, num_classes: int, shape, ignore_index=None, p_ignore=0.0):
    labels = rng.integers(0, num_classes, size=shape)
    if ignore_index is not None and p_ignore > 0:
        labels = np.where(rng.random(shape) < p_ignore, ignore_index, labels)
    return torch.from_numpy(labels.astype(np.int64))


# -- independent metric oracle ------------------------------------------------
# Set-based per-class counting, no shared code with robuseg.metrics: builds
# boolean masks per class and counts elements, instead of a bincount matrix.


def oracle_scores(pred: np.ndarray, true: np.ndarray, num_classes: int, ignore_index: int = 255):
    pred = pred.reshape(-1)
    true = true.reshape(-1)
    keep = true != ignore_index
    pred, true = pred[keep], true[keep]
    f1 = np.full(num_classes, np.nan)
    iou = np.full(num_classes, np.nan)
    for c in range(num_classes):
        in_pred = pred == c
        in_true = true == c
        tp = int(np.sum(in_pred & in_true))
        fp = int(np.sum(in_pred & ~in_true))
        fn = int(np.sum(~in_pred & in_true))
        if tp + fp + fn > 0:
            f1[c] = 2 * tp / (2 * tp + fp + fn)
            iou[c] = tp / (tp + fp + fn)
    valid_f1 = f1[~np.isnan(f1)]
    valid_iou = iou[~np.isnan(iou)]
    mf1 = float(valid_f1.mean()) if valid_f1.size else float("nan")
    miou = float(valid_iou.mean()) if valid_iou.size else float("nan")
    return f1, iou, mf1, miou
