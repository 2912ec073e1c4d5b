"""Confusion-matrix accumulation and the derived segmentation scores.

Scores follow the usual macro conventions: per-class F1 and IoU from the
matrix diagonal, means taken only over classes that actually occur (a class
with TP+FP+FN == 0 is undefined and excluded rather than counted as 0 or 1).
"""

from __future__ import annotations

import numpy as np


class ConfusionMatrix:
    """C x C pixel-count accumulator; rows are true class, columns predicted."""

    def __init__(self, num_classes: int, ignore_index: int = 255):
        if num_classes < 2:
            raise ValueError("need at least 2 classes")
        self.num_classes = num_classes
        self.ignore_index = ignore_index
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, predicted, label) -> "ConfusionMatrix":
        pred = np.asarray(predicted).reshape(-1)
        true = np.asarray(label).reshape(-1)
        if pred.shape != true.shape:
            raise ValueError(f"shape mismatch: predicted {pred.shape} vs label {true.shape}")
        keep = true != self.ignore_index
        pred, true = pred[keep], true[keep]
        if pred.size == 0:
            return self
        if pred.min() < 0 or pred.max() >= self.num_classes:
            raise ValueError(
                f"predicted ids outside 0..{self.num_classes - 1}: "
                f"min {pred.min()}, max {pred.max()}"
            )
        if true.min() < 0 or true.max() >= self.num_classes:
            raise ValueError(
                f"label ids outside 0..{self.num_classes - 1} and != ignore "
                f"index {self.ignore_index}"
            )
        flat = true * self.num_classes + pred
        self.counts += np.bincount(flat, minlength=self.num_classes**2).reshape(
            self.num_classes, self.num_classes
        )
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge matrices with different class counts")
        self.counts += other.counts
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def _check_nonempty(self):
        if self.total == 0:
            raise ValueError("confusion matrix is empty; accumulate predictions first")

    def _tp_fp_fn(self):
        tp = np.diag(self.counts).astype(np.float64)
        fp = self.counts.sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        return tp, fp, fn

    def f1_per_class(self) -> np.ndarray:
        """Per-class F1; NaN for classes with no support anywhere."""
        self._check_nonempty()
        tp, fp, fn = self._tp_fp_fn()
        denom = 2 * tp + fp + fn
        with np.errstate(invalid="ignore", divide="ignore"):
            f1 = np.where(denom > 0, 2 * tp / denom, np.nan)
        return f1

    def iou_per_class(self) -> np.ndarray:
        self._check_nonempty()
        tp, fp, fn = self._tp_fp_fn()
        denom = tp + fp + fn
        with np.errstate(invalid="ignore", divide="ignore"):
            iou = np.where(denom > 0, tp / denom, np.nan)
        return iou

    def mf1(self, exclude: tuple[int, ...] = ()) -> float:
        return _masked_mean(self.f1_per_class(), exclude)

    def miou(self, exclude: tuple[int, ...] = ()) -> float:
        return _masked_mean(self.iou_per_class(), exclude)


def _masked_mean(values: np.ndarray, exclude: tuple[int, ...]) -> float:
    values = values.copy()
    for c in exclude:
        values[c] = np.nan
    if np.isnan(values).all():
        raise ValueError("no class has support; mean is undefined")
    return float(np.nanmean(values))


def relative_delta(base: float, new: float) -> float:
    """Change from base to new as a percentage of base."""
    if base <= 0:
        raise ValueError(f"relative delta needs base > 0, got {base}")
    return 100.0 * (new - base) / base


def abs_delta_pp(base: float, new: float) -> float:
    """Change in percentage points; inputs are scores already in percent."""
    return new - base


def format_relative(delta: float) -> str:
    return f"{delta:+.1f}%"


def format_pp(delta: float) -> str:
    return f"{delta:+.2f}pp"
