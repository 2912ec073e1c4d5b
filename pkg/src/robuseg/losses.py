"""Training objective: segmentation terms, reconstruction terms, GAN terms.

The composite objective sums a fused-prediction segmentation loss, the
coarse-scale auxiliary segmentation losses, per-modality segmentation losses
for whichever modalities are actually present, and a reconstruction loss for
whichever modality was synthesized. Segmentation always uses Dice plus
class-weighted label-smoothed cross entropy, which keeps the rare classes
alive in heavily imbalanced scenes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import torch
import torch.nn.functional as F

from .types import ModalityMask

if TYPE_CHECKING:
    from .model import ModelOutputs


@dataclass
class LossConfig:
    num_classes: int
    class_weights: Optional[tuple[float, ...]] = None
    label_smoothing: float = 0.05
    dice_smooth: float = 1.0
    lambda_l1: float = 100.0
    ignore_index: int = 255
    mode: str = "ae"

    def __post_init__(self):
        if self.mode not in ("ae", "cgan"):
            raise ValueError(f"mode must be 'ae' or 'cgan', got '{self.mode}'")
        if self.class_weights is not None:
            self.class_weights = tuple(float(w) for w in self.class_weights)
            if len(self.class_weights) != self.num_classes:
                raise ValueError(
                    f"{len(self.class_weights)} class weights for {self.num_classes} classes"
                )
            if any(w < 0 for w in self.class_weights):
                raise ValueError("class weights must be nonnegative")
        if self.lambda_l1 < 0:
            raise ValueError("lambda_l1 must be nonnegative")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must be in [0, 1)")
        if self.dice_smooth <= 0:
            raise ValueError("dice_smooth must be positive")

    def weights_tensor(self, device, dtype) -> torch.Tensor:
        if self.class_weights is None:
            return torch.ones(self.num_classes, device=device, dtype=dtype)
        return torch.tensor(self.class_weights, device=device, dtype=dtype)


def inverse_log_frequency_weights(class_pixel_counts, softening: float = 1.02) -> tuple[float, ...]:
    """Class weights 1 / ln(softening + frequency); rare classes weigh more."""
    counts = [max(0, int(c)) for c in class_pixel_counts]
    total = sum(counts)
    if total == 0:
        raise ValueError("no labeled pixels to derive class weights from")
    return tuple(1.0 / math.log(softening + c / total) for c in counts)


def _flatten_batch(logits: torch.Tensor, labels: torch.Tensor):
    """Accept [C,H,W]/[H,W] or [B,C,H,W]/[B,H,W]; return batched forms."""
    if logits.ndim == 3:
        logits = logits.unsqueeze(0)
        labels = labels.unsqueeze(0)
    if logits.ndim != 4 or labels.ndim != 3 or logits.shape[-2:] != labels.shape[-2:]:
        raise ValueError(
            f"inconsistent shapes: logits {tuple(logits.shape)}, labels {tuple(labels.shape)}"
        )
    return logits, labels


def _zero_like_loss(logits: torch.Tensor, reason: str) -> torch.Tensor:
    warnings.warn(f"{reason}; loss defined as 0", stacklevel=3)
    return logits.sum() * 0.0


def dice_loss(logits: torch.Tensor, labels: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Soft Dice on softmax probabilities, macro over classes present in the
    label (ignored pixels excluded, absent classes skipped). In [0, 1]."""
    logits, labels = _flatten_batch(logits, labels)
    valid = labels != cfg.ignore_index
    if not valid.any():
        return _zero_like_loss(logits, "all pixels ignored in dice_loss")
    probs = torch.softmax(logits, dim=1)
    present = torch.unique(labels[valid])
    eps = cfg.dice_smooth
    coefficients = []
    for c in present.tolist():
        p = probs[:, c][valid]
        y = (labels[valid] == c).to(probs.dtype)
        intersection = (p * y).sum()
        coefficients.append((2 * intersection + eps) / (p.sum() + y.sum() + eps))
    return 1.0 - torch.stack(coefficients).mean()


def weighted_ce(logits: torch.Tensor, labels: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Label-smoothed cross entropy, each pixel scaled by its class weight
    and the weighted mean normalized by the sum of applied weights."""
    logits, labels = _flatten_batch(logits, labels)
    valid = labels != cfg.ignore_index
    if not valid.any():
        return _zero_like_loss(logits, "all pixels ignored in weighted_ce")
    log_probs = torch.log_softmax(logits, dim=1)
    labels_safe = labels.clone()
    labels_safe[~valid] = 0
    true_logp = log_probs.gather(1, labels_safe.unsqueeze(1)).squeeze(1)
    alpha = cfg.label_smoothing
    per_pixel = -(1 - alpha) * true_logp - (alpha / cfg.num_classes) * log_probs.sum(dim=1)
    weights = cfg.weights_tensor(logits.device, logits.dtype)[labels_safe]
    weights = weights * valid.to(logits.dtype)
    return (per_pixel * weights).sum() / weights.sum()


def seg_loss(logits: torch.Tensor, labels: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    return dice_loss(logits, labels, cfg) + weighted_ce(logits, labels, cfg)


def rec_loss_ae(real: torch.Tensor, synth: torch.Tensor) -> torch.Tensor:
    """Mean squared reconstruction error."""
    if real.shape != synth.shape:
        raise ValueError(f"shape mismatch: real {tuple(real.shape)} vs synth {tuple(synth.shape)}")
    return F.mse_loss(synth, real)


def gan_losses(
    disc_real_logits: torch.Tensor,
    disc_fake_logits: torch.Tensor,
    real: torch.Tensor,
    synth: torch.Tensor,
    cfg: LossConfig,
) -> tuple[torch.Tensor, torch.Tensor]:
    """(generator loss, discriminator loss) in the logit-BCE formulation.

    Generator: fool the discriminator plus lambda-weighted L1 to the target.
    Discriminator: average of real-as-real and fake-as-fake terms.
    """
    ones = torch.ones_like(disc_fake_logits)
    gen = F.binary_cross_entropy_with_logits(disc_fake_logits, ones)
    gen = gen + cfg.lambda_l1 * F.l1_loss(synth, real)
    disc = 0.5 * (
        F.binary_cross_entropy_with_logits(disc_real_logits, torch.ones_like(disc_real_logits))
        + F.binary_cross_entropy_with_logits(disc_fake_logits, torch.zeros_like(disc_fake_logits))
    )
    return gen, disc


@dataclass
class LossBreakdown:
    """Per-term record of one objective evaluation.

    total = seg_fused + seg_scales + seg_unimodal + rec + adv_g; the
    discriminator term is tracked for logging but optimized separately.
    """

    seg_fused: torch.Tensor
    seg_scales: torch.Tensor
    seg_unimodal: torch.Tensor
    rec: torch.Tensor
    adv_g: torch.Tensor
    adv_d: torch.Tensor
    total: torch.Tensor

    CSV_FIELDS = ("seg_fused", "seg_scales", "seg_unimodal", "rec", "adv_g", "adv_d", "total")

    def as_floats(self) -> dict[str, float]:
        out = {}
        for name in self.CSV_FIELDS:
            value = getattr(self, name)
            out[name] = float(value.detach()) if torch.is_tensor(value) else float(value)
        return out

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.as_floats().values())


def composite_loss(
    outputs: "ModelOutputs",
    rgir: torch.Tensor,
    ndsm: torch.Tensor,
    label: torch.Tensor,
    mask: ModalityMask,
    cfg: LossConfig,
    discriminators=None,
) -> LossBreakdown:
    """Evaluate the full training objective for one forward pass.

    Reconstruction applies only to the synthesized modality (zero under the
    full-modality mask); unimodal supervision applies only to modalities that
    were really present. In cGAN mode the reconstruction slot carries the
    lambda-weighted L1 term and the adversarial generator term is added on
    top, computed against the discriminator for the synthesized modality
    (discriminators is a mapping keyed by modality name).
    """
    zero = outputs.fused_logits.sum() * 0.0
    seg_fused = seg_loss(outputs.fused_logits, label, cfg)
    seg_scales = zero
    for scale_logits in outputs.scale_logits:
        seg_scales = seg_scales + seg_loss(scale_logits, label, cfg)
    seg_unimodal = zero
    for modality, logits in outputs.unimodal_logits.items():
        if getattr(mask, f"{modality}_available"):
            seg_unimodal = seg_unimodal + seg_loss(logits, label, cfg)

    real_images = {"rgir": rgir, "ndsm": ndsm}
    rec = zero
    adv_g = zero
    for modality, synth in outputs.synthesized.items():
        real = real_images[modality]
        if cfg.mode == "ae":
            rec = rec + rec_loss_ae(real, synth)
        else:
            rec = rec + cfg.lambda_l1 * F.l1_loss(synth, real)
            if discriminators is None:
                raise ValueError("cgan mode needs discriminators for the adversarial term")
            condition = real_images[mask.available[0]]
            fake_logits = discriminators[modality](condition, synth)
            adv_g = adv_g + F.binary_cross_entropy_with_logits(
                fake_logits, torch.ones_like(fake_logits)
            )

    total = seg_fused + seg_scales + seg_unimodal + rec + adv_g
    return LossBreakdown(
        seg_fused=seg_fused,
        seg_scales=seg_scales,
        seg_unimodal=seg_unimodal,
        rec=rec,
        adv_g=adv_g,
        adv_d=zero,
        total=total,
    )
