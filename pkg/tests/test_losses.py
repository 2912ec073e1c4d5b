"""Objective terms against hand-computed values and library oracles."""

import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from helpers import batched, one_patch, random_labels, tiny_model
from robuseg.losses import (
    LossBreakdown,
    LossConfig,
    composite_loss,
    dice_loss,
    gan_losses,
    inverse_log_frequency_weights,
    rec_loss_ae,
    seg_loss,
    weighted_ce,
)
from robuseg.types import MASK_FULL, MASK_MISSING_NDSM, MASK_MISSING_RGIR


def cfg_for(num_classes, **overrides):
    kwargs = dict(num_classes=num_classes, label_smoothing=0.0)
    kwargs.update(overrides)
    return LossConfig(**kwargs)


# -- dice ----------------------------------------------------------------------


def test_dice_hand_computed_four_pixel_case():
    # 2 classes, 2x2, uniform logits so p=0.5 everywhere, labels all class 0.
    # only class 0 is present: dice = 2*(0.5*4) / (0.5*4 + 4) = 2/3, loss 1/3
    logits = torch.zeros(1, 2, 2, 2)
    labels = torch.zeros(1, 2, 2, dtype=torch.long)
    loss = dice_loss(logits, labels, cfg_for(2, dice_smooth=1e-9))
    assert abs(loss.item() - 1 / 3) < 1e-6
    # with the default smooth=1 the same case gives 1 - 5/7 = 2/7
    loss = dice_loss(logits, labels, cfg_for(2, dice_smooth=1.0))
    assert abs(loss.item() - 2 / 7) < 1e-6


def test_dice_bounded_and_near_zero_for_perfect_prediction():
    rng = np.random.default_rng(0)
    for _ in range(10):
        logits = torch.from_numpy(rng.normal(size=(2, 3, 8, 8)).astype(np.float32))
        labels = random_labels(rng, 3, (2, 8, 8))
        val = dice_loss(logits, labels, cfg_for(3)).item()
        assert 0.0 <= val <= 1.0
    labels = random_labels(rng, 3, (1, 8, 8))
    perfect = F.one_hot(labels, 3).permute(0, 3, 1, 2).float() * 50.0
    assert dice_loss(perfect, labels, cfg_for(3)).item() < 0.01


def test_dice_skips_absent_classes():
    # labels contain only class 1; classes 0 and 2 must not contribute
    logits = torch.randn(1, 3, 4, 4)
    labels = torch.ones(1, 4, 4, dtype=torch.long)
    cfg = cfg_for(3, dice_smooth=1.0)
    probs = torch.softmax(logits, dim=1)
    p = probs[0, 1].flatten()
    inter = p.sum()  # y is all ones
    expected = 1.0 - (2 * inter + 1.0) / (p.sum() + 16.0 + 1.0)
    assert abs(dice_loss(logits, labels, cfg).item() - expected.item()) < 1e-6


def test_dice_respects_ignore_index():
    logits = torch.randn(1, 2, 2, 2)
    labels = torch.tensor([[[0, 255], [255, 255]]])
    cfg = cfg_for(2, dice_smooth=1e-9)
    probs = torch.softmax(logits, dim=1)
    p = probs[0, 0, 0, 0]
    expected = 1.0 - (2 * p) / (p + 1.0)
    assert abs(dice_loss(logits, labels, cfg).item() - expected.item()) < 1e-5


def test_all_ignored_pixels_warn_and_return_zero():
    logits = torch.randn(1, 2, 2, 2, requires_grad=True)
    labels = torch.full((1, 2, 2), 255, dtype=torch.long)
    cfg = cfg_for(2)
    with pytest.warns(UserWarning, match="ignored"):
        d = dice_loss(logits, labels, cfg)
    with pytest.warns(UserWarning, match="ignored"):
        c = weighted_ce(logits, labels, cfg)
    assert d.item() == 0.0 and c.item() == 0.0
    (d + c).backward()  # stays connected to the graph
    assert torch.all(logits.grad == 0)


# -- weighted cross entropy ------------------------------------------------------


def test_wce_single_pixel_hand_case():
    # logits (ln3, 0) -> softmax (0.75, 0.25); true class 0, no smoothing.
    # the class weight cancels in single-pixel normalization
    logits = torch.tensor([[[[math.log(3.0)]], [[0.0]]]])
    labels = torch.zeros(1, 1, 1, dtype=torch.long)
    for weights in (None, (2.0, 1.0), (0.5, 3.0)):
        cfg = cfg_for(2, class_weights=weights)
        loss = weighted_ce(logits, labels, cfg)
        assert abs(loss.item() - (-math.log(0.75))) < 1e-6


def test_wce_uniform_weights_match_library_cross_entropy():
    rng = np.random.default_rng(1)
    for _ in range(30):
        b, c, h, w = 2, int(rng.integers(2, 6)), 6, 6
        logits = torch.from_numpy(rng.normal(size=(b, c, h, w)).astype(np.float32))
        labels = random_labels(rng, c, (b, h, w), ignore_index=255, p_ignore=0.2)
        cfg = cfg_for(c)
        ours = weighted_ce(logits, labels, cfg)
        ref = F.cross_entropy(logits, labels, ignore_index=255)
        assert abs(ours.item() - ref.item()) < 1e-6


def test_wce_label_smoothing_matches_library():
    rng = np.random.default_rng(2)
    for _ in range(10):
        logits = torch.from_numpy(rng.normal(size=(1, 4, 5, 5)).astype(np.float32))
        labels = random_labels(rng, 4, (1, 5, 5))
        cfg = cfg_for(4, label_smoothing=0.05)
        ours = weighted_ce(logits, labels, cfg)
        ref = F.cross_entropy(logits, labels, label_smoothing=0.05)
        assert abs(ours.item() - ref.item()) < 1e-6


def test_wce_weight_normalization_two_pixels():
    logits = torch.randn(1, 2, 1, 2)
    labels = torch.tensor([[[0, 1]]])
    cfg = cfg_for(2, class_weights=(2.0, 1.0))
    logp = torch.log_softmax(logits, dim=1)
    l0 = -logp[0, 0, 0, 0]
    l1 = -logp[0, 1, 0, 1]
    expected = (2 * l0 + 1 * l1) / 3
    assert abs(weighted_ce(logits, labels, cfg).item() - expected.item()) < 1e-6


def test_wce_true_logit_increase_never_hurts():
    rng = np.random.default_rng(3)
    for _ in range(5):
        logits = torch.from_numpy(rng.normal(size=(1, 3, 4, 4)).astype(np.float32))
        labels = random_labels(rng, 3, (1, 4, 4))
        cfg = cfg_for(3, class_weights=(1.0, 2.0, 0.5), label_smoothing=0.05)
        base = weighted_ce(logits, labels, cfg).item()
        bumped = logits.clone()
        y, x = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        bumped[0, labels[0, y, x], y, x] += 0.5
        assert weighted_ce(bumped, labels, cfg).item() <= base + 1e-7


def test_inverse_log_frequency_weights():
    weights = inverse_log_frequency_weights((98, 2))
    assert weights[0] == pytest.approx(1.0 / math.log(1.02 + 0.98))
    assert weights[1] == pytest.approx(1.0 / math.log(1.02 + 0.02))
    assert weights[1] > weights[0]
    with pytest.raises(ValueError):
        inverse_log_frequency_weights((0, 0))


# -- reconstruction and gan ------------------------------------------------------


def test_rec_loss_hand_case():
    real = torch.tensor([0.2, 0.8])
    synth = torch.tensor([0.5, 0.5])
    assert abs(rec_loss_ae(real, synth).item() - 0.09) < 1e-6
    with pytest.raises(ValueError, match="mismatch"):
        rec_loss_ae(torch.zeros(2), torch.zeros(3))


def test_gan_fixed_points():
    cfg = cfg_for(2, lambda_l1=100.0, mode="cgan")
    zeros = torch.zeros(1, 1, 4, 4)
    real = torch.full((1, 1, 8, 8), 0.50)
    synth = torch.full((1, 1, 8, 8), 0.51)  # MAE exactly 0.01
    gen, disc = gan_losses(zeros, zeros, real, synth, cfg)
    assert abs(disc.item() - math.log(2.0)) < 1e-6
    assert abs(gen.item() - (math.log(2.0) + 1.0)) < 1e-6


def test_gan_confident_discriminator_limits():
    cfg = cfg_for(2, lambda_l1=0.0, mode="cgan")
    big = torch.full((1, 1, 2, 2), 20.0)
    real = synth = torch.zeros(1, 1, 4, 4)
    gen, disc = gan_losses(big, -big, real, synth, cfg)
    assert disc.item() < 1e-6  # real->1, fake->0: perfect
    assert gen.item() > 10.0  # generator fully fooled-out


# -- loss config and breakdown ---------------------------------------------------


def test_loss_config_validation():
    with pytest.raises(ValueError, match="mode"):
        LossConfig(num_classes=2, mode="vae")
    with pytest.raises(ValueError, match="weights"):
        LossConfig(num_classes=3, class_weights=(1.0, 2.0))
    with pytest.raises(ValueError):
        LossConfig(num_classes=2, class_weights=(-1.0, 1.0))
    with pytest.raises(ValueError):
        LossConfig(num_classes=2, lambda_l1=-5.0)
    with pytest.raises(ValueError):
        LossConfig(num_classes=2, label_smoothing=1.0)
    with pytest.raises(ValueError):
        LossConfig(num_classes=2, dice_smooth=0.0)


def test_breakdown_total_invariant_and_csv_fields():
    parts = {name: torch.tensor(float(i + 1)) for i, name in enumerate(
        ("seg_fused", "seg_scales", "seg_unimodal", "rec", "adv_g"))}
    total = sum(parts.values())
    bd = LossBreakdown(**parts, adv_d=torch.tensor(0.5), total=total)
    floats = bd.as_floats()
    assert tuple(floats) == LossBreakdown.CSV_FIELDS
    assert floats["total"] == pytest.approx(
        floats["seg_fused"] + floats["seg_scales"] + floats["seg_unimodal"]
        + floats["rec"] + floats["adv_g"]
    )
    assert bd.is_finite()
    bd.rec = torch.tensor(float("nan"))
    assert not bd.is_finite()


# -- composite objective ---------------------------------------------------------


def _run_composite(model, patch, mask, cfg):
    rgir, ndsm, label = batched(patch)
    model.train()
    outputs = model(rgir, ndsm, mask)
    return outputs, composite_loss(
        outputs, rgir, ndsm, label, mask, cfg,
        discriminators=model.discriminators,
    )


def test_composite_routing_full_mask():
    model = tiny_model(seed=0)
    patch = one_patch(size=32)
    outputs, bd = _run_composite(model, patch, MASK_FULL, cfg_for(6))
    assert outputs.synthesized == {}
    assert bd.rec.item() == 0.0
    assert bd.adv_g.item() == 0.0
    assert len(outputs.scale_logits) == 4
    assert set(outputs.unimodal_logits) == {"rgir", "ndsm"}
    assert bd.total.item() == pytest.approx(
        bd.seg_fused.item() + bd.seg_scales.item() + bd.seg_unimodal.item(), rel=1e-6
    )


def test_composite_routing_missing_ndsm():
    model = tiny_model(seed=1)
    patch = one_patch(size=32)
    outputs, bd = _run_composite(model, patch, MASK_MISSING_NDSM, cfg_for(6))
    assert set(outputs.synthesized) == {"ndsm"}
    assert set(outputs.unimodal_logits) == {"rgir"}
    assert bd.rec.item() > 0.0
    assert bd.adv_g.item() == 0.0  # ae mode
    assert bd.is_finite()


def test_composite_routing_missing_rgir_cgan():
    model = tiny_model(seed=2, mode="cgan")
    patch = one_patch(size=32)
    cfg = cfg_for(6, mode="cgan")
    outputs, bd = _run_composite(model, patch, MASK_MISSING_RGIR, cfg)
    assert set(outputs.synthesized) == {"rgir"}
    assert bd.adv_g.item() > 0.0
    assert bd.rec.item() > 0.0  # lambda-weighted l1 slot
    assert bd.total.item() == pytest.approx(
        bd.seg_fused.item() + bd.seg_scales.item() + bd.seg_unimodal.item()
        + bd.rec.item() + bd.adv_g.item(), rel=1e-6
    )


def test_composite_cgan_requires_discriminators():
    model = tiny_model(seed=3, mode="cgan")
    patch = one_patch(size=32)
    rgir, ndsm, label = batched(patch)
    model.train()
    outputs = model(rgir, ndsm, MASK_MISSING_NDSM)
    with pytest.raises(ValueError, match="discriminator"):
        composite_loss(outputs, rgir, ndsm, label, MASK_MISSING_NDSM, cfg_for(6, mode="cgan"))


def test_composite_baseline_zeroes_aux_terms():
    model = tiny_model(seed=4, baseline=True)
    patch = one_patch(size=32)
    outputs, bd = _run_composite(model, patch, MASK_MISSING_NDSM, cfg_for(6))
    assert outputs.scale_logits == []
    assert outputs.unimodal_logits == {}
    assert bd.seg_scales.item() == 0.0
    assert bd.seg_unimodal.item() == 0.0
    assert bd.rec.item() > 0.0
