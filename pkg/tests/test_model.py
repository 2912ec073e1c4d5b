"""End-to-end assembly: routing by mask, substitution invariance, gradients."""

import pytest
import torch

from helpers import batched, one_patch, tiny_config, tiny_model
from robuseg.losses import LossConfig, composite_loss
from robuseg.model import ModelConfig, MultimodalSegmenter
from robuseg.types import MASK_FULL, MASK_MISSING_NDSM, MASK_MISSING_RGIR


def test_config_validation():
    with pytest.raises(ValueError, match="mode"):
        ModelConfig(mode="gan")
    with pytest.raises(ValueError):
        ModelConfig(num_classes=1)
    with pytest.raises(ValueError, match="head"):
        ModelConfig(width_multiplier=0.125, transformer_heads=3)
    assert ModelConfig(width_multiplier=0.125).channels == [4, 8, 16, 32, 64]


def test_forward_shapes_under_all_masks():
    model = tiny_model(seed=0)
    patch = one_patch(size=64)
    rgir, ndsm, _ = batched(patch)
    model.train()
    for mask in (MASK_FULL, MASK_MISSING_NDSM, MASK_MISSING_RGIR):
        out = model(rgir, ndsm, mask)
        assert out.fused_logits.shape == (1, 6, 64, 64)
        assert len(out.scale_logits) == 4
        for s in out.scale_logits:
            assert s.shape == (1, 6, 64, 64)
        assert set(out.unimodal_logits) == set(mask.available)
        assert set(out.synthesized) == set(mask.missing)
        for synth in out.synthesized.values():
            assert (synth >= 0).all() and (synth <= 1).all()
        probs = torch.softmax(out.fused_logits, dim=1).sum(dim=1)
        assert torch.allclose(probs, torch.ones_like(probs), atol=1e-5)


def test_eval_mode_drops_aux_outputs():
    model = tiny_model(seed=1).eval()
    rgir, ndsm, _ = batched(one_patch(size=32))
    out = model(rgir, ndsm, MASK_FULL)
    assert out.scale_logits == []
    assert out.unimodal_logits == {}


def test_missing_tensor_for_available_modality_rejected():
    model = tiny_model(seed=2)
    rgir, ndsm, _ = batched(one_patch(size=32))
    with pytest.raises(ValueError, match="rgir"):
        model(None, ndsm, MASK_FULL)
    with pytest.raises(ValueError, match="ndsm"):
        model(rgir, None, MASK_MISSING_RGIR)
    # absent modality may be omitted entirely
    out = model.predict(rgir, None, "missing_ndsm")
    assert out.shape == (1, 32, 32)


def test_indivisible_input_rejected():
    model = tiny_model(seed=3)
    with pytest.raises(ValueError, match="divisible"):
        model(torch.rand(1, 3, 48, 48), torch.rand(1, 1, 48, 48), MASK_FULL)


def test_mask_substitution_invariance_quick():
    model = tiny_model(seed=4).eval()
    patch = one_patch(size=32)
    rgir, ndsm, _ = batched(patch)
    base = model.predict(rgir, ndsm, "missing_ndsm")
    for i in range(3):
        torch.manual_seed(50 + i)
        assert torch.equal(base, model.predict(rgir, torch.rand_like(ndsm), "missing_ndsm"))
    base = model.predict(rgir, ndsm, "missing_rgir")
    for i in range(3):
        torch.manual_seed(60 + i)
        assert torch.equal(base, model.predict(torch.rand_like(rgir), ndsm, "missing_rgir"))


def test_predict_is_argmax_of_fused_logits():
    model = tiny_model(seed=5).eval()
    rgir, ndsm, _ = batched(one_patch(size=32))
    out = model(rgir, ndsm, MASK_FULL)
    pred = model.predict(rgir, ndsm, "full")
    assert torch.equal(pred, out.fused_logits.argmax(dim=1))
    assert pred.dtype == torch.long
    # argmax unaffected by a per-pixel constant shift across classes
    shifted = out.fused_logits + 3.7
    assert torch.equal(shifted.argmax(dim=1), pred)


def test_predict_restores_training_mode():
    model = tiny_model(seed=6)
    model.train()
    rgir, ndsm, _ = batched(one_patch(size=32))
    model.predict(rgir, ndsm, "full")
    assert model.training


def test_parameter_inventory_is_config_deterministic():
    a = tiny_model(seed=0)
    b = tiny_model(seed=99)  # different init, same architecture
    assert a.parameter_inventory() == b.parameter_inventory()
    wider = tiny_model(seed=0, width_multiplier=0.25)
    assert a.parameter_inventory() != wider.parameter_inventory()


def test_parameter_groups_partition_everything():
    for mode in ("ae", "cgan"):
        model = tiny_model(seed=7, mode=mode)
        seg = model.segmentation_parameters()
        gen = model.translator_parameters()
        disc = model.discriminator_parameters()
        ids = [id(p) for p in seg + gen + disc]
        assert len(ids) == len(set(ids))
        assert len(ids) == len(list(model.parameters()))
        assert (len(disc) > 0) == (mode == "cgan")


def test_full_mask_never_touches_translators():
    model = tiny_model(seed=8)
    patch = one_patch(size=32)
    rgir, ndsm, label = batched(patch)
    model.train()
    out = model(rgir, ndsm, MASK_FULL)
    bd = composite_loss(out, rgir, ndsm, label, MASK_FULL, LossConfig(num_classes=6))
    bd.total.backward()
    assert all(p.grad is None for p in model.translator_parameters())
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in model.segmentation_parameters())


def test_segmentation_loss_backprops_into_active_translator():
    model = tiny_model(seed=9)
    patch = one_patch(size=32)
    rgir, ndsm, label = batched(patch)
    model.train()
    out = model(rgir, ndsm, MASK_MISSING_NDSM)
    # only the fused segmentation term: gradient must still reach the
    # translator because the synthesized ndsm feeds the encoder
    from robuseg.losses import seg_loss

    seg_loss(out.fused_logits, label, LossConfig(num_classes=6)).backward()
    ndsm_gen = model.translators["ndsm"].parameters()
    rgir_gen = model.translators["rgir"].parameters()
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in ndsm_gen)
    assert all(p.grad is None for p in rgir_gen)


def test_unimodal_decoders_do_not_share_parameters():
    model = tiny_model(seed=10)
    rgir_ids = {id(p) for p in model.unimodal_decoders["rgir"].parameters()}
    ndsm_ids = {id(p) for p in model.unimodal_decoders["ndsm"].parameters()}
    assert not rgir_ids & ndsm_ids
    enc_rgir = {id(p) for p in model.encoders["rgir"].parameters()}
    enc_ndsm = {id(p) for p in model.encoders["ndsm"].parameters()}
    assert not enc_rgir & enc_ndsm


def test_baseline_strips_extras_but_keeps_substitution():
    model = tiny_model(seed=11, baseline=True)
    assert model.token_fusion is None
    assert model.scale_heads is None
    assert model.unimodal_decoders is None
    assert len(model.conv_fusions) == 5
    patch = one_patch(size=32)
    rgir, ndsm, _ = batched(patch)
    model.train()
    out = model(rgir, ndsm, MASK_MISSING_RGIR)
    assert out.scale_logits == [] and out.unimodal_logits == {}
    assert set(out.synthesized) == {"rgir"}
    base = model.eval().predict(rgir, ndsm, "missing_rgir")
    assert torch.equal(base, model.predict(torch.rand_like(rgir), ndsm, "missing_rgir"))


def test_discriminators_only_in_cgan_mode():
    assert tiny_model(seed=12).discriminators is None
    model = tiny_model(seed=13, mode="cgan")
    assert set(model.discriminators.keys()) == {"rgir", "ndsm"}
    logits = model.discriminators["ndsm"](torch.rand(1, 3, 64, 64), torch.rand(1, 1, 64, 64))
    assert logits.shape == (1, 1, 6, 6)
