"""End-to-end assembly: synthesize what is missing, encode, fuse, decode.

The forward pass routes strictly by the modality mask: a missing modality is
replaced by its synthesized counterpart before encoding and the real tensor
is never read, so predictions under a missing-modality scenario cannot leak
information from the sensor that is supposedly absent.

baseline=True strips the model back to a plain conv pipeline: no transformer
bottlenecks, conv fusion at every scale, no auxiliary or unimodal heads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn as nn

from .blocks import check_spatial, scaled_channels
from .discriminator import PatchDiscriminator
from .extractor import ModalityTranslator, PyramidDecoder, PyramidEncoder
from .fusion import ConvFusion, ScaleHead, TokenFusion
from .types import MODALITIES, NDSM_CHANNELS, RGIR_CHANNELS, ModalityMask, Scenario

MODALITY_CHANNELS = {"rgir": RGIR_CHANNELS, "ndsm": NDSM_CHANNELS}


@dataclass
class ModelConfig:
    num_classes: int = 6
    mode: str = "ae"
    baseline: bool = False
    width_multiplier: float = 1.0
    transformer_depth: int = 2
    transformer_heads: int = 4
    fusion_depth: int = 2

    def __post_init__(self):
        if self.mode not in ("ae", "cgan"):
            raise ValueError(f"mode must be 'ae' or 'cgan', got '{self.mode}'")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.width_multiplier <= 0:
            raise ValueError("width_multiplier must be positive")
        if self.transformer_depth < 1 or self.transformer_heads < 1:
            raise ValueError("transformer depth and heads must be >= 1")
        if self.channels[-1] % self.transformer_heads:
            raise ValueError(
                f"deepest width {self.channels[-1]} not divisible by "
                f"{self.transformer_heads} attention heads"
            )

    @property
    def channels(self) -> list[int]:
        return scaled_channels(self.width_multiplier)

    @property
    def discriminator_width(self) -> int:
        return max(8, int(round(64 * self.width_multiplier)))


@dataclass
class ModelOutputs:
    """Everything one forward pass produces.

    scale_logits and unimodal_logits are only populated in training mode
    (they exist solely to carry auxiliary supervision); synthesized holds the
    generated image for each modality that was masked out.
    """

    fused_logits: torch.Tensor
    scale_logits: list[torch.Tensor] = field(default_factory=list)
    unimodal_logits: dict[str, torch.Tensor] = field(default_factory=dict)
    synthesized: dict[str, torch.Tensor] = field(default_factory=dict)
    mask_used: ModalityMask = ModalityMask(True, True)


class MultimodalSegmenter(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        channels = config.channels
        use_transformer = not config.baseline
        depth, heads = config.transformer_depth, config.transformer_heads

        self.translators = nn.ModuleDict(
            {
                # keyed by the modality they produce
                "ndsm": ModalityTranslator(
                    RGIR_CHANNELS, NDSM_CHANNELS, channels, depth, heads, use_transformer
                ),
                "rgir": ModalityTranslator(
                    NDSM_CHANNELS, RGIR_CHANNELS, channels, depth, heads, use_transformer
                ),
            }
        )
        self.encoders = nn.ModuleDict(
            {
                m: PyramidEncoder(MODALITY_CHANNELS[m], channels, depth, heads, use_transformer)
                for m in MODALITIES
            }
        )
        fusion_levels = 5 if config.baseline else 4
        self.conv_fusions = nn.ModuleList(
            ConvFusion(channels[i], config.fusion_depth) for i in range(fusion_levels)
        )
        self.token_fusion = (
            None if config.baseline else TokenFusion(channels[4], depth, heads)
        )
        self.decoder = PyramidDecoder(channels, config.num_classes)
        if config.baseline:
            self.scale_heads = None
            self.unimodal_decoders = None
        else:
            self.scale_heads = nn.ModuleList(
                ScaleHead(channels[i], config.num_classes) for i in range(4)
            )
            self.unimodal_decoders = nn.ModuleDict(
                {m: PyramidDecoder(channels, config.num_classes) for m in MODALITIES}
            )
        if config.mode == "cgan":
            base = config.discriminator_width
            self.discriminators = nn.ModuleDict(
                {
                    "ndsm": PatchDiscriminator(RGIR_CHANNELS, NDSM_CHANNELS, base),
                    "rgir": PatchDiscriminator(NDSM_CHANNELS, RGIR_CHANNELS, base),
                }
            )
        else:
            self.discriminators = None

    # -- parameter groups ---------------------------------------------------

    def discriminator_parameters(self):
        if self.discriminators is None:
            return []
        return list(self.discriminators.parameters())

    def translator_parameters(self):
        return list(self.translators.parameters())

    def segmentation_parameters(self):
        skip = {id(p) for p in self.translator_parameters()}
        skip |= {id(p) for p in self.discriminator_parameters()}
        return [p for p in self.parameters() if id(p) not in skip]

    def parameter_inventory(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(p.shape) for name, p in self.named_parameters()}

    # -- forward ------------------------------------------------------------

    def forward(
        self,
        rgir: Optional[torch.Tensor],
        ndsm: Optional[torch.Tensor],
        mask: ModalityMask,
    ) -> ModelOutputs:
        """Run the full pipeline under a modality mask.

        Tensors for masked-out modalities may be None; if given they are
        ignored entirely (the synthesized replacement is used instead).
        """
        if mask.rgir_available and rgir is None:
            raise ValueError("mask says rgir is available but no rgir tensor was given")
        if mask.ndsm_available and ndsm is None:
            raise ValueError("mask says ndsm is available but no ndsm tensor was given")

        synthesized: dict[str, torch.Tensor] = {}
        if mask.rgir_available:
            check_spatial(rgir)
            rgir_in = rgir
        else:
            check_spatial(ndsm)
            rgir_in = self.translators["rgir"](ndsm)
            synthesized["rgir"] = rgir_in
        if mask.ndsm_available:
            check_spatial(ndsm)
            ndsm_in = ndsm
        else:
            ndsm_in = self.translators["ndsm"](rgir)
            synthesized["ndsm"] = ndsm_in

        pyramids = {"rgir": self.encoders["rgir"](rgir_in), "ndsm": self.encoders["ndsm"](ndsm_in)}
        fused = [
            fuse(pyramids["rgir"][i], pyramids["ndsm"][i])
            for i, fuse in enumerate(self.conv_fusions)
        ]
        if self.token_fusion is not None:
            fused.append(self.token_fusion(pyramids["rgir"][4], pyramids["ndsm"][4]))

        fused_logits = self.decoder(fused)
        out_size = fused_logits.shape[-2:]

        scale_logits: list[torch.Tensor] = []
        unimodal_logits: dict[str, torch.Tensor] = {}
        if self.training and self.scale_heads is not None:
            scale_logits = [head(fused[i], out_size) for i, head in enumerate(self.scale_heads)]
        if self.training and self.unimodal_decoders is not None:
            for m in mask.available:
                unimodal_logits[m] = self.unimodal_decoders[m](pyramids[m])

        return ModelOutputs(
            fused_logits=fused_logits,
            scale_logits=scale_logits,
            unimodal_logits=unimodal_logits,
            synthesized=synthesized,
            mask_used=mask,
        )

    @torch.no_grad()
    def predict(
        self,
        rgir: Optional[torch.Tensor],
        ndsm: Optional[torch.Tensor],
        scenario: Scenario | str,
    ) -> torch.Tensor:
        """Class-id map [B, H, W] under the declared scenario."""
        was_training = self.training
        self.eval()
        try:
            mask = ModalityMask.from_scenario(scenario)
            outputs = self.forward(rgir, ndsm, mask)
            return outputs.fused_logits.argmax(dim=1)
        finally:
            self.train(was_training)
