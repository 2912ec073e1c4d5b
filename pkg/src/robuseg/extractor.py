"""Per-modality pyramid encoders and the missing-modality image translator.

Both share one architecture template: five stride-2 conv stages producing a
feature pyramid at 1/2 .. 1/32 resolution, with a small token transformer
refining the deepest level so the representation sees the whole scene, not
just local texture. The translator bolts a UNet-style decoder with skip
connections onto that template and emits the target modality in [0, 1].
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import (
    DownStage,
    TransformerStack,
    UpStage,
    check_spatial,
    conv_gn_relu,
    from_tokens,
    to_tokens,
)


class PyramidEncoder(nn.Module):
    """Five-level conv feature pyramid with a transformer-refined bottleneck.

    Levels 1-4 come straight from conv stages; level 5 additionally passes
    through the token transformer unless it is disabled (plain-conv ablation).
    """

    def __init__(
        self,
        in_channels: int,
        channels: list[int],
        transformer_depth: int = 2,
        transformer_heads: int = 4,
        use_transformer: bool = True,
    ):
        super().__init__()
        if len(channels) != 5:
            raise ValueError(f"need a 5-level channel schedule, got {channels}")
        self.channels = list(channels)
        self.stages = nn.ModuleList()
        prev = in_channels
        for ch in channels:
            self.stages.append(DownStage(prev, ch))
            prev = ch
        self.bottleneck = (
            TransformerStack(channels[-1], transformer_depth, transformer_heads)
            if use_transformer
            else None
        )

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        check_spatial(image)
        levels = []
        x = image
        for stage in self.stages:
            x = stage(x)
            levels.append(x)
        if self.bottleneck is not None:
            deep = levels[-1]
            h, w = deep.shape[-2:]
            tokens = self.bottleneck(to_tokens(deep))
            levels[-1] = from_tokens(tokens, h, w)
        return levels


class PyramidDecoder(nn.Module):
    """UNet-style decoder: walk the pyramid back up to full resolution.

    Consumes five levels (deepest drives the path, shallower ones join as
    skips) and ends in a 1x1 projection. With bounded=True the output is
    squashed to [0, 1] for image synthesis; otherwise raw maps come out,
    e.g. segmentation logits.
    """

    def __init__(self, channels: list[int], out_channels: int, bounded: bool = False):
        super().__init__()
        self.ups = nn.ModuleList(
            UpStage(channels[i + 1], channels[i], channels[i]) for i in reversed(range(4))
        )
        self.final_up = nn.Upsample(scale_factor=2, mode="nearest")
        self.final_conv = conv_gn_relu(channels[0], channels[0])
        self.head = nn.Conv2d(channels[0], out_channels, 1)
        self.bounded = bounded

    def forward(self, levels: list[torch.Tensor]) -> torch.Tensor:
        x = levels[4]
        for up, skip_index in zip(self.ups, (3, 2, 1, 0)):
            x = up(x, levels[skip_index])
        x = self.head(self.final_conv(self.final_up(x)))
        return torch.sigmoid(x) if self.bounded else x


class ModalityTranslator(nn.Module):
    """Synthesize one modality from the other (encoder-bottleneck-decoder)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        channels: list[int],
        transformer_depth: int = 2,
        transformer_heads: int = 4,
        use_transformer: bool = True,
    ):
        super().__init__()
        self.encoder = PyramidEncoder(
            in_channels, channels, transformer_depth, transformer_heads, use_transformer
        )
        self.decoder = PyramidDecoder(channels, out_channels, bounded=True)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.encoder(image))
