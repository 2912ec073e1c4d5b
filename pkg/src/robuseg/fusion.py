"""Fusing the two modality pyramids into one representation per scale.

Scales 1-4 fuse locally: channel-concatenate and run a short conv series.
The deepest scale fuses globally: tokens from both modalities attend to each
other in one transformer pass, then the two streams are averaged back onto
the spatial grid. Auxiliary 1x1 heads expose coarse-scale predictions for
deep supervision.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import TransformerStack, conv_gn_relu, from_tokens, sinusoidal_encoding, to_tokens


class ConvFusion(nn.Module):
    """Concat two same-shape feature maps and project 2C -> C.

    depth counts conv layers; all but the last carry norm + activation, the
    last is a plain linear projection.
    """

    def __init__(self, channels: int, depth: int = 2):
        super().__init__()
        if depth < 1:
            raise ValueError("depth must be >= 1")
        layers = []
        in_ch = 2 * channels
        for _ in range(depth - 1):
            layers.append(conv_gn_relu(in_ch, channels))
            in_ch = channels
        layers.append(nn.Conv2d(in_ch, channels, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, x_a: torch.Tensor, x_b: torch.Tensor) -> torch.Tensor:
        if x_a.shape != x_b.shape:
            raise ValueError(f"fusion inputs disagree: {tuple(x_a.shape)} vs {tuple(x_b.shape)}")
        return self.net(torch.cat([x_a, x_b], dim=1))


class TokenFusion(nn.Module):
    """Attention fusion for the deepest scale.

    Both feature maps are flattened to tokens, tagged with a learned
    modality embedding plus shared positional encoding, concatenated along
    the token axis and run through a transformer. The two streams are then
    averaged position-wise back into a single [C, h, w] map, preserving
    spatial registration while attention mixes information globally.
    """

    def __init__(self, channels: int, depth: int = 2, heads: int = 4):
        super().__init__()
        self.modality_embedding = nn.Parameter(torch.randn(2, channels) * 0.02)
        self.transformer = TransformerStack(channels, depth, heads)

    def forward(
        self, x_a: torch.Tensor, x_b: torch.Tensor, return_attention: bool = False
    ) -> torch.Tensor:
        if x_a.shape != x_b.shape:
            raise ValueError(f"fusion inputs disagree: {tuple(x_a.shape)} vs {tuple(x_b.shape)}")
        h, w = x_a.shape[-2:]
        n = h * w
        positions = sinusoidal_encoding(n, x_a.shape[1], x_a.device, x_a.dtype)
        embed = self.modality_embedding.to(x_a.dtype)
        tokens_a = to_tokens(x_a) + positions + embed[0]
        tokens_b = to_tokens(x_b) + positions + embed[1]
        tokens = torch.cat([tokens_a, tokens_b], dim=1)
        out = self.transformer(tokens, add_positions=False, return_attention=return_attention)
        if return_attention:
            tokens, attention = out
        else:
            tokens = out
        fused = from_tokens((tokens[:, :n] + tokens[:, n:]) / 2, h, w)
        return (fused, attention) if return_attention else fused


class ScaleHead(nn.Module):
    """1x1 projection to class logits, bilinearly upsampled to full size."""

    def __init__(self, channels: int, num_classes: int):
        super().__init__()
        self.proj = nn.Conv2d(channels, num_classes, 1)

    def forward(self, features: torch.Tensor, out_size: tuple[int, int]) -> torch.Tensor:
        logits = self.proj(features)
        if logits.shape[-2:] == tuple(out_size):
            return logits
        return F.interpolate(logits, size=out_size, mode="bilinear", align_corners=False)
