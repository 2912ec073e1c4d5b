"""Patch discriminator judging (condition, candidate) image pairs.

Three stride-2 stages followed by two stride-1 convs give each output logit
a 70x70 receptive field over the concatenated pair; a 64x64 input yields a
6x6 logit grid. Width scales with the rest of the model for desk-size runs.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import norm_groups


class PatchDiscriminator(nn.Module):
    def __init__(self, condition_channels: int, target_channels: int, base_width: int = 64):
        super().__init__()
        b = base_width

        def block(in_ch, out_ch, stride, normalize=True):
            layers = [nn.Conv2d(in_ch, out_ch, 4, stride=stride, padding=1)]
            if normalize:
                layers.append(nn.GroupNorm(norm_groups(out_ch), out_ch))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            return layers

        self.net = nn.Sequential(
            *block(condition_channels + target_channels, b, 2, normalize=False),
            *block(b, 2 * b, 2),
            *block(2 * b, 4 * b, 2),
            *block(4 * b, 8 * b, 1),
            nn.Conv2d(8 * b, 1, 4, stride=1, padding=1),
        )

    def forward(self, condition: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        if condition.shape[-2:] != candidate.shape[-2:]:
            raise ValueError(
                f"condition {tuple(condition.shape[-2:])} and candidate "
                f"{tuple(candidate.shape[-2:])} are not spatially aligned"
            )
        return self.net(torch.cat([condition, candidate], dim=1))
