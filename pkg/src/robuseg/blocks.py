"""Shared nn building blocks: conv stages, token transformer, up/down paths."""

from __future__ import annotations

import math

import torch
import torch.nn as nn


def norm_groups(channels: int, max_groups: int = 8) -> int:
    """Largest group count <= max_groups that divides the channel width."""
    for g in range(min(max_groups, channels), 0, -1):
        if channels % g == 0:
            return g
    return 1


def conv_gn_relu(in_ch: int, out_ch: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1),
        nn.GroupNorm(norm_groups(out_ch), out_ch),
        nn.ReLU(inplace=True),
    )


class DownStage(nn.Module):
    """Halve spatial size with a strided conv, then refine."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.net = nn.Sequential(conv_gn_relu(in_ch, out_ch, stride=2), conv_gn_relu(out_ch, out_ch))

    def forward(self, x):
        return self.net(x)


class UpStage(nn.Module):
    """Double spatial size, then merge with the matching skip tensor."""

    def __init__(self, in_ch: int, skip_ch: int, out_ch: int):
        super().__init__()
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.pre = conv_gn_relu(in_ch, out_ch)
        self.post = conv_gn_relu(out_ch + skip_ch, out_ch)

    def forward(self, x, skip):
        x = self.pre(self.up(x))
        return self.post(torch.cat([x, skip], dim=1))


def sinusoidal_encoding(n_positions: int, dim: int, device, dtype) -> torch.Tensor:
    """Classic sin/cos table over flattened token index, shape [n, dim]."""
    if dim % 2:
        raise ValueError(f"positional encoding needs an even dim, got {dim}")
    pos = torch.arange(n_positions, device=device, dtype=dtype).unsqueeze(1)
    idx = torch.arange(0, dim, 2, device=device, dtype=dtype)
    angles = pos / torch.pow(torch.tensor(10000.0, device=device, dtype=dtype), idx / dim)
    enc = torch.zeros(n_positions, dim, device=device, dtype=dtype)
    enc[:, 0::2] = torch.sin(angles)
    enc[:, 1::2] = torch.cos(angles)
    return enc


class TransformerLayer(nn.Module):
    """Pre-norm self-attention + MLP residual block on [B, N, C] tokens."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float = 2.0):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, tokens, return_attention: bool = False):
        normed = self.norm1(tokens)
        attended, weights = self.attn(normed, normed, normed, need_weights=return_attention)
        tokens = tokens + attended
        tokens = tokens + self.mlp(self.norm2(tokens))
        return tokens, weights


class TransformerStack(nn.Module):
    """A few pre-norm transformer layers with sinusoidal positions added once."""

    def __init__(self, dim: int, depth: int = 2, heads: int = 4, mlp_ratio: float = 2.0):
        super().__init__()
        self.layers = nn.ModuleList(TransformerLayer(dim, heads, mlp_ratio) for _ in range(depth))

    def forward(self, tokens, add_positions: bool = True, return_attention: bool = False):
        b, n, c = tokens.shape
        if add_positions:
            tokens = tokens + sinusoidal_encoding(n, c, tokens.device, tokens.dtype)
        attention = []
        for layer in self.layers:
            tokens, weights = layer(tokens, return_attention=return_attention)
            if return_attention:
                attention.append(weights)
        if return_attention:
            return tokens, attention
        return tokens


def to_tokens(x: torch.Tensor) -> torch.Tensor:
    """[B, C, H, W] -> [B, H*W, C]"""
    return x.flatten(2).transpose(1, 2)


def from_tokens(tokens: torch.Tensor, h: int, w: int) -> torch.Tensor:
    """[B, H*W, C] -> [B, C, H, W]"""
    return tokens.transpose(1, 2).reshape(tokens.shape[0], -1, h, w)


def check_spatial(x: torch.Tensor, divisor: int = 32) -> None:
    h, w = x.shape[-2], x.shape[-1]
    if h % divisor or w % divisor:
        raise ValueError(f"spatial size {h}x{w} must be divisible by {divisor}")


def scaled_channels(width_multiplier: float, base=(32, 64, 128, 256, 512)) -> list[int]:
    """Pyramid channel schedule, rounded to multiples of 4 so attention
    heads and norm groups always fit."""
    return [max(4, int(round(c * width_multiplier / 4)) * 4) for c in base]
