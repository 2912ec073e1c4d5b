"""Procedural toy scenes used as the canonical desk-scale dataset.

Each tile is a labeled arrangement of geometric regions: a flat ground plane,
rectangular buildings, vegetation blobs, tree disks and a rare class of small
car-like rectangles covering roughly 1-2% of pixels. Spectral channels carry
class-correlated colors, the height channel carries class-correlated
elevations, so each modality is informative on its own and the two are
complementary (color splits vegetation kinds, height splits tall vs flat).
Most cars sit along cleared straight corridors, so the rare class also has a
long-range context cue the local signatures do not carry.
"""

from __future__ import annotations

import numpy as np
import torch

from .data import make_rng
from .types import ModalityBundle

# (red, green, infrared) base colors and mean heights per region kind
_KIND_STYLE = {
    "ground": {"color": (0.45, 0.42, 0.32), "height": 0.03},
    "building": {"color": None, "height": None},  # per-instance
    "low_veg": {"color": (0.30, 0.55, 0.62), "height": 0.07},
    "tree": {"color": (0.18, 0.42, 0.78), "height": None},
    "car": {"color": None, "height": 0.12},
    "clutter": {"color": None, "height": None},
    "water": {"color": (0.12, 0.18, 0.05), "height": 0.0},
    "path": {"color": (0.60, 0.58, 0.50), "height": 0.02},
}

_NONRARE_ORDER = ("ground", "building", "low_veg", "tree", "clutter", "water", "path")


def class_kinds(num_classes: int) -> list[str]:
    """Map class index -> region kind; the rare car-like class sits at
    index 4 when there is room, else at the last index."""
    if not 2 <= num_classes <= 8:
        raise ValueError("num_classes must be in [2, 8]")
    rare = 4 if num_classes > 4 else num_classes - 1
    kinds: list[str | None] = [None] * num_classes
    kinds[rare] = "car"
    fill = iter(_NONRARE_ORDER)
    for i in range(num_classes):
        if kinds[i] is None:
            kinds[i] = next(fill)
    return kinds  # type: ignore[return-value]


def _paint_rect(canvas, cls, y0, x0, h, w):
    canvas[max(0, y0) : y0 + h, max(0, x0) : x0 + w] = cls


def _paint_ellipse(canvas, cls, cy, cx, ry, rx):
    size_y, size_x = canvas.shape
    yy, xx = np.ogrid[:size_y, :size_x]
    mask = ((yy - cy) / max(ry, 1)) ** 2 + ((xx - cx) / max(rx, 1)) ** 2 <= 1.0
    canvas[mask] = cls


def _instance_color(kind: str, rng: np.random.Generator) -> tuple[float, float, float]:
    if kind == "building":
        return (rng.uniform(0.50, 0.75), rng.uniform(0.25, 0.45), rng.uniform(0.20, 0.40))
    if kind == "car":
        return (rng.uniform(0.55, 0.95), rng.uniform(0.55, 0.95), rng.uniform(0.10, 0.35))
    if kind == "clutter":
        return tuple(rng.uniform(0.20, 0.80, size=3))
    return _KIND_STYLE[kind]["color"]


def _instance_height(kind: str, rng: np.random.Generator) -> float:
    if kind == "building":
        return rng.uniform(0.55, 0.90)
    if kind == "tree":
        return rng.uniform(0.30, 0.55)
    if kind == "clutter":
        return rng.uniform(0.00, 0.25)
    return _KIND_STYLE[kind]["height"]


def generate_tile(
    rng: np.random.Generator, tile_size: int, num_classes: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render one scene. Returns (rgir [3,T,T], ndsm [1,T,T], label [T,T])."""
    if tile_size < 64:
        raise ValueError("tile_size must be >= 64")
    kinds = class_kinds(num_classes)
    t = tile_size
    area_factor = (t / 64.0) ** 2

    label = np.zeros((t, t), dtype=np.int64)
    color = np.empty((3, t, t), dtype=np.float32)
    height = np.empty((t, t), dtype=np.float32)
    for c, v in enumerate(_instance_color("ground", rng)):
        color[c].fill(v)
    height.fill(_instance_height("ground", rng))

    def stamp(mask_fn, cls, kind):
        shape_mask = np.zeros((t, t), dtype=bool)
        mask_fn(shape_mask, True)
        label[shape_mask] = cls
        col = _instance_color(kind, rng)
        for c in range(3):
            color[c][shape_mask] = col[c]
        height[shape_mask] = _instance_height(kind, rng)

    # z-order: flat covers first, tall structures later, rare cars on top
    zorder = ("water", "path", "low_veg", "clutter", "building", "tree", "car")
    for kind in zorder:
        if kind not in kinds:
            continue
        cls = kinds.index(kind)
        if kind == "water":
            n = int(rng.integers(0, 2))
            for _ in range(n):
                cy, cx = rng.integers(0, t, size=2)
                ry, rx = rng.integers(t // 8, t // 4 + 1, size=2)
                stamp(lambda m, v, a=(cy, cx, ry, rx): _paint_ellipse(m, v, *a), cls, kind)
        elif kind == "path":
            for _ in range(int(rng.integers(1, 3))):
                width = int(rng.integers(3, 7))
                pos = int(rng.integers(0, t - width))
                if rng.random() < 0.5:
                    stamp(lambda m, v, p=pos, w=width: _paint_rect(m, v, p, 0, w, t), cls, kind)
                else:
                    stamp(lambda m, v, p=pos, w=width: _paint_rect(m, v, 0, p, t, w), cls, kind)
        elif kind == "low_veg":
            for _ in range(max(1, int(round(3 * area_factor)))):
                cy, cx = rng.integers(0, t, size=2)
                ry, rx = rng.integers(6, max(9, t // 8), size=2)
                stamp(lambda m, v, a=(cy, cx, ry, rx): _paint_ellipse(m, v, *a), cls, kind)
        elif kind == "clutter":
            for _ in range(max(1, int(round(2 * area_factor)))):
                cy, cx = rng.integers(0, t, size=2)
                ry, rx = rng.integers(3, 9, size=2)
                stamp(lambda m, v, a=(cy, cx, ry, rx): _paint_ellipse(m, v, *a), cls, kind)
        elif kind == "building":
            for _ in range(max(1, int(round(2 * area_factor)))):
                h = int(rng.integers(t // 8, t // 4 + 1))
                w = int(rng.integers(t // 8, t // 4 + 1))
                y0 = int(rng.integers(0, t - h))
                x0 = int(rng.integers(0, t - w))
                stamp(lambda m, v, a=(y0, x0, h, w): _paint_rect(m, v, *a), cls, kind)
        elif kind == "tree":
            for _ in range(max(1, int(round(4 * area_factor)))):
                cy, cx = rng.integers(0, t, size=2)
                r = int(rng.integers(4, max(6, t // 12)))
                stamp(lambda m, v, a=(cy, cx, r, r): _paint_ellipse(m, v, *a), cls, kind)
        elif kind == "car":
            # one or two straight corridors are cleared back to ground and most
            # cars line up inside them, so the rare class carries a long-range
            # context cue (blob on a clear band) and not just a local signature
            ground = kinds.index("ground")
            corridors = []
            for _ in range(int(rng.integers(1, 3))):
                cwidth = int(rng.integers(12, 19))
                pos = int(rng.integers(0, t - cwidth))
                horizontal = bool(rng.random() < 0.5)
                if horizontal:
                    stamp(lambda m, v, p=pos, w=cwidth: _paint_rect(m, v, p, 0, w, t), ground, "ground")
                else:
                    stamp(lambda m, v, p=pos, w=cwidth: _paint_rect(m, v, 0, p, t, w), ground, "ground")
                corridors.append((horizontal, pos, cwidth))
            target_fraction = rng.uniform(0.010, 0.020)
            n = max(1, int(round(t * t * target_fraction / 50.0)))
            for _ in range(n):
                across = int(rng.integers(4, 7))
                along = int(rng.integers(8, 13))
                if rng.random() < 0.2:
                    h, w = (across, along) if rng.random() < 0.5 else (along, across)
                    y0 = int(rng.integers(0, t - h))
                    x0 = int(rng.integers(0, t - w))
                else:
                    horizontal, pos, cwidth = corridors[int(rng.integers(0, len(corridors)))]
                    h, w = (across, along) if horizontal else (along, across)
                    lat = pos + int(rng.integers(0, max(1, cwidth - (h if horizontal else w))))
                    lon = int(rng.integers(0, t - (w if horizontal else h)))
                    y0, x0 = (lat, lon) if horizontal else (lon, lat)
                stamp(lambda m, v, a=(y0, x0, h, w): _paint_rect(m, v, *a), cls, kind)

    rgir = np.clip(color + rng.normal(0.0, 0.03, size=color.shape), 0.0, 1.0).astype(np.float32)
    ndsm = np.clip(height + rng.normal(0.0, 0.015, size=height.shape), 0.0, 1.0).astype(
        np.float32
    )[None]
    return rgir, ndsm, label


def synth_dataset(
    seed: int, n_tiles: int, tile_size: int, num_classes: int = 6, id_offset: int = 0
) -> list[ModalityBundle]:
    """Deterministic list of generated tiles; tile i only depends on
    (seed, id_offset + i), so split sizes can change without reshuffling."""
    bundles = []
    for i in range(n_tiles):
        index = id_offset + i
        rgir, ndsm, label = generate_tile(make_rng(seed, index), tile_size, num_classes)
        bundles.append(
            ModalityBundle(
                rgir=torch.from_numpy(rgir),
                ndsm=torch.from_numpy(ndsm),
                label=torch.from_numpy(label),
                sample_id=f"tile_{index:03d}",
            )
        )
    return bundles
