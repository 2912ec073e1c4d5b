"""Dataset ingestion, patch extraction, augmentation and modality-mask sampling.

On-disk layout (all rasters stored as .npy for lossless round trips):

    <root>/
        normalization.txt          key=value per-channel min/max, computed on train
        <split>/
            manifest.txt           one tile id per line, fixes split membership
            <tile_id>/
                rgir.npy           [3, H, W] float32 (raw, unnormalized)
                ndsm.npy           [1, H, W] float32 (raw, unnormalized)
                label.npy          [H, W] integer class ids / ignore sentinel

Loading applies per-channel min-max normalization using the persisted train
statistics, so every ModalityBundle carries values in [0, 1].
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .types import (
    MODALITIES,
    NDSM_CHANNELS,
    RGIR_CHANNELS,
    TRAINING_MASKS,
    DatasetSpec,
    ModalityBundle,
    ModalityMask,
)

STATS_FILENAME = "normalization.txt"
MANIFEST_FILENAME = "manifest.txt"
RASTER_FILES = {"rgir": "rgir.npy", "ndsm": "ndsm.npy", "label": "label.npy"}

_CHANNEL_KEYS = tuple(
    f"{m}.{c}" for m, n in (("rgir", RGIR_CHANNELS), ("ndsm", NDSM_CHANNELS)) for c in range(n)
)


def make_rng(seed: int, worker_index: int = 0) -> np.random.Generator:
    """Derive an independent stream from (seed, worker_index).

    Parallel consumers must each derive their own stream this way so results
    do not depend on scheduling order.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, worker_index]))


# ---------------------------------------------------------------------------
# normalization statistics
# ---------------------------------------------------------------------------


def compute_normalization_stats(tiles: list[dict[str, np.ndarray]]) -> dict[str, tuple[float, float]]:
    """Per-channel (min, max) over a list of raw tile dicts."""
    stats = {}
    for key in _CHANNEL_KEYS:
        modality, channel = key.split(".")
        arrays = [t[modality][int(channel)] for t in tiles]
        stats[key] = (
            float(min(a.min() for a in arrays)),
            float(max(a.max() for a in arrays)),
        )
    return stats


def save_normalization_stats(path: Path, stats: dict[str, tuple[float, float]]) -> None:
    lines = []
    for key in _CHANNEL_KEYS:
        lo, hi = stats[key]
        lines.append(f"{key}.min={lo!r}")
        lines.append(f"{key}.max={hi!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_normalization_stats(path: Path) -> dict[str, tuple[float, float]]:
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, raw = line.partition("=")
        values[key.strip()] = float(raw)
    stats = {}
    for key in _CHANNEL_KEYS:
        try:
            stats[key] = (values[f"{key}.min"], values[f"{key}.max"])
        except KeyError as exc:
            raise ValueError(f"{path}: missing normalization entry for {exc.args[0]}") from None
    return stats


def _normalize(raw: np.ndarray, modality: str, stats: dict[str, tuple[float, float]]) -> np.ndarray:
    out = np.empty_like(raw, dtype=np.float32)
    for c in range(raw.shape[0]):
        lo, hi = stats[f"{modality}.{c}"]
        span = hi - lo
        if span <= 0:
            out[c] = 0.0
        else:
            out[c] = np.clip((raw[c] - lo) / span, 0.0, 1.0)
    return out


# ---------------------------------------------------------------------------
# tile io
# ---------------------------------------------------------------------------


def _read_raw_tile(split_dir: Path, tile_id: str) -> dict[str, np.ndarray]:
    tile_dir = split_dir / tile_id
    raw = {}
    for name, filename in RASTER_FILES.items():
        path = tile_dir / filename
        if not path.is_file():
            raise FileNotFoundError(f"tile '{tile_id}': missing {name} raster at {path}")
        arr = np.load(path)
        if name == "label":
            if arr.ndim != 2:
                raise ValueError(f"tile '{tile_id}': label must be 2-d, got shape {arr.shape}")
            raw[name] = arr.astype(np.int64)
        else:
            want = RGIR_CHANNELS if name == "rgir" else NDSM_CHANNELS
            if arr.ndim != 3 or arr.shape[0] != want:
                raise ValueError(
                    f"tile '{tile_id}': {name} must be [{want}, H, W], got shape {arr.shape}"
                )
            raw[name] = arr.astype(np.float32)
    shapes = {raw["rgir"].shape[1:], raw["ndsm"].shape[1:], raw["label"].shape}
    if len(shapes) != 1:
        raise ValueError(
            f"tile '{tile_id}': raster shapes disagree: rgir {raw['rgir'].shape[1:]}, "
            f"ndsm {raw['ndsm'].shape[1:]}, label {raw['label'].shape}"
        )
    return raw


def write_tile(
    split_dir: Path,
    tile_id: str,
    rgir: np.ndarray,
    ndsm: np.ndarray,
    label: np.ndarray,
) -> None:
    tile_dir = Path(split_dir) / tile_id
    tile_dir.mkdir(parents=True, exist_ok=True)
    np.save(tile_dir / RASTER_FILES["rgir"], rgir.astype(np.float32))
    np.save(tile_dir / RASTER_FILES["ndsm"], ndsm.astype(np.float32))
    np.save(tile_dir / RASTER_FILES["label"], label.astype(np.int64))


def read_manifest(split_dir: Path) -> list[str]:
    path = Path(split_dir) / MANIFEST_FILENAME
    if not path.is_file():
        raise FileNotFoundError(f"missing manifest at {path}")
    ids = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if not ids:
        raise ValueError(f"manifest {path} lists no tiles")
    return ids


def write_manifest(split_dir: Path, tile_ids: list[str]) -> None:
    path = Path(split_dir) / MANIFEST_FILENAME
    path.write_text("\n".join(tile_ids) + "\n")


def load_tiles(spec: DatasetSpec) -> list[ModalityBundle]:
    """Load every manifest tile of a split as a normalized ModalityBundle.

    Normalization statistics come from the persisted file at the dataset root.
    If the file is absent they are computed from the train split and written,
    so that val/test loads always reuse the train statistics.
    """
    split_dir = spec.split_dir
    if not split_dir.is_dir():
        raise FileNotFoundError(f"split directory not found: {split_dir}")
    tile_ids = sorted(read_manifest(split_dir))
    raw_tiles = {tid: _read_raw_tile(split_dir, tid) for tid in tile_ids}

    stats_path = spec.root_dir / STATS_FILENAME
    if stats_path.is_file():
        stats = load_normalization_stats(stats_path)
    elif spec.split == "train":
        stats = compute_normalization_stats(list(raw_tiles.values()))
        save_normalization_stats(stats_path, stats)
    else:
        raise FileNotFoundError(
            f"{stats_path} not found; load the train split first so the "
            f"normalization statistics get computed and persisted"
        )

    bundles = []
    for tid in tile_ids:
        raw = raw_tiles[tid]
        bundle = ModalityBundle(
            rgir=torch.from_numpy(_normalize(raw["rgir"], "rgir", stats)),
            ndsm=torch.from_numpy(_normalize(raw["ndsm"], "ndsm", stats)),
            label=torch.from_numpy(raw["label"]),
            sample_id=tid,
        )
        bundle.validate_labels(spec.num_classes, spec.ignore_index)
        bundles.append(bundle)
    return bundles


# ---------------------------------------------------------------------------
# patch extraction
# ---------------------------------------------------------------------------


def window_starts(dim: int, patch_size: int, stride: int) -> list[int]:
    """Sliding-window start offsets with the last window shifted back flush."""
    if patch_size > dim:
        raise ValueError(f"patch_size {patch_size} exceeds dimension {dim}")
    starts = list(range(0, dim - patch_size + 1, stride))
    if starts[-1] != dim - patch_size:
        starts.append(dim - patch_size)
    return starts


def extract_patches(tile: ModalityBundle, patch_size: int, stride: int) -> list[ModalityBundle]:
    """Cut a tile into patch_size x patch_size windows in row-major order.

    Windows that would overrun the border are shifted back to end flush with
    it, so every patch has the exact requested size and every pixel is
    covered at least once.
    """
    h, w = tile.height, tile.width
    if patch_size > min(h, w):
        raise ValueError(
            f"tile '{tile.sample_id}' is {h}x{w}, smaller than patch size {patch_size}"
        )
    patches = []
    for y in window_starts(h, patch_size, stride):
        for x in window_starts(w, patch_size, stride):
            patches.append(
                ModalityBundle(
                    rgir=tile.rgir[:, y : y + patch_size, x : x + patch_size].clone(),
                    ndsm=tile.ndsm[:, y : y + patch_size, x : x + patch_size].clone(),
                    label=tile.label[y : y + patch_size, x : x + patch_size].clone(),
                    sample_id=f"{tile.sample_id}_y{y}_x{x}",
                )
            )
    return patches


# ---------------------------------------------------------------------------
# augmentation and mask sampling
# ---------------------------------------------------------------------------


def augment(bundle: ModalityBundle, rng: np.random.Generator) -> ModalityBundle:
    """Apply one random geometric transform jointly to all three rasters.

    Horizontal flip (p=0.5), vertical flip (p=0.5), then rotation by k*90
    degrees with k uniform in 0..3. Purely geometric, so labels stay exact
    (no interpolation) and pixel triples move together.
    """
    hflip = rng.random() < 0.5
    vflip = rng.random() < 0.5
    k = int(rng.integers(0, 4))

    def apply(t: torch.Tensor) -> torch.Tensor:
        if hflip:
            t = torch.flip(t, dims=[-1])
        if vflip:
            t = torch.flip(t, dims=[-2])
        if k:
            t = torch.rot90(t, k, dims=(-2, -1))
        return t.contiguous()

    return ModalityBundle(
        rgir=apply(bundle.rgir),
        ndsm=apply(bundle.ndsm),
        label=apply(bundle.label),
        sample_id=bundle.sample_id,
    )


def sample_modality_mask(rng: np.random.Generator) -> ModalityMask:
    """Draw one of the three training masks uniformly."""
    return TRAINING_MASKS[int(rng.integers(0, 3))]
