"""Scenario-wise evaluation and checkpoint comparison reports."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import torch

from .metrics import ConfusionMatrix, format_pp, format_relative, relative_delta
from .types import ModalityBundle, Scenario

ALL_SCENARIOS = tuple(s.value for s in Scenario)


def evaluate_model(
    model,
    patches: Sequence[ModalityBundle],
    num_classes: int,
    ignore_index: int = 255,
    exclude: tuple[int, ...] = (),
    scenarios: Sequence[str] = ALL_SCENARIOS,
    batch_size: int = 8,
) -> dict[str, dict]:
    """Run the model over patches under each scenario and score it.

    Returns {scenario: {"mf1", "miou", "f1_per_class", "iou_per_class",
    "confusion"}}. Means honor the exclude indices.
    """
    if not patches:
        raise ValueError("no patches to evaluate")
    results = {}
    for scenario in scenarios:
        cm = ConfusionMatrix(num_classes, ignore_index=ignore_index)
        for start in range(0, len(patches), batch_size):
            chunk = patches[start : start + batch_size]
            rgir = torch.stack([p.rgir for p in chunk])
            ndsm = torch.stack([p.ndsm for p in chunk])
            pred = model.predict(rgir, ndsm, scenario)
            for p, patch in zip(pred, chunk):
                cm.update(p, patch.label)
        results[scenario] = {
            "mf1": cm.mf1(exclude=exclude),
            "miou": cm.miou(exclude=exclude),
            "f1_per_class": cm.f1_per_class(),
            "iou_per_class": cm.iou_per_class(),
            "confusion": cm.counts.copy(),
        }
    return results


def write_eval_report(
    path: Path,
    results: dict[str, dict],
    class_names: Sequence[str],
) -> None:
    """Persist per-scenario scores as CSV: one row per (scenario, class) plus means."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "class", "f1", "iou"])
        for scenario, scores in results.items():
            for i, name in enumerate(class_names):
                writer.writerow(
                    [scenario, name, f"{scores['f1_per_class'][i]:.6f}", f"{scores['iou_per_class'][i]:.6f}"]
                )
            writer.writerow([scenario, "MEAN", f"{scores['mf1']:.6f}", f"{scores['miou']:.6f}"])


def format_eval_table(results: dict[str, dict], class_names: Sequence[str]) -> str:
    """Human-readable per-class F1 table, scenarios as columns."""
    scenarios = list(results)
    name_w = max(len(n) for n in list(class_names) + ["MEAN F1", "MEAN IoU"])
    header = "class".ljust(name_w) + "".join(s.rjust(14) for s in scenarios)
    lines = [header, "-" * len(header)]
    for i, name in enumerate(class_names):
        row = name.ljust(name_w)
        for s in scenarios:
            row += f"{results[s]['f1_per_class'][i]:14.4f}"
        lines.append(row)
    for label, key in (("MEAN F1", "mf1"), ("MEAN IoU", "miou")):
        row = label.ljust(name_w)
        for s in scenarios:
            row += f"{results[s][key]:14.4f}"
        lines.append(row)
    return "\n".join(lines)


def compare_results(
    baseline: dict[str, dict],
    candidate: dict[str, dict],
    class_names: Sequence[str],
) -> str:
    """Relative and absolute deltas of candidate over baseline, per scenario."""
    lines = []
    for scenario in baseline:
        if scenario not in candidate:
            continue
        base_mf1 = baseline[scenario]["mf1"] * 100.0
        cand_mf1 = candidate[scenario]["mf1"] * 100.0
        rel = format_relative(relative_delta(base_mf1, cand_mf1))
        pp = format_pp(cand_mf1 - base_mf1)
        lines.append(
            f"{scenario}: mF1 {base_mf1:.2f} -> {cand_mf1:.2f} ({rel}, {pp})"
        )
        for i, name in enumerate(class_names):
            b = baseline[scenario]["f1_per_class"][i] * 100.0
            c = candidate[scenario]["f1_per_class"][i] * 100.0
            delta = c - b
            lines.append(f"  {name}: {b:.2f} -> {c:.2f} ({format_pp(delta)})")
    return "\n".join(lines)


def load_patches_for_eval(
    root_dir: Path,
    split: str,
    patch_size: int,
    num_classes: int,
    ignore_index: int = 255,
    class_names: Optional[tuple[str, ...]] = None,
) -> list[ModalityBundle]:
    """Non-overlapping patches from a stored split (stride = patch size)."""
    from .data import extract_patches, load_tiles
    from .types import DatasetSpec

    spec = DatasetSpec(
        root_dir=Path(root_dir),
        split=split,
        patch_size=patch_size,
        stride=patch_size,
        num_classes=num_classes,
        ignore_index=ignore_index,
        class_names=class_names or tuple(f"class_{i}" for i in range(num_classes)),
    )
    tiles = load_tiles(spec)
    return [p for t in tiles for p in extract_patches(t, patch_size, patch_size)]
