"""Matplotlib renderings of training logs and evaluation reports."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

# no Date chunk in the png so identical csvs render byte-identical files
_PNG_KWARGS = {"dpi": 120, "metadata": {"Date": None}}


def _read_csv(path: Path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"csv not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"csv has no data rows: {path}")
    return rows


def plot_loss_curves(loss_csv: Path, out_path: Path) -> Path:
    """Line plot of every loss component over steps."""
    rows = _read_csv(loss_csv)
    steps = [int(r["step"]) for r in rows]
    fields = [k for k in rows[0] if k != "step"]
    fig, ax = plt.subplots(figsize=(8, 5))
    for field in fields:
        values = [float(r[field]) for r in rows]
        # skip components that never move off zero (e.g. adv terms in ae mode)
        if any(v != 0.0 for v in values):
            ax.plot(steps, values, label=field, linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, **_PNG_KWARGS)
    plt.close(fig)
    return out_path


def plot_scenario_f1(eval_csv: Path, out_path: Path) -> Path:
    """Grouped bar chart: per-class F1 for each scenario in an eval report."""
    rows = _read_csv(eval_csv)
    scenarios: list[str] = []
    classes: list[str] = []
    values: dict[tuple[str, str], float] = {}
    for r in rows:
        if r["class"] == "MEAN":
            continue
        if r["scenario"] not in scenarios:
            scenarios.append(r["scenario"])
        if r["class"] not in classes:
            classes.append(r["class"])
        values[(r["scenario"], r["class"])] = float(r["f1"])
    if not values:
        raise ValueError(f"no per-class rows in {eval_csv}")

    width = 0.8 / len(scenarios)
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(classes)), 5))
    for si, scenario in enumerate(scenarios):
        xs = [ci + si * width for ci in range(len(classes))]
        ys = [values.get((scenario, c), float("nan")) for c in classes]
        ax.bar(xs, ys, width=width, label=scenario)
    ax.set_xticks([ci + width * (len(scenarios) - 1) / 2 for ci in range(len(classes))])
    ax.set_xticklabels(classes, rotation=30, ha="right")
    ax.set_ylabel("F1")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, **_PNG_KWARGS)
    plt.close(fig)
    return out_path


def plot_val_curves(eval_csv: Path, out_path: Path) -> Path:
    """Validation mF1 per scenario over training steps (from the run log)."""
    rows = _read_csv(eval_csv)
    by_scenario: dict[str, list[tuple[int, float]]] = {}
    for r in rows:
        by_scenario.setdefault(r["scenario"], []).append((int(r["step"]), float(r["mf1"])))
    fig, ax = plt.subplots(figsize=(8, 5))
    for scenario, pts in by_scenario.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=scenario)
    ax.set_xlabel("step")
    ax.set_ylabel("val mF1")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, **_PNG_KWARGS)
    plt.close(fig)
    return out_path
