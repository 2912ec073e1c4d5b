"""Training loop: masked multimodal steps, adversarial alternation, logging.

Every step samples a batch of augmented patches, draws one modality mask per
sample, runs the masked forward pass and takes a single optimizer step over
all non-discriminator parameters. In cGAN mode each step first updates the
discriminator on detached synthesized images, then the generator sees the
refreshed discriminator inside the main objective.
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from .config import RunConfig, save_run_config
from .data import augment, extract_patches, load_tiles, make_rng, sample_modality_mask
from .evaluate import evaluate_model
from .losses import LossBreakdown, composite_loss, inverse_log_frequency_weights
from .model import ModelConfig, MultimodalSegmenter
from .types import ModalityBundle, ModalityMask

LOSS_CSV_FIELDS = ("step",) + LossBreakdown.CSV_FIELDS
EVAL_CSV_FIELDS = ("step", "scenario", "mf1", "miou")


class NonFiniteLossError(RuntimeError):
    def __init__(self, step: int, breakdown: dict[str, float]):
        parts = ", ".join(f"{k}={v:.4g}" for k, v in breakdown.items())
        super().__init__(f"non-finite loss at step {step}: {parts}")
        self.step = step
        self.breakdown = breakdown


class RunLock:
    """Exclusive ownership of a run directory while training."""

    def __init__(self, run_dir: Path):
        self.path = Path(run_dir) / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                f"run directory is locked by another training process: {self.path} "
                f"(delete the lock file if that process is gone)"
            ) from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def class_pixel_counts(bundles: list[ModalityBundle], num_classes: int, ignore_index: int):
    counts = torch.zeros(num_classes, dtype=torch.long)
    for b in bundles:
        valid = b.label[b.label != ignore_index]
        counts += torch.bincount(valid, minlength=num_classes)
    return counts.tolist()


def stack_bundles(bundles: list[ModalityBundle]):
    rgir = torch.stack([b.rgir for b in bundles])
    ndsm = torch.stack([b.ndsm for b in bundles])
    label = torch.stack([b.label for b in bundles])
    return rgir, ndsm, label


def save_checkpoint(
    path: Path,
    model: MultimodalSegmenter,
    main_optimizer: torch.optim.Optimizer,
    disc_optimizer: Optional[torch.optim.Optimizer],
    step: int,
    run_config: RunConfig,
    best_val_mf1: float,
    normalization_stats: Optional[dict] = None,
) -> None:
    payload = {
        "model_state": model.state_dict(),
        "main_optimizer_state": main_optimizer.state_dict(),
        "disc_optimizer_state": disc_optimizer.state_dict() if disc_optimizer else None,
        "step": step,
        "run_config": run_config.to_dict(),
        "best_val_mf1": best_val_mf1,
        "normalization_stats": normalization_stats,
        "torch_rng_state": torch.get_rng_state(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return torch.load(path, map_location="cpu", weights_only=False)


def model_from_checkpoint(payload: dict) -> tuple[MultimodalSegmenter, RunConfig]:
    from .config import run_config_from_dict

    run_config = run_config_from_dict(payload["run_config"])
    model = MultimodalSegmenter(run_config.model)
    model.load_state_dict(payload["model_state"])
    return model, run_config


class Trainer:
    def __init__(
        self,
        config: RunConfig,
        train_patches: Optional[list[ModalityBundle]] = None,
        val_patches: Optional[list[ModalityBundle]] = None,
        normalization_stats: Optional[dict] = None,
    ):
        self.config = config
        torch.manual_seed(config.seed)
        self.model = MultimodalSegmenter(config.model)
        self.rng = make_rng(config.seed, 1)

        if train_patches is None:
            train_patches, val_patches, normalization_stats = self._load_data()
        self.train_patches = train_patches
        self.val_patches = val_patches or []
        self.normalization_stats = normalization_stats
        if not self.train_patches:
            raise ValueError("no training patches")

        if config.loss.auto_class_weights and config.loss.class_weights is None:
            counts = class_pixel_counts(
                self.train_patches, config.data.num_classes, config.data.ignore_index
            )
            weights = inverse_log_frequency_weights(counts)
        else:
            weights = config.loss.class_weights
        self.loss_cfg = config.loss_config(weights)

        opt = config.optim
        groups = [
            {"params": self.model.segmentation_parameters(), "betas": opt.seg_betas},
            {"params": self.model.translator_parameters(), "betas": opt.gan_betas},
        ]
        self.main_optimizer = torch.optim.Adam(groups, lr=opt.lr)
        disc_params = self.model.discriminator_parameters()
        self.disc_optimizer = (
            torch.optim.Adam(disc_params, lr=opt.lr, betas=opt.gan_betas) if disc_params else None
        )
        self.step = 0
        self.best_val_mf1 = float("-inf")

    def _load_data(self):
        data = self.config.data
        train_tiles = load_tiles(data.spec("train"))
        train = [
            p
            for tile in train_tiles
            for p in extract_patches(tile, data.patch_size, data.stride)
        ]
        try:
            val_tiles = load_tiles(data.spec("val"))
            val = [
                p
                for tile in val_tiles
                for p in extract_patches(tile, data.patch_size, data.stride)
            ]
        except FileNotFoundError:
            val = []
        from .data import STATS_FILENAME, load_normalization_stats

        stats_path = Path(data.root_dir) / STATS_FILENAME
        stats = load_normalization_stats(stats_path) if stats_path.is_file() else None
        return train, val, stats

    # -- one optimization step ----------------------------------------------

    def _sample_batch(self):
        idx = self.rng.integers(0, len(self.train_patches), size=self.config.batch_size)
        batch = []
        for i in idx:
            patch = self.train_patches[int(i)]
            if self.config.data.augment:
                patch = augment(patch, self.rng)
            batch.append((patch, sample_modality_mask(self.rng)))
        return batch

    def _discriminator_step(self, outputs, rgir, ndsm, mask: ModalityMask) -> torch.Tensor:
        """One update on detached synthesized images; returns the loss value."""
        disc_loss = None
        real_images = {"rgir": rgir, "ndsm": ndsm}
        for modality, synth in outputs.synthesized.items():
            condition = real_images[mask.available[0]]
            disc = self.model.discriminators[modality]
            real_logits = disc(condition, real_images[modality])
            fake_logits = disc(condition, synth.detach())
            term = 0.5 * (
                F.binary_cross_entropy_with_logits(real_logits, torch.ones_like(real_logits))
                + F.binary_cross_entropy_with_logits(fake_logits, torch.zeros_like(fake_logits))
            )
            disc_loss = term if disc_loss is None else disc_loss + term
        if disc_loss is None:
            return torch.zeros(())
        self.disc_optimizer.zero_grad()
        disc_loss.backward()
        torch.nn.utils.clip_grad_norm_(
            self.model.discriminator_parameters(), self.config.optim.grad_clip
        )
        self.disc_optimizer.step()
        return disc_loss.detach()

    def training_step(self) -> dict[str, float]:
        """Sample a batch with per-sample masks, update, return the loss row."""
        self.model.train()
        batch = self._sample_batch()
        by_mask: dict[ModalityMask, list[ModalityBundle]] = defaultdict(list)
        for patch, mask in batch:
            by_mask[mask].append(patch)

        merged = {name: 0.0 for name in LossBreakdown.CSV_FIELDS}
        total_loss = None
        n = len(batch)
        for mask, patches in by_mask.items():
            rgir, ndsm, label = stack_bundles(patches)
            outputs = self.model(rgir, ndsm, mask)
            if self.loss_cfg.mode == "cgan" and outputs.synthesized:
                adv_d = self._discriminator_step(outputs, rgir, ndsm, mask)
            else:
                adv_d = torch.zeros(())
            breakdown = composite_loss(
                outputs,
                rgir,
                ndsm,
                label,
                mask,
                self.loss_cfg,
                discriminators=self.model.discriminators,
            )
            weight = len(patches) / n
            group_total = breakdown.total * weight
            total_loss = group_total if total_loss is None else total_loss + group_total
            for name, value in breakdown.as_floats().items():
                merged[name] += value * weight
            merged["adv_d"] += float(adv_d) * weight

        self.step += 1
        if not all(np.isfinite(v) for v in merged.values()):
            self.main_optimizer.zero_grad()
            raise NonFiniteLossError(self.step, merged)

        self.main_optimizer.zero_grad()
        total_loss.backward()
        torch.nn.utils.clip_grad_norm_(
            self.model.segmentation_parameters() + self.model.translator_parameters(),
            self.config.optim.grad_clip,
        )
        self.main_optimizer.step()
        return {"step": self.step, **merged}

    # -- full run -----------------------------------------------------------

    def evaluate_val(self):
        if not self.val_patches:
            return None
        return evaluate_model(
            self.model,
            self.val_patches,
            num_classes=self.config.data.num_classes,
            ignore_index=self.config.data.ignore_index,
            exclude=self.config.data.excluded_indices(),
        )

    def resume(self, checkpoint_path: Path) -> None:
        payload = load_checkpoint(checkpoint_path)
        self.model.load_state_dict(payload["model_state"])
        self.main_optimizer.load_state_dict(payload["main_optimizer_state"])
        if self.disc_optimizer is not None and payload["disc_optimizer_state"]:
            self.disc_optimizer.load_state_dict(payload["disc_optimizer_state"])
        self.step = payload["step"]
        self.best_val_mf1 = payload.get("best_val_mf1", float("-inf"))
        if payload.get("torch_rng_state") is not None:
            torch.set_rng_state(payload["torch_rng_state"])
        # replay the data stream up to the checkpointed step
        self.rng = make_rng(self.config.seed, 1)
        for _ in range(self.step):
            self._sample_batch()

    def run(self, run_dir: Optional[Path] = None, quiet: bool = False) -> dict:
        """Train to max_steps, logging losses and periodic val metrics."""
        run_dir = Path(run_dir if run_dir is not None else self.config.out_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        loss_csv = run_dir / "loss.csv"
        eval_csv = run_dir / "eval.csv"

        with RunLock(run_dir):
            save_run_config(run_dir / "config.yaml", self.config)
            fresh = self.step == 0
            with open(loss_csv, "w" if fresh else "a", newline="") as loss_fh, open(
                eval_csv, "w" if fresh else "a", newline=""
            ) as eval_fh:
                loss_writer = csv.DictWriter(loss_fh, fieldnames=LOSS_CSV_FIELDS)
                eval_writer = csv.DictWriter(eval_fh, fieldnames=EVAL_CSV_FIELDS)
                if fresh:
                    loss_writer.writeheader()
                    eval_writer.writeheader()

                while self.step < self.config.max_steps:
                    row = self.training_step()
                    loss_writer.writerow({k: row[k] for k in LOSS_CSV_FIELDS})
                    if self.step % self.config.eval_every == 0 or self.step == self.config.max_steps:
                        self._eval_and_checkpoint(run_dir, eval_writer, quiet)
                        loss_fh.flush()
                        eval_fh.flush()
                    if not quiet and self.step % 50 == 0:
                        print(f"step {self.step}: total={row['total']:.4f}")

            save_checkpoint(
                run_dir / "last.ckpt",
                self.model,
                self.main_optimizer,
                self.disc_optimizer,
                self.step,
                self.config,
                self.best_val_mf1,
                self.normalization_stats,
            )
        return {"run_dir": run_dir, "steps": self.step, "best_val_mf1": self.best_val_mf1}

    def _eval_and_checkpoint(self, run_dir: Path, eval_writer, quiet: bool) -> None:
        results = self.evaluate_val()
        if results is None:
            return
        for scenario, scores in results.items():
            eval_writer.writerow(
                {
                    "step": self.step,
                    "scenario": scenario,
                    "mf1": scores["mf1"],
                    "miou": scores["miou"],
                }
            )
        full_mf1 = results["full"]["mf1"]
        if not quiet:
            print(
                f"step {self.step}: val mF1 full={full_mf1:.4f} "
                f"missing_rgir={results['missing_rgir']['mf1']:.4f} "
                f"missing_ndsm={results['missing_ndsm']['mf1']:.4f}"
            )
        if full_mf1 > self.best_val_mf1:
            self.best_val_mf1 = full_mf1
            save_checkpoint(
                run_dir / "best.ckpt",
                self.model,
                self.main_optimizer,
                self.disc_optimizer,
                self.step,
                self.config,
                self.best_val_mf1,
                self.normalization_stats,
            )
