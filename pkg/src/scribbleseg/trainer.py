"""Training orchestration: per-step alignment sampling and SGD with momentum.

Each optimizer step combines the partial BCE loss over scribbled pixels with
one randomly selected alignment loss (scale consistency, local-global
consistency, or affinity propagation):

    total = pce + align

The parameter update is the momentum form v <- mu*v - lr*g, theta <- theta + v.
All randomness (batch order, augmentation, alignment choice, transform
parameters) is drawn from one numpy generator seeded by the config, so runs
are bitwise reproducible in single-threaded mode.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from math import ceil
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import metrics
from .affinity import AffinityScale, DEFAULT_LEVELS, DEFAULT_MAX_PIXELS, affinity_loss, propagate_multilevel
from .exceptions import ConfigError, TrainingDivergedError
from .losses import local_global, partial_bce, scale_consistency
from .model import DOWNSAMPLE_FACTOR, SegmentationModel

ALIGNMENTS = ("sc", "lg", "ap")


@dataclass
class TrainConfig:
    epochs: int = 64
    batch_size: int = 8
    lr: float = 1e-3
    momentum: float = 0.9
    scale_set: tuple[float, ...] = (0.5, 0.75, 1.25, 1.5)
    crop_fraction_range: tuple[float, float] = (0.4, 0.8)
    alignment_modes: tuple[str, ...] = ALIGNMENTS
    alignment_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0
    augment: bool = True
    brightness_jitter: float = 0.1
    poly_decay: bool = False
    poly_power: float = 0.9
    detach_global: bool = False
    detach_soft: bool = False
    affinity_stride: int = 4
    affinity_levels: tuple[int, ...] = DEFAULT_LEVELS
    affinity_scale: AffinityScale = "inv_sqrt_c"
    affinity_max_pixels: int = DEFAULT_MAX_PIXELS
    num_threads: int | None = 1
    threshold: float = 0.5

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0 (0 freezes the parameters), got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if any(s <= 0 for s in self.scale_set):
            raise ConfigError(f"scale factors must be > 0, got {self.scale_set}")
        lo, hi = self.crop_fraction_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"crop fractions must lie in (0, 1], got {self.crop_fraction_range}")
        unknown = set(self.alignment_modes) - set(ALIGNMENTS)
        if unknown:
            raise ConfigError(f"unknown alignment modes: {sorted(unknown)}")
        if any(w < 0 for w in self.alignment_weights):
            raise ConfigError(f"alignment weights must be >= 0, got {self.alignment_weights}")
        if self.alignment_modes and all(w == 0 for w in self._effective_weights()):
            raise ConfigError("alignment weights for the enabled modes are all zero")

    def _effective_weights(self) -> np.ndarray:
        return np.array([w if m in self.alignment_modes else 0.0
                         for m, w in zip(ALIGNMENTS, self.alignment_weights)])


@dataclass
class StepRecord:
    step: int
    epoch: int
    alignment: str
    l_pce: float
    l_align: float
    l_tot: float


@dataclass
class EpochRecord:
    epoch: int
    dice: float
    iou: float
    precision: float
    recall: float


@dataclass
class TrainLog:
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)

    def write_steps_jsonl(self, path) -> None:
        with Path(path).open("w") as fh:
            for rec in self.steps:
                fh.write(json.dumps(asdict(rec)) + "\n")

    def write_epochs_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write("epoch,dice,iou,precision,recall\n")
            for rec in self.epochs:
                fh.write(f"{rec.epoch},{rec.dice!r},{rec.iou!r},"
                         f"{rec.precision!r},{rec.recall!r}\n")


def select_alignment(rng: np.random.Generator, weights: Sequence[float]) -> str:
    """Categorical draw over (sc, lg, ap) proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (3,) or (w < 0).any():
        raise ConfigError(f"weights must be 3 non-negative reals, got {weights}")
    total = w.sum()
    if total == 0:
        raise ConfigError("alignment weights are all zero")
    return ALIGNMENTS[int(rng.choice(3, p=w / total))]


def _round_to_multiple(value: float, multiple: int = DOWNSAMPLE_FACTOR) -> int:
    return max(multiple, multiple * int(round(value / multiple)))


def sc_step(model: SegmentationModel, images: torch.Tensor, rng: np.random.Generator,
            scale_set: Sequence[float] = TrainConfig.scale_set,
            pred: torch.Tensor | None = None) -> torch.Tensor:
    """Scale-consistency loss: forward a randomly resized copy of the batch and
    compare against the original prediction after resizing back."""
    if pred is None:
        pred, _ = model(images)
    h, w = images.shape[-2:]
    factor = scale_set[int(rng.integers(len(scale_set)))]
    hs, ws = _round_to_multiple(h * factor), _round_to_multiple(w * factor)
    rescaled = torch.nn.functional.interpolate(
        images, size=(hs, ws), mode="bilinear", align_corners=False)
    pred_s, _ = model(rescaled)
    pred_back = torch.nn.functional.interpolate(
        pred_s[:, None], size=(h, w), mode="bilinear", align_corners=False)[:, 0]
    return scale_consistency(pred, pred_back)


def lg_step(model: SegmentationModel, images: torch.Tensor, rng: np.random.Generator,
            crop_fraction_range: tuple[float, float] = TrainConfig.crop_fraction_range,
            pred: torch.Tensor | None = None, detach_global: bool = False) -> torch.Tensor:
    """Local-global consistency loss: forward a random crop and compare with
    the matching crop of the full-image prediction."""
    if pred is None:
        pred, _ = model(images)
    h, w = images.shape[-2:]
    lo, hi = crop_fraction_range
    ch = min(h, _round_to_multiple(h * rng.uniform(lo, hi)))
    cw = min(w, _round_to_multiple(w * rng.uniform(lo, hi)))
    top = int(rng.integers(h - ch + 1))
    left = int(rng.integers(w - cw + 1))
    pred_local, _ = model(images[:, :, top:top + ch, left:left + cw])
    pred_global = pred[:, top:top + ch, left:left + cw]
    return local_global(pred_local, pred_global, detach_global=detach_global)


def ap_step(model: SegmentationModel, images: torch.Tensor,
            pred: torch.Tensor | None = None,
            features: Sequence[torch.Tensor] | None = None, *,
            levels: Sequence[int] = DEFAULT_LEVELS, stride: int = 4,
            scale: AffinityScale = "inv_sqrt_c", max_pixels: int = DEFAULT_MAX_PIXELS,
            detach_soft: bool = False) -> torch.Tensor:
    """Affinity-propagation loss: align the prediction with its multi-level
    propagated soft version."""
    if pred is None or features is None:
        pred, features = model(images)
    soft = propagate_multilevel(features, pred, levels, stride=stride,
                                scale=scale, max_pixels=max_pixels)
    return affinity_loss(pred, soft, detach_soft=detach_soft)


def _assemble_batch(dataset, indices, rng, config, dtype):
    images, labels = [], []
    for i in indices:
        img = dataset[i].image.astype(np.float64)
        lab = dataset[i].scribble.labels
        if config.augment:
            if rng.random() < 0.5:
                img = img[:, :, ::-1]
                lab = lab[:, ::-1]
            delta = rng.uniform(-config.brightness_jitter, config.brightness_jitter)
            img = np.clip(img + delta, 0.0, 1.0)
        images.append(np.ascontiguousarray(img))
        labels.append(np.ascontiguousarray(lab))
    images_t = torch.as_tensor(np.stack(images), dtype=dtype)
    labels_t = torch.as_tensor(np.stack(labels).astype(np.int64))
    return images_t, labels_t


def _check_finite(value: torch.Tensor, step: int, term: str) -> None:
    if not bool(torch.isfinite(value)):
        raise TrainingDivergedError(step, term, value.item())


def train(model: SegmentationModel, dataset: Sequence, config: TrainConfig,
          val_dataset: Sequence | None = None) -> tuple[SegmentationModel, TrainLog]:
    """Train in place and return ``(model, log)``.

    ``dataset`` is a sequence of samples with ``image`` and ``scribble``
    attributes; every sample needs at least one labeled pixel.  When
    ``val_dataset`` is given, Dice/IoU/precision/recall are logged per epoch.
    """
    config.validate()
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    for s in dataset:
        if s.scribble.n_labeled() == 0:
            raise ValueError(f"sample {s.id} has an empty scribble")
    if config.num_threads is not None:
        torch.set_num_threads(config.num_threads)

    rng = np.random.default_rng(config.seed)
    dtype = next(model.parameters()).dtype
    params = list(model.parameters())
    velocity = [torch.zeros_like(p) for p in params]
    weights = config._effective_weights()

    log = TrainLog()
    n = len(dataset)
    steps_per_epoch = ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    step = 0
    model.train()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            indices = order[start:start + config.batch_size]
            images, labels = _assemble_batch(dataset, indices, rng, config, dtype)

            pred, feats = model(images)
            l_pce = partial_bce(pred, labels)
            if config.alignment_modes:
                mode = select_alignment(rng, weights)
                if mode == "sc":
                    l_align = sc_step(model, images, rng, config.scale_set, pred=pred)
                elif mode == "lg":
                    l_align = lg_step(model, images, rng, config.crop_fraction_range,
                                      pred=pred, detach_global=config.detach_global)
                else:
                    l_align = ap_step(model, images, pred=pred, features=feats,
                                      levels=config.affinity_levels,
                                      stride=config.affinity_stride,
                                      scale=config.affinity_scale,
                                      max_pixels=config.affinity_max_pixels,
                                      detach_soft=config.detach_soft)
            else:
                mode = "none"
                l_align = pred.new_zeros(())
            l_tot = l_pce + l_align
            _check_finite(l_pce, step, "pce")
            _check_finite(l_align, step, "align")
            _check_finite(l_tot, step, "total")

            model.zero_grad(set_to_none=True)
            l_tot.backward()
            lr_t = config.lr
            if config.poly_decay:
                lr_t = config.lr * (1.0 - step / total_steps) ** config.poly_power
            with torch.no_grad():
                for p, v in zip(params, velocity):
                    if p.grad is None:
                        continue
                    v.mul_(config.momentum).sub_(p.grad, alpha=lr_t)
                    p.add_(v)

            l_pce_f, l_align_f = l_pce.item(), l_align.item()
            log.steps.append(StepRecord(step=step, epoch=epoch, alignment=mode,
                                        l_pce=l_pce_f, l_align=l_align_f,
                                        l_tot=l_pce_f + l_align_f))
            step += 1
        if val_dataset:
            model.eval()
            report = metrics.evaluate(model, val_dataset, threshold=config.threshold)
            model.train()
            log.epochs.append(EpochRecord(epoch=epoch, dice=report.dice, iou=report.iou,
                                          precision=report.precision, recall=report.recall))
    model.eval()
    return model, log
