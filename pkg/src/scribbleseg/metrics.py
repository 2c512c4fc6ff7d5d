"""Dice / IoU / precision / recall for binary segmentation."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from ._validation import check_binary_mask, check_same_spatial

Aggregation = Literal["per_image_mean", "global_confusion"]

REPORT_HEADER = ("method", "dice", "iou", "precision", "recall", "n")


@dataclass
class Scores:
    dice: float
    iou: float
    precision: float
    recall: float


@dataclass
class MetricsReport:
    dice: float
    iou: float
    precision: float
    recall: float
    n_samples: int
    aggregation: Aggregation


def confusion(pred_binary, gt) -> tuple[int, int, int, int]:
    """Exact pixel counts (tp, fp, fn, tn)."""
    pred = check_binary_mask(pred_binary, "pred_binary")
    mask = check_binary_mask(gt, "gt")
    check_same_spatial(pred.shape, mask.shape, "pred/gt")
    tp = int(np.sum((pred == 1) & (mask == 1)))
    fp = int(np.sum((pred == 1) & (mask == 0)))
    fn = int(np.sum((pred == 0) & (mask == 1)))
    tn = int(np.sum((pred == 0) & (mask == 0)))
    return tp, fp, fn, tn


def scores(tp: int, fp: int, fn: int, tn: int) -> Scores:
    """Metric values from confusion counts.

    Conventions for degenerate cases: if prediction and ground truth are both
    empty every metric is 1; a ratio whose denominator is zero otherwise is 0.
    """
    if min(tp, fp, fn, tn) < 0:
        raise ValueError("confusion counts must be non-negative")
    if tp + fp + fn == 0:
        return Scores(dice=1.0, iou=1.0, precision=1.0, recall=1.0)
    return Scores(
        dice=2 * tp / (2 * tp + fp + fn),
        iou=tp / (tp + fp + fn),
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
    )


def evaluate(model, dataset: Sequence, threshold: float = 0.5,
             aggregation: Aggregation = "per_image_mean") -> MetricsReport:
    """Evaluate a model over a dataset of samples with ground-truth masks.

    Predictions are binarized with a strict ``p > threshold`` rule; per-image
    scores are averaged by default, or pixel counts are pooled first with
    ``aggregation="global_confusion"``.
    """
    from .model import predict_probs  # local import to keep metrics torch-free

    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if aggregation not in ("per_image_mean", "global_confusion"):
        raise ValueError(f"unknown aggregation {aggregation!r}")

    images = np.stack([s.image for s in dataset])
    probs = predict_probs(model, images)
    preds = (probs > threshold).astype(np.uint8)

    if aggregation == "global_confusion":
        totals = np.zeros(4, dtype=np.int64)
        for pred, sample in zip(preds, dataset):
            totals += confusion(pred, sample.full_mask)
        sc = scores(*totals.tolist())
    else:
        per_image = [scores(*confusion(pred, sample.full_mask))
                     for pred, sample in zip(preds, dataset)]
        sc = Scores(*(float(np.mean([getattr(s, f) for s in per_image]))
                      for f in ("dice", "iou", "precision", "recall")))
    return MetricsReport(dice=sc.dice, iou=sc.iou, precision=sc.precision,
                         recall=sc.recall, n_samples=len(dataset), aggregation=aggregation)


def append_report_row(path, method: str, report: MetricsReport) -> None:
    """Append ``method,dice,iou,precision,recall,n`` to a report CSV."""
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(REPORT_HEADER)
        writer.writerow([method, repr(report.dice), repr(report.iou),
                         repr(report.precision), repr(report.recall), report.n_samples])
