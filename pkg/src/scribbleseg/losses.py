"""Training losses: partial BCE over labeled pixels and MSE alignments."""
from __future__ import annotations

import torch

from ._validation import UNLABELED
from .exceptions import EmptyScribbleError

# Probability clamp for log arguments; keeps saturated predictions finite.
CLAMP_EPS = 1e-7


def partial_bce(pred: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy over labeled pixels only.

    ``pred`` holds probabilities in [0, 1]; ``labels`` takes values
    {0, 1, 2} with 2 = unlabeled.  Unlabeled pixels contribute nothing to the
    value or the gradient.  Raises EmptyScribbleError when no pixel is labeled.
    """
    if pred.shape != labels.shape:
        raise ValueError(f"pred/labels shapes differ: {tuple(pred.shape)} vs {tuple(labels.shape)}")
    labeled = labels != UNLABELED
    if not bool(labeled.any()):
        raise EmptyScribbleError("scribble has no labeled pixels (|S| = 0)")
    p = pred[labeled].clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
    y = labels[labeled].to(pred.dtype)
    return -(y * torch.log(p) + (1.0 - y) * torch.log1p(-p)).mean()


def _mse(a: torch.Tensor, b: torch.Tensor, what: str) -> torch.Tensor:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shapes differ, {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).mean()


def scale_consistency(pred_original: torch.Tensor, pred_rescaled_back: torch.Tensor) -> torch.Tensor:
    """Mean squared gap between the original prediction and the prediction of a
    rescaled input resized back to the original resolution.

    No side is detached: both predictions are pulled toward each other.
    """
    return _mse(pred_original, pred_rescaled_back, "scale_consistency")


def local_global(pred_local: torch.Tensor, pred_global_crop: torch.Tensor,
                 detach_global: bool = False) -> torch.Tensor:
    """Mean squared gap between a local-patch prediction and the matching crop
    of the full-image prediction."""
    if detach_global:
        pred_global_crop = pred_global_crop.detach()
    return _mse(pred_local, pred_global_crop, "local_global")
