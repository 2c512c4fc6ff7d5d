"""Shared test utilities: finite-difference gradients and toy masks."""
from __future__ import annotations

import numpy as np
import torch


def central_diff_grad(fn, x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Central finite differences of a scalar function w.r.t. every entry of x."""
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = float(fn())
        flat[i] = orig - eps
        lo = float(fn())
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    """Vector-level relative gap between two gradients.

    The denominator floor treats gradients below float64 finite-difference
    resolution as zero instead of amplifying their noise.
    """
    a = analytic.reshape(-1)
    n = numeric.reshape(-1)
    denom = max(a.norm().item(), n.norm().item(), 1e-6)
    return (a - n).norm().item() / denom


def disc_mask(size: int, radius: int, center=None) -> np.ndarray:
    cy, cx = center if center is not None else (size // 2, size // 2)
    yy, xx = np.mgrid[0:size, 0:size]
    return ((yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2).astype(np.uint8)


def random_label_map(rng: np.random.Generator, h: int, w: int,
                     labeled_fraction: float = 0.2) -> np.ndarray:
    labels = np.full((h, w), 2, dtype=np.uint8)
    n_labeled = max(1, int(labeled_fraction * h * w))
    idx = rng.choice(h * w, size=n_labeled, replace=False)
    labels.reshape(-1)[idx] = rng.integers(0, 2, size=n_labeled)
    return labels
