"""Pixel-affinity maps from encoder features and prediction propagation.

An affinity map is a row-stochastic L x L matrix (L = H_a * W_a pixels at the
affinity resolution) built from feature dot products.  Propagating a
prediction through one or more affinity maps yields a "soft" prediction where
every pixel is a convex combination of the original probabilities; aligning
the prediction with its soft version spreads supervision from labeled to
unlabeled pixels.
"""
from __future__ import annotations

import math
from typing import Literal, Sequence

import torch
import torch.nn.functional as F

from .exceptions import AffinityCapError

DEFAULT_MAX_PIXELS = 4096
DEFAULT_LEVELS = (1, 2, 3, 4)  # shallow -> deep
AffinityScale = Literal["none", "inv_sqrt_c"]


def _resize(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bilinear resize of [B, C, h, w]; exact identity when sizes match."""
    if x.shape[-2:] == size:
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def build_affinity(features: torch.Tensor, target_h: int, target_w: int, *,
                   scale: AffinityScale = "inv_sqrt_c",
                   max_pixels: int = DEFAULT_MAX_PIXELS) -> torch.Tensor:
    """Row-stochastic affinity from one feature level.

    ``features`` is [C, h, w] or [B, C, h, w]; the result is [L, L] or
    [B, L, L] with L = target_h * target_w.  Features are resized to the
    target grid, flattened to embeddings, and their pairwise dot products are
    softmax-normalized per row.  Gradients flow back to the features.
    """
    n_pixels = target_h * target_w
    if n_pixels > max_pixels:
        raise AffinityCapError(
            f"affinity grid {target_h}x{target_w} = {n_pixels} pixels exceeds the "
            f"cap of {max_pixels}")
    squeeze = features.dim() == 3
    f = features[None] if squeeze else features
    if f.dim() != 4:
        raise ValueError(f"features must be [C, h, w] or [B, C, h, w], got {tuple(features.shape)}")
    c = f.shape[1]
    emb = _resize(f, (target_h, target_w)).reshape(f.shape[0], c, n_pixels).transpose(1, 2)
    scores = torch.bmm(emb, emb.transpose(1, 2))
    if scale == "inv_sqrt_c":
        scores = scores / math.sqrt(c)
    elif scale != "none":
        raise ValueError(f"unknown affinity scale mode {scale!r}")
    aff = torch.softmax(scores, dim=-1)
    return aff[0] if squeeze else aff


def propagate(affinity: torch.Tensor, pred: torch.Tensor) -> torch.Tensor:
    """Refine a prediction by one affinity map: soft = A @ vec(pred).

    ``pred`` may be flat [L] or spatial [H_a, W_a] (batched variants allowed);
    the output keeps the input layout.
    """
    batched = affinity.dim() == 3
    aff = affinity if batched else affinity[None]
    spatial = pred.dim() == (3 if batched else 2)
    p = pred if batched else pred[None]
    shape = p.shape
    v = p.reshape(shape[0], -1)
    if v.shape[1] != aff.shape[-1]:
        raise ValueError(
            f"prediction length {v.shape[1]} does not match affinity size {aff.shape[-1]}")
    soft = torch.bmm(aff, v[:, :, None])[:, :, 0]
    soft = soft.reshape(shape) if spatial else soft
    return soft if batched else soft[0]


def propagate_multilevel(features: Sequence[torch.Tensor], pred: torch.Tensor,
                         levels: Sequence[int] = DEFAULT_LEVELS, *,
                         stride: int = 4,
                         scale: AffinityScale = "inv_sqrt_c",
                         max_pixels: int = DEFAULT_MAX_PIXELS) -> torch.Tensor:
    """Chain affinity propagation over several encoder levels.

    The prediction is moved to the affinity grid (prediction resolution
    divided by ``stride``), multiplied through one affinity map per entry of
    ``levels`` (applied in the given order), and resized back.  ``features``
    is the shallow-to-deep list from the model; ``levels`` indexes it 1-based.
    """
    if len(levels) == 0:
        raise ValueError("levels must be a non-empty sequence")
    if any(k < 1 or k > len(features) for k in levels):
        raise ValueError(f"levels must index the {len(features)} feature maps, got {list(levels)}")
    squeeze = pred.dim() == 2
    p = pred[None] if squeeze else pred
    feats = [f[None] if squeeze else f for f in features]
    h, w = p.shape[-2:]
    th, tw = max(1, h // stride), max(1, w // stride)

    v = _resize(p[:, None], (th, tw))[:, 0].reshape(p.shape[0], -1)
    for k in levels:
        aff = build_affinity(feats[k - 1], th, tw, scale=scale, max_pixels=max_pixels)
        v = torch.bmm(aff, v[:, :, None])[:, :, 0]
    soft = _resize(v.reshape(p.shape[0], 1, th, tw), (h, w))[:, 0]
    return soft[0] if squeeze else soft


def affinity_loss(pred: torch.Tensor, soft: torch.Tensor,
                  detach_soft: bool = False) -> torch.Tensor:
    """MSE alignment between the prediction and its propagated soft version."""
    if pred.shape != soft.shape:
        raise ValueError(f"pred/soft shapes differ: {tuple(pred.shape)} vs {tuple(soft.shape)}")
    if detach_soft:
        soft = soft.detach()
    return ((pred - soft) ** 2).mean()
