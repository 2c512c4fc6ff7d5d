"""Input validation helpers used across the public API."""
from __future__ import annotations

import numpy as np

UNLABELED = 2


def check_binary_mask(mask, name: str = "mask") -> np.ndarray:
    """Coerce to a 2-D uint8 array with values in {0, 1}."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    vals = np.unique(arr)
    if not np.isin(vals, (0, 1)).all():
        raise ValueError(f"{name} must be binary (0/1), found values {vals.tolist()}")
    return arr.astype(np.uint8, copy=False)


def check_label_map(labels, name: str = "labels") -> np.ndarray:
    """Coerce to a 2-D uint8 array with values in {0, 1, 2} (2 = unlabeled)."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    vals = np.unique(arr)
    if not np.isin(vals, (0, 1, UNLABELED)).all():
        raise ValueError(
            f"{name} must take values in {{0, 1, {UNLABELED}}}, found {vals.tolist()}"
        )
    return arr.astype(np.uint8, copy=False)


def check_image(image, name: str = "image") -> np.ndarray:
    """Coerce to a [C, H, W] float32 array with values in [0, 1].

    A bare [H, W] array is promoted to a single channel.
    """
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be [H, W] or [C, H, W], got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def check_same_spatial(shape_a, shape_b, what: str) -> None:
    if tuple(shape_a) != tuple(shape_b):
        raise ValueError(f"{what}: spatial shapes differ, {tuple(shape_a)} vs {tuple(shape_b)}")


def check_images_batch(X, name: str = "X") -> np.ndarray:
    """Coerce an image batch to [N, C, H, W] float32 in [0, 1]."""
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[:, None]
    if arr.ndim != 4:
        raise ValueError(f"{name} must be [N, H, W] or [N, C, H, W], got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def check_labels_batch(y, n: int, spatial, name: str = "y") -> np.ndarray:
    """Coerce a label-map batch to [N, H, W] uint8 over {0, 1, 2}."""
    arr = np.asarray(y)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be [N, H, W], got shape {arr.shape}")
    if arr.shape[0] != n:
        raise ValueError(f"{name} has {arr.shape[0]} samples, expected {n}")
    check_same_spatial(arr.shape[1:], spatial, name)
    vals = np.unique(arr)
    if not np.isin(vals, (0, 1, UNLABELED)).all():
        raise ValueError(
            f"{name} must take values in {{0, 1, {UNLABELED}}}, found {vals.tolist()}"
        )
    return arr.astype(np.uint8, copy=False)
