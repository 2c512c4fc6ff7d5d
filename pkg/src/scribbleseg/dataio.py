"""Synthetic blob datasets, weak-annotation synthesis, and disk IO.

Dataset directory layout::

    <root>/images/<id>.png     8-bit grayscale image
    <root>/masks/<id>.png      8-bit full mask, 0 or 255
    <root>/scribbles/<id>.png  8-bit annotation: 0 = background stroke,
                               128 = foreground stroke, 255 = unlabeled
    <root>/manifest.txt        sample ids, one per line

In memory the unlabeled value is the integer 2, keeping label maps a dense
{0, 1, 2} domain.  Images are quantized to the 8-bit grid at generation time
so that the PNG round trip is lossless.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from PIL import Image
from scipy.interpolate import splev, splprep
from scipy.ndimage import binary_erosion, gaussian_filter, label as cc_label
from skimage.draw import line as draw_line
from skimage.morphology import skeletonize

from ._validation import UNLABELED, check_binary_mask, check_image, check_label_map, check_same_spatial
from .exceptions import DatasetFormatError, DegenerateRegionError

SCRIBBLE_PNG_BG = 0
SCRIBBLE_PNG_FG = 128
SCRIBBLE_PNG_UNLABELED = 255

# Erosion margin (px) between a synthesized stroke and the true region boundary.
SAFETY_MARGIN = 2

# Per-stroke pixel budget as a fraction of the image; two strokes at width 2
# stay below the 10% labeled-fraction regime this way.
_STROKE_BUDGET = 0.02


@dataclass
class ScribbleMask:
    """Per-pixel ternary annotation: 0 = background, 1 = foreground, 2 = unlabeled."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = check_label_map(self.labels, "scribble labels")

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def foreground(self) -> np.ndarray:
        return self.labels == 1

    def background(self) -> np.ndarray:
        return self.labels == 0

    def labeled(self) -> np.ndarray:
        return self.labels != UNLABELED

    def n_labeled(self) -> int:
        return int(self.labeled().sum())

    def labeled_fraction(self) -> float:
        return float(self.labeled().mean())


@dataclass
class ImageSample:
    """One training sample: image, full ground-truth mask, weak annotation.

    ``full_mask`` may be None for samples used in contexts that must not see
    ground truth (e.g. self-training students).
    """

    image: np.ndarray
    full_mask: np.ndarray | None
    scribble: ScribbleMask
    id: str

    def __post_init__(self):
        self.image = check_image(self.image)
        if self.full_mask is not None:
            self.full_mask = check_binary_mask(self.full_mask, "full_mask")
            check_same_spatial(self.image.shape[1:], self.full_mask.shape, "image/full_mask")
        check_same_spatial(self.image.shape[1:], self.scribble.shape, "image/scribble")

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return self.image.shape[1], self.image.shape[2]


@dataclass
class AnnotationStats:
    """Fractions of accurately labeled, mislabeled, and unlabeled pixels."""

    accurate_fraction: float
    noisy_fraction: float
    unlabeled_fraction: float


def _quantize(image: np.ndarray) -> np.ndarray:
    """Snap a [0, 1] float image to the 8-bit grid (lossless PNG round trip)."""
    q = np.round(image * 255.0).astype(np.uint8)
    return q.astype(np.float32) / np.float32(255.0)


def _blob_mask(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Union of 1-3 randomly deformed ellipses with fg fraction in [0.05, 0.40]."""
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(64):
        mask = np.zeros((h, w), dtype=bool)
        n_blobs = int(rng.integers(1, 4))
        for _ in range(n_blobs):
            cy = rng.uniform(0.28, 0.72) * h
            cx = rng.uniform(0.28, 0.72) * w
            r = rng.uniform(0.13, 0.27) * min(h, w)
            aspect = rng.uniform(0.6, 1.6)
            theta = rng.uniform(0.0, math.pi)
            # smooth radial wobble: low-order harmonics of the polar angle
            amps = rng.uniform(0.0, 0.22, size=3)
            phases = rng.uniform(0.0, 2 * math.pi, size=3)

            dy = (yy - cy) / (r * aspect)
            dx = (xx - cx) / r
            u = math.cos(theta) * dx + math.sin(theta) * dy
            v = -math.sin(theta) * dx + math.cos(theta) * dy
            rad = np.sqrt(u * u + v * v)
            ang = np.arctan2(v, u)
            bound = 1.0
            for k, (a, p) in enumerate(zip(amps, phases), start=2):
                bound = bound + a * np.cos(k * ang + p)
            mask |= rad <= bound
        frac = mask.mean()
        if 0.05 <= frac <= 0.40:
            return mask.astype(np.uint8)
    raise RuntimeError("blob sampling failed to hit the target foreground fraction")


def _blob_image(rng: np.random.Generator, mask: np.ndarray) -> np.ndarray:
    """Blurred blob intensity + smooth background texture + pixel noise.

    Contrast is kept moderate relative to the texture and noise so that raw
    intensity thresholding is ambiguous near boundaries; sparse supervision
    alone underdetermines the decision surface.
    """
    h, w = mask.shape
    texture = rng.normal(size=(h, w))
    texture = gaussian_filter(texture, sigma=4.0)
    texture = (texture - texture.mean()) / (texture.std() + 1e-8)

    bump = gaussian_filter(mask.astype(np.float64), sigma=2.0)
    contrast = rng.uniform(0.20, 0.32)
    img = 0.4 + 0.10 * texture + contrast * bump + rng.normal(0.0, 0.04, size=(h, w))
    return _quantize(np.clip(img, 0.0, 1.0))


def generate_blob_dataset(n: int, height: int, width: int, seed: int) -> list[ImageSample]:
    """Generate ``n`` synthetic samples with masks and scribble annotations.

    Deterministic per seed; sample i uses its own rng seeded with seed + i, so
    generation may be parallelized without changing the result.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if height < 16 or width < 16:
        raise ValueError(f"height and width must be >= 16, got {height}x{width}")
    samples = []
    for i in range(n):
        rng = np.random.default_rng(seed + i)
        mask = _blob_mask(rng, height, width)
        image = _blob_image(rng, mask)
        scribble = synthesize_scribble(mask, seed=int(rng.integers(0, 2**31)))
        samples.append(ImageSample(image=image[None], full_mask=mask,
                                   scribble=scribble, id=f"sample_{i:05d}"))
    return samples


def _largest_component(region: np.ndarray) -> np.ndarray:
    labeled, n = cc_label(region)
    if n == 0:
        return region
    counts = np.bincount(labeled.ravel())
    counts[0] = 0
    return labeled == counts.argmax()


_DIRS = np.array([(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)])
_DIR_ANGLES = np.arctan2(_DIRS[:, 0], _DIRS[:, 1])


def _heading_walk(rng: np.random.Generator, region: np.ndarray, max_len: int) -> np.ndarray:
    """Direction-persistent random walk constrained to ``region`` (8-connected)."""
    coords = np.argwhere(region)
    y, x = coords[rng.integers(len(coords))]
    heading = rng.uniform(-math.pi, math.pi)
    path = [(y, x)]
    h, w = region.shape
    for _ in range(max_len - 1):
        heading += rng.normal(0.0, 0.45)
        order = np.argsort(np.abs(np.angle(np.exp(1j * (_DIR_ANGLES - heading)))))
        for d in order:
            ny, nx = y + _DIRS[d, 0], x + _DIRS[d, 1]
            if 0 <= ny < h and 0 <= nx < w and region[ny, nx]:
                y, x, heading = ny, nx, _DIR_ANGLES[d]
                path.append((y, x))
                break
        else:
            break
    return np.array(path)


def _rasterize_curve(points: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    stroke = np.zeros(shape, dtype=bool)
    pts = np.clip(np.round(points).astype(int), [0, 0], [shape[0] - 1, shape[1] - 1])
    for (y0, x0), (y1, x1) in zip(pts[:-1], pts[1:]):
        rr, cc = draw_line(y0, x0, y1, x1)
        stroke[rr, cc] = True
    stroke[pts[-1, 0], pts[-1, 1]] = True
    return stroke


def _is_single_component(stroke: np.ndarray) -> bool:
    _, n = cc_label(stroke, structure=np.ones((3, 3), dtype=int))
    return n == 1


def _smooth_stroke(rng: np.random.Generator, path: np.ndarray, region: np.ndarray) -> np.ndarray | None:
    """Spline-smooth a walk; returns None when the smooth curve leaves the region."""
    if len(path) < 10:
        return None
    ctrl = path[::4]
    if not np.array_equal(ctrl[-1], path[-1]):
        ctrl = np.vstack([ctrl, path[-1]])
    # splprep needs strictly advancing parameters; collapse duplicate points
    keep = np.ones(len(ctrl), dtype=bool)
    keep[1:] = np.any(ctrl[1:] != ctrl[:-1], axis=1)
    ctrl = ctrl[keep]
    if len(ctrl) < 4:
        return None
    try:
        tck, _ = splprep([ctrl[:, 0].astype(float), ctrl[:, 1].astype(float)],
                         s=float(len(ctrl)), k=3)
    except Exception:
        return None
    u = np.linspace(0.0, 1.0, 6 * len(path))
    sy, sx = splev(u, tck)
    stroke = _rasterize_curve(np.stack([sy, sx], axis=1), region.shape)
    if (stroke & ~region).any() or not _is_single_component(stroke):
        return None
    return stroke


def _thicken(rng: np.random.Generator, stroke: np.ndarray, region: np.ndarray) -> np.ndarray:
    """Randomly widen a 1-px stroke to 2 px; added pixels stay inside the region."""
    if rng.random() < 0.5:
        return stroke
    dy, dx = (0, 1) if rng.random() < 0.5 else (1, 0)
    shifted = np.zeros_like(stroke)
    if dy:
        shifted[dy:, :] = stroke[:-dy, :]
    else:
        shifted[:, dx:] = stroke[:, :-dx]
    return stroke | (shifted & region)


def _carve_stroke(rng: np.random.Generator, region: np.ndarray,
                  style: Literal["curve", "skeleton"]) -> np.ndarray:
    """One connected stroke strictly inside ``region``."""
    component = _largest_component(region)
    area = int(component.sum())
    h, w = region.shape
    budget = max(8, int(_STROKE_BUDGET * h * w))

    if style == "skeleton":
        skel = skeletonize(component)
        if skel.any():
            stroke = _skeleton_diameter_path(skel)
            return _thicken(rng, stroke, component)
        # fall through to the walk for regions too thin to skeletonize

    # ~0.7*sqrt(area) keeps strokes in the "two short lines" regime: roughly
    # 1-3% of pixels labeled, most of the image unsupervised
    max_len = int(np.clip(0.7 * math.sqrt(area), 6, budget))
    path = _heading_walk(rng, component, max_len)
    stroke = _smooth_stroke(rng, path, component)
    if stroke is None or stroke.sum() > budget:
        # the raw walk is in-region and connected by construction
        stroke = np.zeros_like(component)
        stroke[path[:, 0], path[:, 1]] = True
    return _thicken(rng, stroke, component)


def _skeleton_diameter_path(skel: np.ndarray) -> np.ndarray:
    """Longest geodesic path through a skeleton (two BFS passes)."""
    pixels = [tuple(p) for p in np.argwhere(skel)]
    start = pixels[0]

    def bfs(src):
        parent = {src: None}
        queue = deque([src])
        last = src
        while queue:
            cy, cx = queue.popleft()
            last = (cy, cx)
            for dy, dx in _DIRS:
                nxt = (cy + dy, cx + dx)
                if (0 <= nxt[0] < skel.shape[0] and 0 <= nxt[1] < skel.shape[1]
                        and skel[nxt] and nxt not in parent):
                    parent[nxt] = (cy, cx)
                    queue.append(nxt)
        return last, parent

    u, _ = bfs(start)
    v, parent = bfs(u)
    stroke = np.zeros_like(skel, dtype=bool)
    node = v
    while node is not None:
        stroke[node] = True
        node = parent[node]
    return stroke


def synthesize_scribble(full_mask, seed: int,
                        style: Literal["curve", "skeleton"] = "curve") -> ScribbleMask:
    """Carve one foreground stroke and one background stroke from a full mask.

    Strokes stay strictly inside the regions eroded by the safety margin, so a
    synthesized scribble never carries label noise.  Deterministic per seed.
    """
    mask = check_binary_mask(full_mask, "full_mask")
    if style not in ("curve", "skeleton"):
        raise ValueError(f"unknown scribble style {style!r}")
    rng = np.random.default_rng(seed)

    fg_region = binary_erosion(mask.astype(bool), iterations=SAFETY_MARGIN)
    bg_region = binary_erosion(~mask.astype(bool), iterations=SAFETY_MARGIN)
    if not fg_region.any():
        raise DegenerateRegionError(
            f"foreground vanishes after erosion by {SAFETY_MARGIN} px")
    if not bg_region.any():
        raise DegenerateRegionError(
            f"background vanishes after erosion by {SAFETY_MARGIN} px")

    fg_stroke = _carve_stroke(rng, fg_region, style)
    bg_stroke = _carve_stroke(rng, bg_region, "curve")

    labels = np.full(mask.shape, UNLABELED, dtype=np.uint8)
    labels[bg_stroke] = 0
    labels[fg_stroke] = 1
    scribble = ScribbleMask(labels)
    assert scribble.labeled_fraction() <= 0.10
    return scribble


def synthesize_weak(full_mask, kind: Literal["box", "point"], seed: int = 0) -> ScribbleMask:
    """Synthesize a box or point annotation from a full mask."""
    mask = check_binary_mask(full_mask, "full_mask")
    if not mask.any():
        raise DegenerateRegionError("mask has no foreground")
    if kind == "box":
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        labels = np.zeros(mask.shape, dtype=np.uint8)
        labels[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1] = 1
        return ScribbleMask(labels)
    if kind == "point":
        if mask.all():
            raise DegenerateRegionError("mask has no background for the negative point")
        rng = np.random.default_rng(seed)
        fg = np.argwhere(mask == 1)
        bg = np.argwhere(mask == 0)
        labels = np.full(mask.shape, UNLABELED, dtype=np.uint8)
        fy, fx = fg[rng.integers(len(fg))]
        by, bx = bg[rng.integers(len(bg))]
        labels[fy, fx] = 1
        labels[by, bx] = 0
        return ScribbleMask(labels)
    raise ValueError(f"unknown weak-annotation kind {kind!r}")


def annotation_stats(full_mask, weak: ScribbleMask) -> AnnotationStats:
    """Fractions of accurate / noisy / unlabeled pixels of a weak annotation."""
    mask = check_binary_mask(full_mask, "full_mask")
    labels = weak.labels if isinstance(weak, ScribbleMask) else check_label_map(weak)
    check_same_spatial(mask.shape, labels.shape, "full_mask/weak")
    labeled = labels != UNLABELED
    accurate = labeled & (labels == mask)
    noisy = labeled & (labels != mask)
    total = mask.size
    return AnnotationStats(
        accurate_fraction=float(accurate.sum() / total),
        noisy_fraction=float(noisy.sum() / total),
        unlabeled_fraction=float((~labeled).sum() / total),
    )


def dense_labels(mask) -> ScribbleMask:
    """Treat a full binary mask as a scribble labeling every pixel."""
    return ScribbleMask(check_binary_mask(mask, "mask").copy())


def _write_png(path: Path, arr: np.ndarray) -> None:
    Image.fromarray(arr, mode="L").save(path)


def _read_png(path: Path) -> np.ndarray:
    if not path.exists():
        raise DatasetFormatError(f"missing file: {path}")
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def save_dataset(samples: Sequence[ImageSample], root) -> None:
    """Persist samples in the PNG dataset layout (see module docstring)."""
    root = Path(root)
    for sub in ("images", "masks", "scribbles"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for s in samples:
        if s.image.shape[0] != 1:
            raise ValueError("only single-channel images are stored as grayscale PNG")
        if s.full_mask is None:
            raise ValueError(f"sample {s.id} has no full_mask to persist")
        _write_png(root / "images" / f"{s.id}.png",
                   np.round(s.image[0] * 255.0).astype(np.uint8))
        _write_png(root / "masks" / f"{s.id}.png", s.full_mask * np.uint8(255))
        png = np.full(s.scribble.shape, SCRIBBLE_PNG_UNLABELED, dtype=np.uint8)
        png[s.scribble.background()] = SCRIBBLE_PNG_BG
        png[s.scribble.foreground()] = SCRIBBLE_PNG_FG
        _write_png(root / "scribbles" / f"{s.id}.png", png)
    (root / "manifest.txt").write_text("".join(s.id + "\n" for s in samples))


def load_dataset(root) -> list[ImageSample]:
    """Load a dataset directory; an empty directory yields an empty dataset."""
    root = Path(root)
    if not root.exists():
        raise DatasetFormatError(f"dataset root does not exist: {root}")
    manifest = root / "manifest.txt"
    if not manifest.exists():
        if any((root / sub).exists() and any((root / sub).iterdir())
               for sub in ("images", "masks", "scribbles")):
            raise DatasetFormatError(f"missing file: {manifest}")
        return []
    samples = []
    for sample_id in manifest.read_text().split():
        img = _read_png(root / "images" / f"{sample_id}.png")
        image = img.astype(np.float32) / np.float32(255.0)

        mask_png = root / "masks" / f"{sample_id}.png"
        mask_arr = _read_png(mask_png)
        bad = np.setdiff1d(np.unique(mask_arr), [0, 255])
        if bad.size:
            raise DatasetFormatError(f"{mask_png}: mask values must be 0/255, found {bad.tolist()}")
        mask = (mask_arr // 255).astype(np.uint8)

        scr_png = root / "scribbles" / f"{sample_id}.png"
        scr_arr = _read_png(scr_png)
        bad = np.setdiff1d(np.unique(scr_arr),
                           [SCRIBBLE_PNG_BG, SCRIBBLE_PNG_FG, SCRIBBLE_PNG_UNLABELED])
        if bad.size:
            raise DatasetFormatError(
                f"{scr_png}: scribble values must be 0/128/255, found {bad.tolist()}")
        labels = np.full(scr_arr.shape, UNLABELED, dtype=np.uint8)
        labels[scr_arr == SCRIBBLE_PNG_BG] = 0
        labels[scr_arr == SCRIBBLE_PNG_FG] = 1

        samples.append(ImageSample(image=image[None], full_mask=mask,
                                   scribble=ScribbleMask(labels), id=sample_id))
    return samples
