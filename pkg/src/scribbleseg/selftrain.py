"""One-shot pseudo-label generation and student retraining.

The trained dual-alignment model acts as a teacher exactly once: its
thresholded predictions become fixed pseudo labels, and a fresh model is
trained on them with plain dense BCE (no alignments, no label refreshing).
The student interface never receives scribbles or ground-truth masks.

Pseudo labels are persisted as ``<root>/pseudo/<id>.png`` (0/255) plus a
``pseudo_manifest.txt`` whose first line records the teacher checkpoint hash.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from ._validation import check_binary_mask, check_image
from .dataio import ImageSample, dense_labels
from .exceptions import DatasetFormatError
from .model import SegmentationModel, init_model, model_hash, predict_probs
from .trainer import TrainConfig, TrainLog, train

PSEUDO_THRESHOLD = 0.5  # strict >; ties go to background


@dataclass
class PseudoLabelSet:
    """Per-sample binary label maps plus the hash of the teacher that made them."""

    labels: dict[str, np.ndarray]
    teacher_hash: str

    def __post_init__(self):
        self.labels = {k: check_binary_mask(v, f"pseudo label {k}")
                       for k, v in self.labels.items()}


def generate_pseudo_labels(teacher: SegmentationModel, dataset: Sequence) -> PseudoLabelSet:
    """Single inference pass over the dataset; label = 1 where p > 0.5."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    images = np.stack([s.image for s in dataset])
    probs = predict_probs(teacher, images)
    labels = {s.id: (p > PSEUDO_THRESHOLD).astype(np.uint8)
              for s, p in zip(dataset, probs)}
    return PseudoLabelSet(labels=labels, teacher_hash=model_hash(teacher))


def self_train(pseudo: PseudoLabelSet, images: Mapping[str, np.ndarray],
               config: TrainConfig, init_seed: int | None = None,
               width_base: int = 8) -> tuple[SegmentationModel, TrainLog]:
    """Train a fresh model on pseudo labels with dense BCE only.

    ``images`` maps sample id to image array; neither scribbles nor ground
    truth enter here.  The student reuses the teacher architecture with a new
    init seed (``config.seed + 1`` unless given).
    """
    missing = sorted(set(images) - set(pseudo.labels))
    if missing:
        raise ValueError(f"pseudo labels missing for ids: {missing}")
    if not images:
        raise ValueError("no images to train on")

    samples = [ImageSample(image=check_image(img, f"image {sid}"), full_mask=None,
                           scribble=dense_labels(pseudo.labels[sid]), id=sid)
               for sid, img in images.items()]
    student_config = replace(config, alignment_modes=())
    if init_seed is None:
        init_seed = config.seed + 1
    in_channels = samples[0].image.shape[0]
    student = init_model(width_base=width_base, seed=init_seed, in_channels=in_channels)
    return train(student, samples, student_config)


def save_pseudo_labels(pseudo: PseudoLabelSet, root) -> None:
    root = Path(root)
    (root / "pseudo").mkdir(parents=True, exist_ok=True)
    for sid, lab in pseudo.labels.items():
        Image.fromarray(lab * np.uint8(255), mode="L").save(root / "pseudo" / f"{sid}.png")
    lines = [pseudo.teacher_hash] + sorted(pseudo.labels)
    (root / "pseudo_manifest.txt").write_text("".join(l + "\n" for l in lines))


def load_pseudo_labels(root) -> PseudoLabelSet:
    root = Path(root)
    manifest = root / "pseudo_manifest.txt"
    if not manifest.exists():
        raise DatasetFormatError(f"missing file: {manifest}")
    lines = manifest.read_text().split()
    if not lines:
        raise DatasetFormatError(f"{manifest}: empty pseudo manifest")
    teacher_hash, ids = lines[0], lines[1:]
    labels = {}
    for sid in ids:
        path = root / "pseudo" / f"{sid}.png"
        if not path.exists():
            raise DatasetFormatError(f"missing file: {path}")
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
        bad = np.setdiff1d(np.unique(arr), [0, 255])
        if bad.size:
            raise DatasetFormatError(f"{path}: pseudo values must be 0/255, found {bad.tolist()}")
        labels[sid] = (arr // 255).astype(np.uint8)
    return PseudoLabelSet(labels=labels, teacher_hash=teacher_hash)
