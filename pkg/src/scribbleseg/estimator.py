"""Scikit-learn style estimator facade over the training lab.

Wraps dataset assembly, model init, and the dual-alignment trainer behind
``fit`` / ``predict`` / ``predict_proba`` / ``score`` with ``get_params``
inherited from BaseEstimator, so the method drops into sklearn-style
pipelines and grid searches.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_images_batch, check_labels_batch
from .dataio import ImageSample, ScribbleMask
from .metrics import confusion, scores
from .model import init_model, predict_probs
from .selftrain import generate_pseudo_labels, self_train
from .trainer import TrainConfig, train


class ScribbleSegmenter(BaseEstimator):
    """Binary segmenter trained from scribble annotations.

    Parameters mirror TrainConfig; see the trainer module for semantics.

    Examples
    --------
    >>> seg = ScribbleSegmenter(epochs=5, seed=0)
    >>> seg.fit(images, scribbles)           # images [N, H, W], scribbles {0,1,2}
    >>> masks = seg.predict(images)          # [N, H, W] in {0, 1}
    """

    def __init__(self, width_base=8, epochs=64, batch_size=8, lr=1e-3, momentum=0.9,
                 scale_set=(0.5, 0.75, 1.25, 1.5), crop_fraction_range=(0.4, 0.8),
                 alignment_modes=("sc", "lg", "ap"), alignment_weights=(1.0, 1.0, 1.0),
                 augment=True, threshold=0.5, seed=0, num_threads=1):
        self.width_base = width_base
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.scale_set = scale_set
        self.crop_fraction_range = crop_fraction_range
        self.alignment_modes = alignment_modes
        self.alignment_weights = alignment_weights
        self.augment = augment
        self.threshold = threshold
        self.seed = seed
        self.num_threads = num_threads

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            momentum=self.momentum, scale_set=tuple(self.scale_set),
            crop_fraction_range=tuple(self.crop_fraction_range),
            alignment_modes=tuple(self.alignment_modes),
            alignment_weights=tuple(self.alignment_weights),
            seed=self.seed, augment=self.augment, threshold=self.threshold,
            num_threads=self.num_threads,
        )

    def fit(self, X, y):
        """Fit from images X [N, H, W] or [N, C, H, W] and scribble label maps
        y [N, H, W] over {0 = background, 1 = foreground, 2 = unlabeled}."""
        X = check_images_batch(X)
        y = check_labels_batch(y, len(X), X.shape[-2:])
        samples = [ImageSample(image=img, full_mask=None,
                               scribble=ScribbleMask(lab.copy()), id=f"fit_{i:05d}")
                   for i, (img, lab) in enumerate(zip(X, y))]
        model = init_model(width_base=self.width_base, seed=self.seed,
                           in_channels=X.shape[1])
        self.model_, self.train_log_ = train(model, samples, self._train_config())
        return self

    def predict_proba(self, X):
        """Per-pixel foreground probabilities, [N, H, W] in [0, 1]."""
        self._check_fitted()
        return predict_probs(self.model_, check_images_batch(X))

    def predict(self, X):
        """Binary masks [N, H, W]; foreground where probability > threshold."""
        return (self.predict_proba(X) > self.threshold).astype(np.uint8)

    def score(self, X, y):
        """Mean Dice of predictions against full binary masks y [N, H, W]."""
        preds = self.predict(X)
        y = np.asarray(y)
        return float(np.mean([scores(*confusion(p, m)).dice for p, m in zip(preds, y)]))

    def make_student(self, X):
        """One-shot self-training: pseudo-label X with the fitted model and fit
        a fresh student on those labels; returns a new fitted estimator."""
        self._check_fitted()
        X = check_images_batch(X)
        samples = [ImageSample(image=img, full_mask=None,
                               scribble=ScribbleMask(np.full(img.shape[1:], 2, dtype=np.uint8)),
                               id=f"fit_{i:05d}")
                   for i, img in enumerate(X)]
        pseudo = generate_pseudo_labels(self.model_, samples)
        images = {s.id: s.image for s in samples}
        student_model, log = self_train(pseudo, images, self._train_config(),
                                        width_base=self.width_base)
        student = ScribbleSegmenter(**self.get_params())
        student.model_ = student_model
        student.train_log_ = log
        return student

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this ScribbleSegmenter instance is not fitted yet")
