"""Desk-scale lab for scribble-supervised binary segmentation.

Partial cross-entropy on scribbled pixels plus dual consistency alignment
(scale / local-global transformation consistency and multi-level affinity
propagation), with a one-shot self-training stage.
"""

from .affinity import affinity_loss, build_affinity, propagate, propagate_multilevel
from .dataio import (AnnotationStats, ImageSample, ScribbleMask, annotation_stats,
                     dense_labels, generate_blob_dataset, load_dataset, save_dataset,
                     synthesize_scribble, synthesize_weak)
from .estimator import ScribbleSegmenter
from .exceptions import (AffinityCapError, ConfigError, DatasetFormatError,
                         DegenerateRegionError, EmptyScribbleError, ScribbleSegError,
                         TrainingDivergedError)
from .losses import local_global, partial_bce, scale_consistency
from .metrics import MetricsReport, Scores, confusion, evaluate, scores
from .model import (SegmentationModel, init_model, load_checkpoint, model_hash,
                    predict_probs, save_checkpoint)
from .selftrain import (PseudoLabelSet, generate_pseudo_labels, load_pseudo_labels,
                        save_pseudo_labels, self_train)
from .trainer import TrainConfig, TrainLog, ap_step, lg_step, sc_step, select_alignment, train

__version__ = "0.1.0"

__all__ = [
    "AffinityCapError", "AnnotationStats", "ConfigError", "DatasetFormatError",
    "DegenerateRegionError", "EmptyScribbleError", "ImageSample", "MetricsReport",
    "PseudoLabelSet", "Scores", "ScribbleMask", "ScribbleSegError", "ScribbleSegmenter",
    "SegmentationModel", "TrainConfig", "TrainLog", "TrainingDivergedError",
    "affinity_loss", "annotation_stats", "ap_step", "build_affinity", "confusion",
    "dense_labels", "evaluate", "generate_blob_dataset", "generate_pseudo_labels",
    "init_model", "lg_step", "load_checkpoint", "load_dataset", "load_pseudo_labels",
    "local_global", "model_hash", "partial_bce", "predict_probs", "propagate",
    "propagate_multilevel", "save_checkpoint", "save_dataset", "save_pseudo_labels",
    "scale_consistency", "sc_step", "scores", "select_alignment", "self_train",
    "synthesize_scribble", "synthesize_weak", "train",
]
