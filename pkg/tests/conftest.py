from __future__ import annotations

import numpy as np
import pytest
import torch

import scribbleseg as ss

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_dataset():
    """Eight 64x64 samples; enough to drive the trainer in a few seconds."""
    return ss.generate_blob_dataset(8, 64, 64, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def zeroed_model(width_base: int = 8) -> ss.SegmentationModel:
    model = ss.init_model(width_base=width_base, seed=0)
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
    return model
