from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image
from scipy.ndimage import binary_erosion, label as cc_label

import scribbleseg as ss
from helpers import disc_mask, random_label_map
from scribbleseg.dataio import (SAFETY_MARGIN, ScribbleMask, annotation_stats,
                                dense_labels, generate_blob_dataset, load_dataset,
                                save_dataset, synthesize_scribble, synthesize_weak)
from scribbleseg.exceptions import DatasetFormatError, DegenerateRegionError

# Regression constant: mean foreground fraction of generate_blob_dataset(200, 64, 64, 0).
EXPECTED_MEAN_FG_FRACTION = 0.2378466796875

def test_generation_is_deterministic():
    a = generate_blob_dataset(3, 64, 64, seed=7)
    b = generate_blob_dataset(3, 64, 64, seed=7)
    for sa, sb in zip(a, b):
        assert sa.id == sb.id
        assert np.array_equal(sa.image, sb.image)
        assert np.array_equal(sa.full_mask, sb.full_mask)
        assert np.array_equal(sa.scribble.labels, sb.scribble.labels)


def test_foreground_fraction_in_range():
    for s in generate_blob_dataset(10, 64, 64, seed=3):
        assert 0.05 <= s.full_mask.mean() <= 0.40


def test_mean_foreground_fraction_regression():
    samples = generate_blob_dataset(200, 64, 64, seed=0)
    mean_frac = float(np.mean([s.full_mask.mean() for s in samples]))
    assert abs(mean_frac - EXPECTED_MEAN_FG_FRACTION) < 1e-9


def test_images_are_quantized_unit_range():
    for s in generate_blob_dataset(5, 64, 64, seed=1):
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0
        # 8-bit grid so the PNG round trip is lossless
        np.testing.assert_array_equal(
            s.image, np.round(s.image * 255).astype(np.uint8).astype(np.float32) / np.float32(255))


def test_generation_argument_errors():
    with pytest.raises(ValueError):
        generate_blob_dataset(0, 64, 64, seed=0)
    with pytest.raises(ValueError):
        generate_blob_dataset(1, 8, 64, seed=0)


def test_scribble_full_foreground_rejected():
    with pytest.raises(DegenerateRegionError):
        synthesize_scribble(np.ones((32, 32), dtype=np.uint8), seed=0)


def test_scribble_tiny_region_rejected():
    mask = np.zeros((32, 32), dtype=np.uint8)
    mask[10, 10] = 1  # vanishes under erosion
    with pytest.raises(DegenerateRegionError):
        synthesize_scribble(mask, seed=0)


@pytest.mark.parametrize("style", ["curve", "skeleton"])
def test_scribble_strokes_are_noise_free_and_connected(style):
    for seed in range(6):
        mask = generate_blob_dataset(1, 64, 64, seed=seed)[0].full_mask
        scr = synthesize_scribble(mask, seed=seed * 13 + 1, style=style)
        stats = annotation_stats(mask, scr)
        assert stats.noisy_fraction == 0.0
        for value in (0, 1):
            _, n = cc_label(scr.labels == value, structure=np.ones((3, 3), dtype=int))
            assert n == 1, f"{style} stroke {value} has {n} components"


def test_scribble_strokes_stay_inside_eroded_regions():
    mask = disc_mask(64, 18)
    scr = synthesize_scribble(mask, seed=4)
    fg_eroded = binary_erosion(mask.astype(bool), iterations=SAFETY_MARGIN)
    bg_eroded = binary_erosion(~mask.astype(bool), iterations=SAFETY_MARGIN)
    assert not (scr.foreground() & ~fg_eroded).any()
    assert not (scr.background() & ~bg_eroded).any()


def test_scribble_labeled_fraction_below_ten_percent():
    mask = disc_mask(64, 16)
    scr = synthesize_scribble(mask, seed=1)
    assert scr.labeled_fraction() < 0.10
    assert scr.labeled_fraction() > 0


def test_scribble_deterministic_per_seed():
    mask = disc_mask(64, 16)
    assert np.array_equal(synthesize_scribble(mask, seed=9).labels,
                          synthesize_scribble(mask, seed=9).labels)
    assert not np.array_equal(synthesize_scribble(mask, seed=9).labels,
                              synthesize_scribble(mask, seed=10).labels)


def test_scribble_invalid_style():
    with pytest.raises(ValueError):
        synthesize_scribble(disc_mask(64, 16), seed=0, style="zigzag")


def test_box_on_rectangle_is_fully_accurate():
    mask = np.zeros((32, 32), dtype=np.uint8)
    mask[8:20, 10:25] = 1
    box = synthesize_weak(mask, "box")
    stats = annotation_stats(mask, box)
    assert stats.accurate_fraction == 1.0
    assert not (box.labels == 2).any()


def test_box_on_disc_noisy_fraction_near_analytic():
    d = 41  # box side; disc inscribed in its own bounding box
    mask = disc_mask(64, d // 2, center=(32, 32))
    box = synthesize_weak(mask, "box")
    stats = annotation_stats(mask, box)
    # brute-force count of mislabeled pixels: inside box but outside the disc
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    box_area = (rows[-1] - rows[0] + 1) * (cols[-1] - cols[0] + 1)
    brute_noisy = int(((box.labels == 1) & (mask == 0)).sum())
    assert stats.noisy_fraction == brute_noisy / mask.size
    # continuum value 1 - pi/4 ~ 0.2146; the discrete box is (2r+1)^2, so the
    # rasterized ratio is biased high by O(1/r)
    r = d // 2
    discrete = 1 - math.pi * r ** 2 / (2 * r + 1) ** 2
    assert abs(brute_noisy / box_area - discrete) < 0.01
    assert abs(brute_noisy / box_area - (1 - math.pi / 4)) < 0.05


def test_point_yields_exactly_two_labels():
    mask = disc_mask(32, 8)
    pt = synthesize_weak(mask, "point", seed=5)
    assert pt.n_labeled() == 2
    stats = annotation_stats(mask, pt)
    assert stats.noisy_fraction == 0.0


def test_weak_errors():
    with pytest.raises(DegenerateRegionError):
        synthesize_weak(np.zeros((16, 16), dtype=np.uint8), "box")
    with pytest.raises(DegenerateRegionError):
        synthesize_weak(np.ones((16, 16), dtype=np.uint8), "point")
    with pytest.raises(ValueError):
        synthesize_weak(disc_mask(32, 8), "polygon")


def test_annotation_stats_all_unlabeled():
    mask = disc_mask(16, 4)
    weak = ScribbleMask(np.full((16, 16), 2, dtype=np.uint8))
    stats = annotation_stats(mask, weak)
    assert (stats.accurate_fraction, stats.noisy_fraction, stats.unlabeled_fraction) == (0, 0, 1)


def test_annotation_stats_exact_match():
    mask = disc_mask(16, 4)
    stats = annotation_stats(mask, dense_labels(mask))
    assert (stats.accurate_fraction, stats.noisy_fraction, stats.unlabeled_fraction) == (1, 0, 0)


def test_annotation_stats_hand_case():
    mask = np.zeros((4, 4), dtype=np.uint8)
    mask[0, 0] = mask[0, 1] = 1
    labels = np.full((4, 4), 2, dtype=np.uint8)
    labels[0, 0] = 1          # correct fg
    labels[3, 3] = 0          # correct bg
    labels[0, 1] = 0          # incorrect: fg labeled as bg
    stats = annotation_stats(mask, ScribbleMask(labels))
    assert stats.accurate_fraction == 2 / 16
    assert stats.noisy_fraction == 1 / 16
    assert stats.unlabeled_fraction == 13 / 16


def test_annotation_stats_shape_mismatch():
    with pytest.raises(ValueError):
        annotation_stats(disc_mask(16, 4), ScribbleMask(np.full((8, 8), 2, dtype=np.uint8)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_annotation_stats_fractions_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    mask = (rng.random((12, 12)) < 0.4).astype(np.uint8)
    weak = ScribbleMask(random_label_map(rng, 12, 12, labeled_fraction=rng.uniform(0, 1)))
    stats = annotation_stats(mask, weak)
    assert abs(stats.accurate_fraction + stats.noisy_fraction + stats.unlabeled_fraction - 1) < 1e-9


def test_dataset_roundtrip(tmp_path):
    samples = generate_blob_dataset(5, 64, 64, seed=0)
    save_dataset(samples, tmp_path)
    back = load_dataset(tmp_path)
    assert [s.id for s in back] == [s.id for s in samples]
    for a, b in zip(samples, back):
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.full_mask, b.full_mask)
        assert np.array_equal(a.scribble.labels, b.scribble.labels)


def test_scribble_png_encoding(tmp_path):
    samples = generate_blob_dataset(1, 64, 64, seed=0)
    save_dataset(samples, tmp_path)
    arr = np.asarray(Image.open(tmp_path / "scribbles" / f"{samples[0].id}.png"))
    assert set(np.unique(arr)) <= {0, 128, 255}
    assert (arr == 255).sum() == (samples[0].scribble.labels == 2).sum()


def test_load_rejects_out_of_domain_scribble(tmp_path):
    samples = generate_blob_dataset(1, 64, 64, seed=0)
    save_dataset(samples, tmp_path)
    path = tmp_path / "scribbles" / f"{samples[0].id}.png"
    arr = np.asarray(Image.open(path)).copy()
    arr[0, 0] = 7
    Image.fromarray(arr, mode="L").save(path)
    with pytest.raises(DatasetFormatError, match=str(path)):
        load_dataset(tmp_path)


def test_load_rejects_bad_mask_values(tmp_path):
    samples = generate_blob_dataset(1, 64, 64, seed=0)
    save_dataset(samples, tmp_path)
    path = tmp_path / "masks" / f"{samples[0].id}.png"
    arr = np.asarray(Image.open(path)).copy()
    arr[0, 0] = 100
    Image.fromarray(arr, mode="L").save(path)
    with pytest.raises(DatasetFormatError, match=str(path)):
        load_dataset(tmp_path)


def test_load_missing_image_names_file(tmp_path):
    samples = generate_blob_dataset(1, 64, 64, seed=0)
    save_dataset(samples, tmp_path)
    missing = tmp_path / "images" / f"{samples[0].id}.png"
    missing.unlink()
    with pytest.raises(DatasetFormatError, match=str(missing)):
        load_dataset(tmp_path)


def test_load_empty_directory_gives_empty_dataset(tmp_path):
    assert load_dataset(tmp_path) == []


def test_load_nonexistent_root_rejected(tmp_path):
    with pytest.raises(DatasetFormatError):
        load_dataset(tmp_path / "missing")


def test_sample_shape_validation():
    with pytest.raises(ValueError):
        ss.ImageSample(image=np.zeros((1, 8, 8), np.float32),
                       full_mask=np.zeros((9, 9), np.uint8),
                       scribble=ScribbleMask(np.full((8, 8), 2, np.uint8)), id="x")
    with pytest.raises(ValueError):
        ScribbleMask(np.full((8, 8), 5, dtype=np.uint8))
