import numpy as np
import pytest

from mafe.datasets import PixelDataset, generate_synthetic, toy_scene
from mafe.evaluation import repeated_evaluation
from mafe.exceptions import ValidationError


def test_noiseless_prototypes():
    data = generate_synthetic(3, 10, 6, noise=0.0, seed=1)
    for c in (1, 2, 3):
        block = data.spectra[data.labels == c]
        assert np.all(block == block[0])


def test_blocks_are_rectangles():
    data = generate_synthetic(3, 12, 4, seed=0)
    for c in (1, 2, 3):
        pts = data.coords[data.labels == c]
        rows, cols = np.unique(pts[:, 0]), np.unique(pts[:, 1])
        assert len(pts) == rows.size * cols.size
        assert np.all(np.diff(rows) == 1) and np.all(np.diff(cols) == 1)


def test_checker_layout_distinct_positions():
    data = generate_synthetic(3, 20, 4, spatial_layout="checker", seed=0)
    assert len({tuple(p) for p in data.coords}) == data.n_pixels
    assert np.array_equal(np.bincount(data.labels), [0, 20, 20, 20])


def test_deterministic():
    a, b = generate_synthetic(seed=3), generate_synthetic(seed=3)
    assert np.array_equal(a.spectra, b.spectra)


def test_raw_spectra_separable():
    data = generate_synthetic(3, 100, 20, noise=0.02, seed=0)
    rep = repeated_evaluation(data.spectra, data.labels, runs=3, seed=0, metric="euclidean")
    assert rep.overall_accuracy >= 99.0


def test_toy_scene_size():
    data = toy_scene()
    assert data.n_pixels == 15 and data.n_classes == 3


def test_validation():
    with pytest.raises(ValidationError):
        generate_synthetic(classes=1)
    with pytest.raises(ValidationError):
        PixelDataset(np.zeros((2, 2)), [[np.nan], [1.0]])
    with pytest.raises(ValidationError):
        PixelDataset(np.zeros((2, 2)), [[0.0], [1.0]], labels=[1, 3])
    with pytest.raises(ValidationError):
        PixelDataset(np.zeros((3, 2)), [[0.0], [1.0]])
