"""Pixel containers and a synthetic scene generator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError


@dataclass(frozen=True)
class PixelDataset:
    """N pixels with 2-D spatial coordinates, d-band spectra and optional labels.

    Arrays are copied to float64 (labels to int64) and validated on
    construction.  Labels, when given, must form the contiguous set 1..C.
    """

    coords: np.ndarray
    spectra: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        spectra = np.array(self.spectra, dtype=np.float64)
        if spectra.ndim != 2 or spectra.shape[1] < 1:
            raise ValidationError("spectra must be a 2-D array with at least one band")
        coords = np.array(self.coords, dtype=np.float64)
        if coords.shape != (spectra.shape[0], 2):
            raise ValidationError(
                f"coords must have shape ({spectra.shape[0]}, 2), got {coords.shape}"
            )
        if not (np.isfinite(spectra).all() and np.isfinite(coords).all()):
            raise ValidationError("pixel data contains NaN or Inf")
        labels = self.labels
        if labels is not None:
            raw = np.asarray(labels)
            labels = raw.astype(np.int64)
            if labels.shape != (spectra.shape[0],) or not np.array_equal(labels, raw):
                raise ValidationError("labels must be N integer class ids")
            present = np.unique(labels)
            if not np.array_equal(present, np.arange(1, present.size + 1)):
                raise ValidationError(
                    f"labels must be the contiguous set 1..C, got {present.tolist()}"
                )
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "spectra", spectra)
        object.__setattr__(self, "labels", labels)

    @property
    def n_pixels(self) -> int:
        return self.spectra.shape[0]

    @property
    def n_bands(self) -> int:
        return self.spectra.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max())

    def with_spectra(self, spectra) -> "PixelDataset":
        return PixelDataset(self.coords, spectra, self.labels)


def _near_square(n):
    """Factor n = h * w with h <= w and h as close to sqrt(n) as possible."""
    h = int(np.floor(np.sqrt(n)))
    while n % h:
        h -= 1
    return h, n // h


def _rect(h, w, count, top, left):
    rows, cols = np.divmod(np.arange(count), w)
    return np.column_stack([rows + top, cols + left]).astype(np.float64)


def _prototypes(rng, classes, bands):
    # smooth reflectance-like curves: a few gaussian bumps on a baseline
    grid = np.linspace(0.0, 1.0, bands)
    protos = np.empty((classes, bands))
    for c in range(classes):
        curve = np.full(bands, rng.uniform(0.1, 0.3))
        for _ in range(3):
            centre, width = rng.uniform(0, 1), rng.uniform(0.08, 0.3)
            curve += rng.uniform(0.1, 0.5) * np.exp(-0.5 * ((grid - centre) / width) ** 2)
        protos[c] = curve
    return np.clip(protos, 0.0, 1.0)


def generate_synthetic(
    classes=3,
    per_class=100,
    bands=20,
    spatial_layout="blocks",
    noise=0.02,
    seed=0,
):
    """Generate a labelled scene of class-pure spatial regions.

    Every pixel spectrum is its class prototype plus isotropic Gaussian noise
    with standard deviation ``noise``.  With ``"blocks"`` each class occupies
    one rectangle, the rectangles placed side by side; ``"checker"`` splits
    each class into tiles laid out so that neighbouring tiles belong to
    different classes.
    """
    if classes < 2:
        raise ValidationError("need at least 2 classes")
    if per_class < 1 or bands < 1:
        raise ValidationError("per_class and bands must be positive")
    if noise < 0:
        raise ValidationError("noise must be non-negative")
    if spatial_layout not in ("blocks", "checker"):
        raise ValidationError(f"unknown spatial layout {spatial_layout!r}")

    rng = np.random.default_rng(seed)
    protos = _prototypes(rng, classes, bands)

    coords, labels = [], []
    if spatial_layout == "blocks":
        h, w = _near_square(per_class)
        for c in range(classes):
            coords.append(_rect(h, w, per_class, 0, c * (w + 1)))
            labels.append(np.full(per_class, c + 1))
    else:
        pieces = next(p for p in (4, 2, 1) if per_class % p == 0)
        h, w = _near_square(per_class // pieces)
        ncols = classes + 1
        for piece in range(pieces):
            for c in range(classes):
                slot = piece * classes + c
                r, q = divmod(slot, ncols)
                coords.append(_rect(h, w, per_class // pieces, r * h, q * w))
                labels.append(np.full(per_class // pieces, c + 1))
    coords = np.vstack(coords)
    labels = np.concatenate(labels)
    spectra = protos[labels - 1] + noise * rng.standard_normal((labels.size, bands))
    return PixelDataset(coords, spectra, labels)


def toy_scene(seed=0, bands=20, noise=0.02):
    """Fifteen pixels from three classes, the size used for trajectory plots."""
    return generate_synthetic(3, 5, bands, "blocks", noise, seed)
