"""Images as discrete measures on the unit square, plus the synthetic disk dataset.

Pixel (row, col) of an H-by-W image maps to the point
((col+0.5)/W, 1-(row+0.5)/H): top-left pixel centers land near (0, 1), i.e.
the raster is placed in Cartesian orientation. Every support point lies
strictly inside [0,1]^2, so all pairwise distances stay below sqrt(2); with
the default length scale kappa=1 this keeps the Hellinger--Kantorovich cost
finite across a whole image pair.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import AllMassBelowThreshold, CorruptCache, DiskOutOfDomain, EmptyDataset

UOTD_MAGIC = b"UOTD"
UOTD_VERSION = 1


@dataclass(frozen=True)
class ImageRecord:
    """A single raster image with intensities in [0,1] and an integer class label."""

    pixels: np.ndarray  # (H, W) float64
    label: int

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise ValueError(f"pixels must be a nonempty 2-D grid, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixel intensities must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel intensities must lie in [0, 1]")
        if self.label < 0:
            raise ValueError("label must be a nonnegative integer")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class GridMeasure:
    """A discrete nonnegative measure: support points in [0,1]^2 with positive weights."""

    coords: np.ndarray   # (n, 2) float64
    weights: np.ndarray  # (n,) float64, strictly positive

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] == 0:
            raise ValueError(f"coords must be (n, 2) with n >= 1, got {coords.shape}")
        if weights.shape != (coords.shape[0],):
            raise ValueError("weights must match coords length")
        if not np.all(np.isfinite(coords)) or not np.all(np.isfinite(weights)):
            raise ValueError("coords and weights must be finite")
        if np.any(weights <= 0.0):
            raise ValueError("weights must be strictly positive")
        if coords.min() < 0.0 or coords.max() > 1.0:
            raise ValueError("coords must lie inside [0,1]^2")
        if len(np.unique(coords, axis=0)) != len(coords):
            raise ValueError("coords must be pairwise distinct")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "weights", weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.weights)

    def scaled(self, factor: float) -> "GridMeasure":
        """Same support with all weights multiplied by `factor` (> 0)."""
        return GridMeasure(self.coords, self.weights * float(factor))


@dataclass(frozen=True)
class MeasureConversionParams:
    """How an image becomes a measure.

    normalize=True rescales to total mass 1 (the W2 convention);
    normalize=False keeps intensity-proportional mass divided by
    `mass_calibration` (the HK / Euclidean convention, with the divisor
    usually the dataset mean mass so the average measure has mass ~1).
    """

    normalize: bool = True
    support_threshold: float = 1e-6
    mass_calibration: float = 1.0

    def __post_init__(self):
        if self.support_threshold < 0.0:
            raise ValueError("support_threshold must be >= 0")
        if self.mass_calibration <= 0.0:
            raise ValueError("mass_calibration must be > 0")


def pixel_grid(height: int, width: int) -> np.ndarray:
    """(H*W, 2) array of pixel-center coordinates, row-major, as (x, y) pairs."""
    xs = (np.arange(width, dtype=np.float64) + 0.5) / width
    ys = 1.0 - (np.arange(height, dtype=np.float64) + 0.5) / height
    xx, yy = np.meshgrid(xs, ys)
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def image_to_measure(img: ImageRecord, params: MeasureConversionParams) -> GridMeasure:
    """Convert an image to a measure supported on its above-threshold pixel centers."""
    flat = img.pixels.ravel()
    keep = flat > params.support_threshold
    if not keep.any():
        raise AllMassBelowThreshold(
            f"no pixel intensity exceeds threshold {params.support_threshold}"
        )
    coords = pixel_grid(img.height, img.width)[keep]
    weights = flat[keep]
    if params.normalize:
        weights = weights / weights.sum()
    else:
        weights = weights / params.mass_calibration
    return GridMeasure(coords, weights)


def dataset_mean_mass(dataset: list[ImageRecord]) -> float:
    """Mean over images of the summed pixel intensities (the mass calibration divisor)."""
    if not dataset:
        raise EmptyDataset("mean mass of an empty dataset is undefined")
    return float(np.mean([img.pixels.sum() for img in dataset]))


def make_disk_dataset(
    n: int,
    radius: float,
    translations: list[tuple[float, float]] | np.ndarray,
    grid_side: int,
) -> list[ImageRecord]:
    """Rasterized indicators of a translated disk, one image per translation.

    Image i is the indicator of the disk of the given radius centered at
    0.5 + translations[i], sampled at pixel centers of a grid_side x grid_side
    grid; its label is i.
    """
    translations = np.asarray(translations, dtype=np.float64)
    if translations.shape != (n, 2):
        raise ValueError(f"expected {n} translations of shape (2,), got {translations.shape}")
    if not 0.0 < radius < 0.5:
        raise ValueError("radius must lie in (0, 0.5)")
    if grid_side < 8:
        raise ValueError("grid_side must be >= 8")
    centers = 0.5 + translations
    lo = centers - radius
    hi = centers + radius
    if lo.min() < 0.0 or hi.max() > 1.0:
        k = int(np.argmax(np.maximum(-lo, hi - 1.0).max(axis=1)))
        raise DiskOutOfDomain(
            f"disk {k} (center {tuple(centers[k])}, radius {radius}) escapes the unit square"
        )
    grid = pixel_grid(grid_side, grid_side)
    records = []
    for i, c in enumerate(centers):
        inside = ((grid - c) ** 2).sum(axis=1) <= radius ** 2
        records.append(ImageRecord(inside.astype(np.float64).reshape(grid_side, grid_side), i))
    return records


# -- canonical dataset container ("UOTD") ------------------------------------

@dataclass
class UotdDataset:
    """In-memory form of the canonical dataset container."""

    images: np.ndarray  # (N, H, W) float64 in [0,1]
    labels: np.ndarray  # (N,) int64
    path: str = ""
    _records: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def height(self) -> int:
        return self.images.shape[1]

    @property
    def width(self) -> int:
        return self.images.shape[2]

    def record(self, i: int) -> ImageRecord:
        if i not in self._records:
            self._records[i] = ImageRecord(self.images[i], int(self.labels[i]))
        return self._records[i]


def write_uotd(path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write the little-endian "UOTD" container (labels as u32, pixels as f32)."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if images.ndim != 3 or len(images) != len(labels):
        raise ValueError("images must be (N, H, W) with one label per image")
    if images.size and (images.min() < 0.0 or images.max() > 1.0):
        raise ValueError("intensities must lie in [0, 1]")
    n, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(UOTD_MAGIC)
        fh.write(struct.pack("<IIII", UOTD_VERSION, n, h, w))
        fh.write(labels.astype("<u4").tobytes())
        fh.write(images.astype("<f4").tobytes())


def read_uotd(path) -> UotdDataset:
    """Read a "UOTD" container, validating magic, version, and declared sizes."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 20 or data[:4] != UOTD_MAGIC:
        raise CorruptCache(f"{path}: not a UOTD container")
    version, n, h, w = struct.unpack_from("<IIII", data, 4)
    if version != UOTD_VERSION:
        raise CorruptCache(f"{path}: unsupported UOTD version {version}")
    expected = 20 + 4 * n + 4 * n * h * w
    if len(data) != expected:
        raise CorruptCache(f"{path}: expected {expected} bytes, found {len(data)}")
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=20).astype(np.int64)
    images = (
        np.frombuffer(data, dtype="<f4", count=n * h * w, offset=20 + 4 * n)
        .astype(np.float64)
        .reshape(n, h, w)
    )
    if images.size and (not np.all(np.isfinite(images)) or images.min() < 0.0 or images.max() > 1.0):
        raise CorruptCache(f"{path}: intensities outside [0, 1]")
    return UotdDataset(images=images, labels=labels, path=str(path))
