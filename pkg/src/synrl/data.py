"""Task generation and dataset ingestion.

Covers the random 2-D decision-boundary matching task (labels come from a
randomly instantiated "target" network) and 28x28 greyscale character
images, loaded either from a class-per-directory PNG tree or from an IDX
cache pair.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mlp as mlp_mod
from .errors import ConfigError, ShapeError
from .mlp import ActivationKind, Dataset, LayerSpec, LossKind, Mlp

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
IMAGES_FILENAME = "images-idx3-ubyte"
LABELS_FILENAME = "labels-idx1-ubyte"


@dataclass
class BoundaryTaskSpec:
    hidden_units: int = 100
    n_points: int = 2000
    weight_low: float = -1.0
    weight_high: float = 1.0
    data_low: float = -10.0
    data_high: float = 10.0
    seed: int = 0
    input_dim: int = 2
    min_class_fraction: float = 0.05
    max_attempts: int = 100

    def validate(self):
        if self.hidden_units < 1 or self.n_points < 1:
            raise ConfigError("hidden_units and n_points must be positive")
        if not self.weight_low < self.weight_high or not self.data_low < self.data_high:
            raise ConfigError("empty sampling range")


def _make_target_net(spec, rng):
    layers = [
        LayerSpec(spec.input_dim, spec.hidden_units, ActivationKind.TANH),
        LayerSpec(spec.hidden_units, 1, ActivationKind.IDENTITY),
    ]
    weights = []
    for layer in layers:
        w = rng.uniform(spec.weight_low, spec.weight_high, size=layer.weight_shape)
        w[:, 0] = 0.0  # target-net biases are exactly 0
        weights.append(w)
    return Mlp(layers, weights, LossKind.MEAN_SQUARED_EUCLIDEAN)


def generate_boundary_task(spec):
    """Build a (target net, labeled dataset) pair for boundary matching.

    X is uniform on the data range, the label is +1 where the target's
    scalar output is > 0 and -1 otherwise. If either class would hold less
    than min_class_fraction of the points (a near-constant target), the
    target is regenerated from a derived seed, up to max_attempts times.
    """
    spec.validate()
    for attempt in range(spec.max_attempts):
        rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed) & 0xFFFFFFFF, attempt]))
        target = _make_target_net(spec, rng)
        X = rng.uniform(spec.data_low, spec.data_high, size=(spec.n_points, spec.input_dim))
        out = mlp_mod.forward(target, X)
        Y = np.where(out > 0.0, 1.0, -1.0)
        positive = float(np.mean(Y > 0))
        if min(positive, 1.0 - positive) >= spec.min_class_fraction:
            if attempt > 0:
                log.info("boundary task regenerated %d time(s) to avoid a degenerate split", attempt)
            return target, Dataset(X, Y)
    raise ConfigError(f"could not generate a non-degenerate boundary task in {spec.max_attempts} attempts")


@dataclass
class ImageDatasetSpec:
    source_path: str
    image_side: int = 28
    classes: int = 10
    split_fraction: float = 0.75
    seed: int = 0

    def validate(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(f"split_fraction must be in (0,1), got {self.split_fraction}")
        if self.image_side < 1 or self.classes < 2:
            raise ConfigError("bad image_side or class count")


def _one_hot(labels, classes):
    Y = np.zeros((len(labels), classes))
    Y[np.arange(len(labels)), labels] = 1.0
    return Y


def _load_png_tree(spec):
    from PIL import Image, UnidentifiedImageError

    root = Path(spec.source_path)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if len(class_dirs) != spec.classes:
        raise ConfigError(f"expected {spec.classes} class directories under {root}, found {len(class_dirs)}")
    pixels = []
    labels = []
    skipped = 0
    for label, class_dir in enumerate(class_dirs):
        for path in sorted(class_dir.iterdir()):
            if not path.is_file():
                continue
            try:
                with Image.open(path) as img:
                    arr = np.asarray(img.convert("L"), dtype=np.uint8)
            except (OSError, UnidentifiedImageError):
                skipped += 1
                continue
            if arr.shape != (spec.image_side, spec.image_side):
                skipped += 1
                continue
            pixels.append(arr.reshape(-1))
            labels.append(label)
    if skipped:
        log.warning("skipped %d unreadable or mis-sized image files", skipped)
    if not pixels:
        raise ConfigError(f"no readable images under {root}")
    return np.array(pixels, dtype=np.uint8), np.array(labels, dtype=np.uint8)


def read_idx_pair(directory, image_side=28):
    """Read an (images, labels) IDX file pair; returns uint8 arrays."""
    directory = Path(directory)
    images_path = directory / IMAGES_FILENAME
    labels_path = directory / LABELS_FILENAME
    with open(images_path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">iiii", f.read(16))
        if magic != IDX_IMAGES_MAGIC:
            raise ConfigError(f"bad images magic in {images_path}: 0x{magic:08x}")
        if rows != image_side or cols != image_side:
            raise ConfigError(f"expected {image_side}x{image_side} images, got {rows}x{cols}")
        pixels = np.frombuffer(f.read(n * rows * cols), dtype=np.uint8).reshape(n, rows * cols)
        if pixels.shape[0] != n:
            raise ConfigError(f"truncated images file {images_path}")
    with open(labels_path, "rb") as f:
        magic, n_labels = struct.unpack(">ii", f.read(8))
        if magic != IDX_LABELS_MAGIC:
            raise ConfigError(f"bad labels magic in {labels_path}: 0x{magic:08x}")
        labels = np.frombuffer(f.read(n_labels), dtype=np.uint8)
        if labels.shape[0] != n_labels:
            raise ConfigError(f"truncated labels file {labels_path}")
    if pixels.shape[0] != labels.shape[0]:
        raise ConfigError(f"{pixels.shape[0]} images but {labels.shape[0]} labels")
    return pixels.copy(), labels.copy()


def write_idx_pair(directory, pixels, labels, image_side=28):
    """Write uint8 (pixels, labels) as a standard big-endian IDX file pair."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = pixels.shape[0]
    with open(directory / IMAGES_FILENAME, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, n, image_side, image_side))
        f.write(pixels.astype(np.uint8).tobytes())
    with open(directory / LABELS_FILENAME, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABELS_MAGIC, n))
        f.write(labels.astype(np.uint8).tobytes())


def export_idx_cache(data, directory, image_side=28, classes=10):
    """Export an image Dataset (unit-normalized pixels, one-hot labels) to IDX."""
    if data.X.shape[1] != image_side * image_side:
        raise ShapeError(f"dataset is not {image_side}x{image_side} image shaped: d={data.X.shape[1]}")
    if data.Y.shape[1] != classes:
        raise ShapeError(f"labels are not one-hot over {classes} classes")
    pixels = np.rint(data.X * 255.0).astype(np.uint8)
    labels = np.argmax(data.Y, axis=1).astype(np.uint8)
    write_idx_pair(directory, pixels, labels, image_side)


def load_image_dataset(spec):
    """Load images as a (train, val) Dataset pair.

    The source may be a class-per-directory PNG tree or a directory holding
    an IDX cache pair. Pixels are flattened row-major and scaled to [0,1],
    labels one-hot encoded; the split is a seeded permutation followed by a
    split_fraction cut.
    """
    spec.validate()
    source = Path(spec.source_path)
    if not source.exists():
        raise ConfigError(f"dataset source does not exist: {source}")
    if (source / IMAGES_FILENAME).exists():
        pixels, labels = read_idx_pair(source, spec.image_side)
    else:
        pixels, labels = _load_png_tree(spec)
    if np.any(labels >= spec.classes):
        raise ConfigError(f"label out of range for {spec.classes} classes")

    X = pixels.astype(np.float64) / 255.0
    Y = _one_hot(labels.astype(np.int64), spec.classes)

    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(X.shape[0])
    cut = int(np.floor(spec.split_fraction * X.shape[0]))
    if cut < 1 or cut >= X.shape[0]:
        raise ConfigError(f"split of {X.shape[0]} samples at {spec.split_fraction} leaves an empty side")
    train_idx, val_idx = perm[:cut], perm[cut:]
    return Dataset(X[train_idx], Y[train_idx]), Dataset(X[val_idx], Y[val_idx])
