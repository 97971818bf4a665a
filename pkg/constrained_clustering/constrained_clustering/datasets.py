import gzip
import logging
from pathlib import Path

import msgspec
import numpy as np
import polars as pl

from constrained_clustering.exceptions import (
    BadMagicError,
    ConfigError,
    CountMismatchError,
    DatasetError,
    ParseError,
    TruncatedPayloadError,
)

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FeatureScaling(msgspec.Struct, frozen=True):
    mode: str = "none"  # none | minmax | global
    scale: float = 1.0


class Dataset(msgspec.Struct, frozen=True, eq=False):
    X: object
    y: object = None
    name: str = "dataset"
    feature_scaling: FeatureScaling = msgspec.field(default_factory=FeatureScaling)

    def __post_init__(self):
        if np.ndim(self.X) != 2:
            raise DatasetError(f"{self.name}: X must be an n x d matrix, got shape {np.shape(self.X)}")
        if not np.all(np.isfinite(self.X)):
            raise DatasetError(f"{self.name}: X contains non-finite values")
        if self.y is not None and len(self.y) != len(self.X):
            raise CountMismatchError(
                f"{self.name}: {len(self.X)} rows but {len(self.y)} labels"
            )

    @property
    def n(self):
        return int(self.X.shape[0])

    @property
    def dim(self):
        return int(self.X.shape[1])

    @property
    def num_classes(self):
        return 0 if self.y is None else int(len(np.unique(self.y)))

    @property
    def has_labels(self):
        return self.y is not None


def _open_maybe_gzip(path):
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic, header_dims):
    with _open_maybe_gzip(path) as f:
        raw = f.read()
    header_size = 4 * (1 + header_dims)
    if len(raw) < 4:
        raise TruncatedPayloadError(f"{path}: file too short for an IDX header")
    magic = int(np.frombuffer(raw, dtype=">u4", count=1)[0])
    if magic != expected_magic:
        raise BadMagicError(f"{path}: magic {magic:#010x}, expected {expected_magic:#010x}")
    if len(raw) < header_size:
        raise TruncatedPayloadError(f"{path}: header declares {header_dims} dims but is truncated")

    dims = [int(dim) for dim in np.frombuffer(raw, dtype=">u4", count=header_dims, offset=4)]
    expected = int(np.prod(dims))
    if len(raw) - header_size < expected:
        raise TruncatedPayloadError(
            f"{path}: dims {dims} need {expected} bytes, found {len(raw) - header_size}"
        )
    payload = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header_size)
    return payload.reshape(dims)


def load_idx(images_path, labels_path=None, name=None):
    """
    Read an IDX image file (and optional label file), gzip or plain.
    Pixels are flattened row-major and scaled to [0, 1].
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, header_dims=3)
    X = images.reshape(len(images), -1).astype(np.float64) / 255.0

    y = None
    if labels_path is not None:
        y = _read_idx(labels_path, IDX_LABELS_MAGIC, header_dims=1).astype(np.int64)
        if len(y) != len(X):
            raise CountMismatchError(
                f"{images_path} holds {len(X)} images but {labels_path} holds {len(y)} labels"
            )

    logger.info(f"Loaded {len(X)} images of dimension {X.shape[1]} from {images_path}")
    return Dataset(
        X=X,
        y=y,
        name=name or Path(images_path).name,
        feature_scaling=FeatureScaling(mode="global", scale=255.0),
    )


def write_idx(images, images_path, labels=None, labels_path=None):
    """Write uint8 images (n x rows x cols) and labels in IDX format"""
    images = np.asarray(images, dtype=np.uint8)
    header = np.array([IDX_IMAGES_MAGIC, *images.shape], dtype=">u4").tobytes()
    Path(images_path).write_bytes(header + images.tobytes())
    if labels is not None:
        labels = np.asarray(labels, dtype=np.uint8)
        header = np.array([IDX_LABELS_MAGIC, len(labels)], dtype=">u4").tobytes()
        Path(labels_path).write_bytes(header + labels.tobytes())


def load_delimited(path, has_labels=False, delimiter=","):
    """Numeric table, one instance per row; the last column is the label when has_labels"""
    text = Path(path).read_text()
    lines = (
        pl.DataFrame({"line": text.splitlines()}, schema={"line": pl.Utf8})
        .with_row_index("row", offset=1)
        .filter(pl.col("line").str.strip_chars() != "")
        .with_columns(pl.col("line").str.split(delimiter).alias("cells"))
        .with_columns(
            pl.col("cells").list.len().alias("width"),
            pl.col("cells")
            .list.eval(pl.element().str.strip_chars().cast(pl.Float64, strict=False))
            .alias("values"),
        )
    )
    if lines.is_empty():
        raise ParseError(0, f"{path} holds no data rows")

    width = lines["width"][0]
    ragged = lines.filter(pl.col("width") != width)
    if not ragged.is_empty():
        row = ragged.row(0, named=True)
        raise ParseError(int(row["row"]), f"expected {width} columns, found {row['width']}")

    rows = lines["row"].to_numpy()
    # cells that failed to parse come back as null, i.e. nan here
    table = np.array(lines["values"].to_list(), dtype=np.float64)
    unparsed = np.flatnonzero(np.isnan(table).any(axis=1))
    if len(unparsed):
        bad = unparsed[0]
        raise ParseError(int(rows[bad]), f"non-numeric cell in {lines['line'][int(bad)]!r}")

    y = None
    if has_labels:
        if table.shape[1] < 2:
            raise ParseError(int(rows[0]), "labelled rows need at least one feature column")
        labels = table[:, -1]
        bad = np.flatnonzero(labels != np.round(labels))
        if len(bad):
            raise ParseError(int(rows[bad[0]]), f"label {labels[bad[0]]} is not an integer")
        y = labels.astype(np.int64)
        table = table[:, :-1]

    logger.info(f"Loaded {len(table)} rows of dimension {table.shape[1]} from {path}")
    return Dataset(X=table, y=y, name=Path(path).name)


def _blob_centers(num_clusters, dim, spacing, rng):
    if num_clusters == 1:
        return np.zeros((1, dim))
    if num_clusters <= dim:
        basis, _ = np.linalg.qr(rng.standard_normal((dim, num_clusters)))
        return basis.T * (spacing / np.sqrt(2.0))
    if dim == 1:
        return (np.arange(num_clusters) * spacing)[:, None]

    directions = rng.standard_normal((num_clusters, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    gaps = np.linalg.norm(directions[:, None, :] - directions[None, :, :], axis=2)
    closest = gaps[np.triu_indices(num_clusters, 1)].min()
    return directions * (spacing / closest)


def make_blobs(num_clusters, per_cluster, dim, separation, sigma, seed=0):
    """
    Isotropic Gaussian blobs whose centres sit at least separation * sigma apart.

    Args:
        num_clusters: number of blobs
        per_cluster: points per blob
        dim: feature dimension
        separation: minimum centre distance in units of sigma
        sigma: per-coordinate standard deviation
        seed: generator seed

    Returns:
        Dataset with labels equal to the blob index, rows shuffled
    """
    if min(num_clusters, per_cluster, dim) < 1 or separation <= 0 or sigma <= 0:
        raise ConfigError("make_blobs arguments must all be positive")
    rng = np.random.default_rng(seed)
    centers = _blob_centers(num_clusters, dim, separation * sigma, rng)

    labels = np.repeat(np.arange(num_clusters), per_cluster)
    X = centers[labels] + sigma * rng.standard_normal((len(labels), dim))
    order = rng.permutation(len(labels))
    return Dataset(
        X=X[order],
        y=labels[order],
        name=f"blobs-k{num_clusters}-d{dim}-sep{separation:g}",
    )


def normalize(dataset, mode="minmax"):
    X = np.asarray(dataset.X, dtype=np.float64)
    if mode == "none":
        scaling = FeatureScaling()
        scaled = X.copy()
    elif mode == "minmax":
        low = X.min(axis=0)
        span = X.max(axis=0) - low
        span[span == 0] = 1.0
        scaled = (X - low) / span
        scaling = FeatureScaling(mode="minmax")
    elif mode == "global":
        scale = float(np.abs(X).max()) or 1.0
        scaled = X / scale
        scaling = FeatureScaling(mode="global", scale=scale)
    else:
        raise ConfigError(f"unknown scaling mode {mode!r}")
    return msgspec.structs.replace(dataset, X=scaled, feature_scaling=scaling)


def train_test_split(dataset, test_fraction, seed=0):
    """Seeded shuffle split; both parts keep at least one row"""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if dataset.n < 2:
        raise DatasetError("need at least two rows to split")
    order = np.random.default_rng(seed).permutation(dataset.n)
    test_size = min(max(1, int(round(test_fraction * dataset.n))), dataset.n - 1)
    test_rows, train_rows = order[:test_size], order[test_size:]

    def subset(rows, suffix):
        return msgspec.structs.replace(
            dataset,
            X=dataset.X[rows],
            y=None if dataset.y is None else dataset.y[rows],
            name=f"{dataset.name}-{suffix}",
        )

    return subset(train_rows, "train"), subset(test_rows, "test")
