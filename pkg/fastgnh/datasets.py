"""
Dataset ingestion: MNIST in IDX format and CIFAR-10 binary batches.
"""
import gzip
import logging
import warnings

import numpy as np

from .exceptions import FormatError
from .network import Batch
from .util import rng_stream


logger = logging.getLogger(__name__)

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32
NUM_CLASSES = 10


def _read_bytes(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _idx_header(data, magic, ndim, path):
    if len(data) < 4 + 4 * ndim:
        raise FormatError(f"{path}: file too short for an IDX header", offset=len(data))
    found = int(np.frombuffer(data, dtype=">u4", count=1)[0])
    if found != magic:
        raise FormatError(
            f"{path}: bad IDX magic 0x{found:08x}, expected 0x{magic:08x}", offset=0
        )
    return [int(d) for d in np.frombuffer(data, dtype=">u4", count=ndim, offset=4)]


def read_idx_images(path):
    """(count, rows * cols) uint8 pixels"""
    data = _read_bytes(path)
    count, rows, cols = _idx_header(data, IDX_IMAGES, 3, path)
    start = 16
    needed = count * rows * cols
    if len(data) - start != needed:
        raise FormatError(
            f"{path}: expected {needed} pixel bytes for {count} images of {rows}x{cols}, "
            f"found {len(data) - start}",
            offset=min(len(data), start + needed),
        )
    return np.frombuffer(data, dtype=np.uint8, offset=start).reshape(count, rows * cols)


def read_idx_labels(path):
    data = _read_bytes(path)
    (count,) = _idx_header(data, IDX_LABELS, 1, path)
    start = 8
    if len(data) - start != count:
        raise FormatError(
            f"{path}: expected {count} label bytes, found {len(data) - start}",
            offset=min(len(data), start + count),
        )
    labels = np.frombuffer(data, dtype=np.uint8, offset=start)
    bad = np.flatnonzero(labels >= NUM_CLASSES)
    if bad.size:
        raise FormatError(f"{path}: label {labels[bad[0]]} out of range", offset=start + int(bad[0]))
    return labels


def subsample_indices(total, n, seed):
    """Sorted random subset of size n, or everything when n is None or too large"""
    if n is None or n >= total:
        if n is not None and n > total:
            warnings.warn(f"Requested {n} data points but only {total} are available")
        return np.arange(total)
    return np.sort(rng_stream(seed).choice(total, size=n, replace=False))


def subsample(batch: Batch, n, seed) -> Batch:
    return batch.subset(subsample_indices(batch.n, n, seed))


def _build(pixels, classes, autoencoder, n, seed):
    indices = subsample_indices(len(pixels), n, seed)
    inputs = pixels[indices].astype(np.float64) / 255.0
    if autoencoder:
        return Batch.create(inputs, inputs)
    return Batch.create(inputs, classes[indices], num_classes=NUM_CLASSES)


def ingest_mnist(images_path, labels_path=None, autoencoder=False, n=None, seed=0) -> Batch:
    """
    Reads MNIST images (and labels) into a Batch with pixels scaled to [0, 1].

    Parameters
    ----------
    images_path: str
        IDX image file, optionally gzip-compressed
    labels_path: Optional[str]
        IDX label file; required unless `autoencoder`
    autoencoder: bool
        Use the inputs as labels
    n: Optional[int]
        Deterministic random subset of this size
    seed: int

    Raises
    ------
    FormatError
        On a bad magic number, inconsistent counts or a truncated file
    """
    pixels = read_idx_images(images_path)
    classes = None
    if not autoencoder:
        if labels_path is None:
            raise FormatError("A classifier batch needs a label file")
        classes = read_idx_labels(labels_path)
        if len(classes) != len(pixels):
            raise FormatError(
                f"{len(pixels)} images but {len(classes)} labels", offset=4
            )
    batch = _build(pixels, classes, autoencoder, n, seed)
    logger.info("Ingested %d MNIST images from %s", batch.n, images_path)
    return batch


def read_cifar_batch(path):
    """Returns (pixels (count, 3072) uint8, classes (count,))"""
    data = _read_bytes(path)
    if len(data) == 0 or len(data) % CIFAR_RECORD:
        raise FormatError(
            f"{path}: size {len(data)} is not a multiple of the {CIFAR_RECORD}-byte record",
            offset=(len(data) // CIFAR_RECORD) * CIFAR_RECORD,
        )
    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    classes = records[:, 0]
    bad = np.flatnonzero(classes >= NUM_CLASSES)
    if bad.size:
        raise FormatError(f"{path}: label {classes[bad[0]]} out of range", offset=int(bad[0]) * CIFAR_RECORD)
    return records[:, 1:], classes


def ingest_cifar(paths, autoencoder=False, n=None, seed=0) -> Batch:
    """
    Reads one or more CIFAR-10 binary batch files; images are flattened to
    3072-vectors (channel-major, as stored) scaled to [0, 1].
    """
    if isinstance(paths, str):
        paths = [paths]
    parts = [read_cifar_batch(path) for path in paths]
    pixels = np.concatenate([p for p, _ in parts])
    classes = np.concatenate([c for _, c in parts])
    batch = _build(pixels, classes, autoencoder, n, seed)
    logger.info("Ingested %d CIFAR-10 images from %d files", batch.n, len(paths))
    return batch
