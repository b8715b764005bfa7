"""Dataset ingestion, partitioning, and batching.

Images ship in the IDX container format: a big-endian magic word
(0x00000803 for images, 0x00000801 for labels), big-endian 32-bit
dimension sizes, then raw unsigned bytes.  Pixels are normalized to [0,1]
on load.  Partitioners and the batcher are pure, seeded functions.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, IdxFormatError, IdxLengthError, InputError
from .nn import Batch
from . import rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"

#: Canonical archive names and their published MD5 digests, used by
#: `flsim data fetch` to verify downloads.  SHA-256 digests are computed
#: and printed at fetch time so they can be pinned once obtained.
MNIST_ARCHIVES = [
    (TRAIN_IMAGES + ".gz", "f68b3c2dcbeaaa9fbdd348bbdeb94873"),
    (TRAIN_LABELS + ".gz", "d53e105ee54ea40749a09fcbcd1e9432"),
    (TEST_IMAGES + ".gz", "9fb629c4189551a2d022fa330f9573f3"),
    (TEST_LABELS + ".gz", "ec29112dd5afa0611ce80d1b7f02629c"),
]

DEFAULT_MIRROR = "https://ossci-datasets.s3.amazonaws.com/mnist/"


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of normalized samples."""

    images: np.ndarray  # (n, ...) float32 in [0,1]
    labels: np.ndarray  # (n,) int64
    name: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise InputError("images and labels differ in length")

    def __len__(self):
        return len(self.images)

    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0


@dataclass(frozen=True)
class Partition:
    """One client's slice of a dataset (indices, not copies)."""

    dataset: Dataset
    client_id: int
    sample_indices: np.ndarray

    def __len__(self):
        return len(self.sample_indices)

    def labels(self) -> np.ndarray:
        return self.dataset.labels[self.sample_indices]


# ---------------------------------------------------------------------------
# IDX parsing / writing
# ---------------------------------------------------------------------------

def parse_idx_images(data: bytes) -> np.ndarray:
    """Parse an IDX image stream into a (count, rows, cols) float32 array."""
    if len(data) < 16:
        raise IdxLengthError("image stream shorter than its header")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"bad image magic 0x{magic:08x}")
    expected = 16 + count * rows * cols
    if len(data) < expected:
        raise IdxLengthError(
            f"image payload truncated: need {expected} bytes, have {len(data)}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16)
    return (pixels.astype(np.float32) / 255.0).reshape(count, rows, cols)


def parse_idx_labels(data: bytes) -> np.ndarray:
    """Parse an IDX label stream into an int64 array."""
    if len(data) < 8:
        raise IdxLengthError("label stream shorter than its header")
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABEL_MAGIC:
        raise IdxFormatError(f"bad label magic 0x{magic:08x}")
    if len(data) < 8 + count:
        raise IdxLengthError(
            f"label payload truncated: need {8 + count} bytes, have {len(data)}")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8).astype(np.int64)


def write_idx_images(images: np.ndarray, path: Path):
    """Inverse of parse_idx_images; expects values in [0,1]."""
    arr = np.asarray(images)
    n, rows, cols = arr.shape
    payload = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(payload.tobytes())


def write_idx_labels(labels: np.ndarray, path: Path):
    arr = np.asarray(labels)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, len(arr)))
        fh.write(arr.astype(np.uint8).tobytes())


def inspect_idx(data: bytes) -> str:
    """Human-readable header summary, e.g. 'magic=2051 count=60000 rows=28 cols=28'."""
    if len(data) < 8:
        raise IdxLengthError("stream shorter than any IDX header")
    magic, count = struct.unpack(">II", data[:8])
    if magic == IMAGE_MAGIC:
        if len(data) < 16:
            raise IdxLengthError("image stream shorter than its header")
        _, count, rows, cols = struct.unpack(">IIII", data[:16])
        return f"magic={magic} count={count} rows={rows} cols={cols}"
    if magic == LABEL_MAGIC:
        return f"magic={magic} count={count}"
    raise IdxFormatError(f"bad magic 0x{magic:08x}")


def _check_label_range(labels: np.ndarray, num_classes: int):
    if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(
            f"labels outside [0, {num_classes}): {labels.min()}..{labels.max()}")


def load_idx_dataset(images_path: Path, labels_path: Path, name: str = "",
                     num_classes: int = 10) -> Dataset:
    """Load and validate a paired image/label IDX file set."""
    images = parse_idx_images(Path(images_path).read_bytes())
    labels = parse_idx_labels(Path(labels_path).read_bytes())
    if len(images) != len(labels):
        raise DataError(
            f"{images_path} has {len(images)} images but "
            f"{labels_path} has {len(labels)} labels")
    _check_label_range(labels, num_classes)
    return Dataset(images, labels, name=name)


def load_mnist(data_dir: Path, split: str = "train") -> Dataset:
    """Load the train or test split from raw IDX files in data_dir."""
    data_dir = Path(data_dir)
    if split == "train":
        images, labels = TRAIN_IMAGES, TRAIN_LABELS
    elif split == "test":
        images, labels = TEST_IMAGES, TEST_LABELS
    else:
        raise InputError(f"unknown split {split!r}")
    img_path = data_dir / images
    lbl_path = data_dir / labels
    for p in (img_path, lbl_path):
        if not p.exists():
            raise DataError(f"missing dataset file {p}")
    return load_idx_dataset(img_path, lbl_path, name=f"mnist-{split}")


# ---------------------------------------------------------------------------
# Fetching
# ---------------------------------------------------------------------------

def fetch_mnist(data_dir: Path, base_url: str = DEFAULT_MIRROR,
                log=print) -> list[Path]:
    """Download, verify, and unpack the four archives into data_dir.

    Each archive's MD5 is checked against the recorded digest; the SHA-256
    of the downloaded bytes is printed so it can be pinned in deployments.
    Already-unpacked files are left untouched.
    """
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for gz_name, md5_expected in MNIST_ARCHIVES:
        raw_name = gz_name[:-3]
        target = data_dir / raw_name
        if target.exists():
            log(f"{raw_name}: already present, skipping")
            continue
        url = base_url.rstrip("/") + "/" + gz_name
        log(f"fetching {url}")
        try:
            with urllib.request.urlopen(url) as resp:
                blob = resp.read()
        except Exception as exc:
            raise DataError(f"download failed for {url}: {exc}") from exc
        md5 = hashlib.md5(blob).hexdigest()
        sha256 = hashlib.sha256(blob).hexdigest()
        log(f"{gz_name}: md5={md5} sha256={sha256}")
        if md5 != md5_expected:
            raise DataError(
                f"{gz_name}: md5 mismatch (expected {md5_expected}, got {md5})")
        target.write_bytes(gzip.decompress(blob))
        written.append(target)
        log(f"wrote {target}")
    return written


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------

def partition_iid(dataset: Dataset, num_clients: int, seed: int) -> list[Partition]:
    """Seeded shuffle, then an equal split across clients.

    Any remainder is dealt one extra sample per client starting at client 0.
    """
    n = len(dataset)
    if num_clients < 1:
        raise InputError("need at least one client")
    if num_clients > n:
        raise InputError(f"{num_clients} clients but only {n} samples")
    perm = rng.stream(seed, "iid").permutation(n)
    base, extra = divmod(n, num_clients)
    parts = []
    pos = 0
    for k in range(num_clients):
        size = base + (1 if k < extra else 0)
        parts.append(Partition(dataset, k, perm[pos:pos + size]))
        pos += size
    return parts


def partition_label_shards(dataset: Dataset, num_clients: int,
                           shards_per_client: int, seed: int) -> list[Partition]:
    """Label-skewed split: sort by label, cut into contiguous shards, deal
    shards_per_client shards to each client by a seeded permutation.

    A trailing remainder smaller than one shard is dropped.  With two
    shards per client most clients see at most two distinct labels.
    """
    n = len(dataset)
    total_shards = num_clients * shards_per_client
    shard_size = n // total_shards
    if shard_size < 1:
        raise InputError(f"{n} samples cannot fill {total_shards} shards")
    order = np.argsort(dataset.labels, kind="stable")
    deal = rng.stream(seed, "shards").permutation(total_shards)
    parts = []
    for k in range(num_clients):
        mine = deal[k * shards_per_client:(k + 1) * shards_per_client]
        chunks = [order[s * shard_size:(s + 1) * shard_size] for s in mine]
        parts.append(Partition(dataset, k, np.concatenate(chunks)))
    return parts


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

def batch_order(partition: Partition, seed: int, round_index: int,
                iteration: int) -> np.ndarray:
    """The seeded within-partition sample order used by make_batches."""
    gen = rng.stream(seed, "batch", partition.client_id, round_index, iteration)
    return gen.permutation(len(partition.sample_indices))


def make_batches(partition: Partition, batch_size: int, seed: int,
                 round_index: int, iteration: int) -> list[Batch]:
    """Deterministically shuffled batches; the final short batch is kept."""
    if batch_size < 1:
        raise InputError("batch_size must be >= 1")
    if len(partition) == 0:
        raise InputError("cannot batch an empty partition")
    order = batch_order(partition, seed, round_index, iteration)
    idx = partition.sample_indices[order]
    images = partition.dataset.images
    labels = partition.dataset.labels
    return [Batch(images[idx[i:i + batch_size]], labels[idx[i:i + batch_size]])
            for i in range(0, len(idx), batch_size)]


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def synth_dataset(num_classes: int, per_class: int, dim: int,
                  separation: float, seed: int, name: str = "synth") -> Dataset:
    """Gaussian blobs rescaled into [0,1].

    When dim >= num_classes each class mean sits on its own axis at
    norm separation/sqrt(2), making every pair of means exactly
    `separation` apart; otherwise means are random directions with the
    same norm.  Per-coordinate noise has unit variance before rescaling
    (rescaling preserves the separation-to-noise ratio).
    """
    if separation <= 0:
        raise InputError("separation must be positive")
    gen = rng.stream(seed, "synth")
    scale = separation / np.sqrt(2.0)
    if dim >= num_classes:
        means = np.zeros((num_classes, dim))
        means[np.arange(num_classes), np.arange(num_classes)] = scale
    else:
        means = gen.standard_normal((num_classes, dim))
        means /= np.linalg.norm(means, axis=1, keepdims=True)
        means *= scale
    samples = np.repeat(means, per_class, axis=0)
    samples = samples + gen.standard_normal(samples.shape)
    lo, hi = samples.min(), samples.max()
    samples = (samples - lo) / (hi - lo)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    return Dataset(samples.astype(np.float32), labels, name=name)


def subsample(dataset: Dataset, limit: int, seed: int, tag: str) -> Dataset:
    """Seeded subset of `limit` samples (order-preserving)."""
    n = len(dataset)
    if limit >= n:
        return dataset
    pick = rng.stream(seed, "subset", tag).choice(n, size=limit, replace=False)
    pick.sort()
    return Dataset(dataset.images[pick], dataset.labels[pick],
                   name=f"{dataset.name}[{limit}]")
