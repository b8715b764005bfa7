"""Stand-in digit dataset for the scaled acceptance runs.

The scaled-run criteria are written for the classic 28x28 handwritten
digit corpus.  When its IDX files are available (FLSIM_DATA_DIR), the
acceptance suite uses them directly.  In environments without the files,
this module builds a deterministic substitute with the same shape and
task structure from the bundled scikit-learn digits (real 8x8 handwritten
digits): each base image is upsampled to 28x28 and augmented with seeded
affine jitter and pixel noise, producing 6000 train / 2000 test samples,
balanced across the ten classes, with train/test built from disjoint base
images.  Files are written in IDX format and ingested through the
package's production parser.
"""

from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits

from flsim import rng
from flsim.data import (TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS,
                        write_idx_images, write_idx_labels)

SEED = 20260810
TRAIN_PER_CLASS = 600
TEST_PER_CLASS = 200
NOISE_STD = 0.02


def _augment(base28: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """One random affine variant of a 28x28 image."""
    angle = gen.uniform(-5.0, 5.0) * np.pi / 180.0
    scale = gen.uniform(0.94, 1.06)
    shear = gen.uniform(-0.03, 0.03)
    shift = gen.uniform(-1.0, 1.0, size=2)
    cos, sin = np.cos(angle), np.sin(angle)
    mat = np.array([[cos, -sin], [sin, cos]]) @ np.array([[1.0, shear], [0.0, 1.0]])
    mat /= scale
    center = np.array([13.5, 13.5])
    offset = center - mat @ center + shift
    out = ndimage.affine_transform(base28, mat, offset=offset, order=1,
                                   mode="constant", cval=0.0)
    out = out + gen.normal(0.0, NOISE_STD, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def _build_split(bases: np.ndarray, labels: np.ndarray, per_class: int,
                 stream_tag: str) -> tuple[np.ndarray, np.ndarray]:
    gen = rng.stream(SEED, stream_tag)
    images = np.empty((per_class * 10, 28, 28), dtype=np.float64)
    out_labels = np.empty(per_class * 10, dtype=np.int64)
    row = 0
    for digit in range(10):
        pool = bases[labels == digit]
        for i in range(per_class):
            base = pool[int(gen.integers(0, len(pool)))]
            images[row] = _augment(base, gen)
            out_labels[row] = digit
            row += 1
    order = gen.permutation(len(images))
    return images[order], out_labels[order]


def build_surrogate_idx(target: Path) -> Path:
    """Write the four IDX files into `target` (skips if already built)."""
    target = Path(target)
    marker = target / ".complete"
    if marker.exists():
        return target
    target.mkdir(parents=True, exist_ok=True)

    raw = load_digits()
    images8 = raw.images / 16.0
    labels = raw.target.astype(np.int64)

    # disjoint base images for train vs test, stratified per class
    split_gen = rng.stream(SEED, "base-split")
    train_mask = np.zeros(len(labels), dtype=bool)
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        idx = idx[split_gen.permutation(len(idx))]
        cut = int(round(len(idx) * 0.8))
        train_mask[idx[:cut]] = True

    bases28 = np.stack([
        np.clip(ndimage.zoom(img, 3.5, order=3), 0.0, 1.0) for img in images8
    ])

    train_x, train_y = _build_split(bases28[train_mask], labels[train_mask],
                                    TRAIN_PER_CLASS, "train")
    test_x, test_y = _build_split(bases28[~train_mask], labels[~train_mask],
                                  TEST_PER_CLASS, "test")

    write_idx_images(train_x, target / TRAIN_IMAGES)
    write_idx_labels(train_y, target / TRAIN_LABELS)
    write_idx_images(test_x, target / TEST_IMAGES)
    write_idx_labels(test_y, target / TEST_LABELS)
    marker.write_text("ok\n")
    return target
