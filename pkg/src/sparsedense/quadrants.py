"""Synthetic four-quadrant pattern images and their exact distribution.

Each image splits into four quadrants showing: (P1) horizontal lines,
(P2) vertical lines, (P3) a checkerboard, (P4) black with a white 2x2 square
in the quadrant's upper-left corner. Once one quadrant's pattern is known the
other three are fixed: P4's horizontal neighbour shows P1, its diagonal
neighbour P2 and its vertical neighbour P3. The four possible images are
cyclic shifts of each other by multiples of n/2, which makes the uniform
distribution over them invariant under the sparse-dense translation family.

P1, P2 and P3 all equal one on (odd, odd) pixels, so the three stripe-like
quadrants become indistinguishable after odd-lattice downsampling; only the
P4 corner square (which covers an observed pixel) identifies the image.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import io as sdio
from .oracle import DiscreteDistribution

PATTERN_KINDS = ("P1", "P2", "P3", "P4")

# quadrant index -> (horizontal half, vertical half); 0 = upper-left quadrant
_QUADRANT_HALVES = {0: (0, 0), 1: (1, 0), 2: (0, 1), 3: (1, 1)}


def render_pattern(kind, q) -> np.ndarray:
    """Render one q x q pattern block (local 1-based coordinates)."""
    if q < 2 or q % 2 != 0:
        raise ValueError(f"pattern block size must be even, got {q}")
    block = np.zeros((q, q), dtype=np.float64)
    if kind == "P1":      # horizontal lines: local i2 odd
        block[0::2, :] = 1.0
    elif kind == "P2":    # vertical lines: local i1 odd
        block[:, 0::2] = 1.0
    elif kind == "P3":    # checkerboard: local i1 + i2 even
        r, c = np.indices((q, q))
        block[(r + c) % 2 == 0] = 1.0
    elif kind == "P4":    # black with a white 2x2 corner square
        block[0:2, 0:2] = 1.0
    else:
        raise ValueError(f"unknown pattern kind {kind!r}")
    return block


def render_quadrant_image(n, placement) -> np.ndarray:
    """Full n x n image with P4 in the given quadrant (0..3, 0 = upper-left)."""
    if n < 4 or n % 4 != 0:
        raise ValueError(f"side length must be divisible by 4, got {n}")
    if placement not in _QUADRANT_HALVES:
        raise ValueError(f"placement must be in 0..3, got {placement}")
    q = n // 2
    h0, v0 = _QUADRANT_HALVES[placement]
    layout = {
        (h0, v0): "P4",
        (1 - h0, v0): "P1",        # horizontal neighbour
        (1 - h0, 1 - v0): "P2",    # diagonal neighbour
        (h0, 1 - v0): "P3",        # vertical neighbour
    }
    img = np.zeros((n, n), dtype=np.float64)
    for (h, v), kind in layout.items():
        img[v * q:(v + 1) * q, h * q:(h + 1) * q] = render_pattern(kind, q)
    return img


def quadrant_distribution(n) -> DiscreteDistribution:
    """Uniform law over the four placements."""
    atoms = [(render_quadrant_image(n, k), 0.25) for k in range(4)]
    return DiscreteDistribution(n, tuple(atoms))


@dataclass
class Dataset:
    """Ground-truth image splits as produced by :func:`write_dataset`."""

    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def side(self) -> int:
        for split in (self.train, self.val, self.test):
            if split:
                return split[0].shape[0]
        raise ValueError("dataset is empty")


def sample_dataset(n, counts, seed) -> Dataset:
    """Draw i.i.d. quadrant images; counts = (train, val, test)."""
    rng = np.random.default_rng(seed)
    splits = []
    for count in counts:
        if count < 1:
            raise ValueError("every split needs at least one image")
        placements = rng.integers(0, 4, size=count)
        splits.append([render_quadrant_image(n, int(k)) for k in placements])
    return Dataset(*splits)


def write_dataset(n, counts, seed, out_dir):
    """Sample a dataset and write it as SDI1 files plus a manifest CSV.

    Deterministic given the seed. Returns the manifest rows.
    """
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for split, count in zip(("train", "val", "test"), counts):
        if count < 1:
            raise ValueError("every split needs at least one image")
        placements = rng.integers(0, 4, size=count)
        for i, k in enumerate(placements):
            filename = f"{split}_{i:04d}.sdi1"
            sdio.write_sdi1(os.path.join(out_dir, filename), render_quadrant_image(n, int(k)))
            rows.append((filename, split, int(k)))
    sdio.write_manifest(os.path.join(out_dir, "manifest.csv"), rows)
    return rows


def load_dataset(data_dir) -> Dataset:
    """Load a dataset written by :func:`write_dataset` from its manifest."""
    rows = sdio.read_manifest(os.path.join(data_dir, "manifest.csv"))
    ds = Dataset()
    for filename, split, _ in rows:
        img = sdio.read_sdi1(os.path.join(data_dir, filename))
        getattr(ds, split).append(img)
    return ds
