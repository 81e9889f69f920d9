"""Subsampling operators, binary pixel masks and periodic translations.

Images live on an N x N periodic grid. Pixel coordinates are 1-based pairs
(i1, i2) with i1 the horizontal coordinate and i2 the vertical one; all index
arithmetic is modulo N. In memory an image is a plain float64 ndarray stored
row-major over (i2, i1), i.e. ``data[i2 - 1, i1 - 1]``. Use :func:`pixel` /
:func:`set_pixel` to address semantic coordinates without worrying about the
layout.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class Shift(NamedTuple):
    """Periodic translation by ``a`` pixels horizontally and ``b`` vertically."""

    a: int
    b: int


@dataclass(frozen=True)
class TranslationFamily:
    """Ordered list of L distinct shifts whose first element is the identity."""

    n: int
    shifts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        shifts = tuple(Shift(int(a) % self.n, int(b) % self.n) for a, b in self.shifts)
        object.__setattr__(self, "shifts", shifts)
        if not shifts or shifts[0] != Shift(0, 0):
            raise ValueError("first family element must be the identity shift (0, 0)")
        if len(set(shifts)) != len(shifts):
            raise ValueError("family shifts must be distinct")

    def __len__(self):
        return len(self.shifts)

    def __iter__(self):
        return iter(self.shifts)


def as_image(data) -> np.ndarray:
    """Validate and return an n x n float64 image array (n positive and even)."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"image must be square 2-D, got shape {x.shape}")
    n = x.shape[0]
    if n < 2 or n % 2 != 0:
        raise ValueError(f"image side must be a positive even integer, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains NaN or Inf")
    return x


def as_mask(bits) -> np.ndarray:
    """Validate and return an n x n uint8 mask with entries in {0, 1}."""
    m = np.asarray(bits)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"mask must be square 2-D, got shape {m.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("mask entries must be exactly 0 or 1")
    return m.astype(np.uint8)


def pixel(x: np.ndarray, i1: int, i2: int):
    """Value at semantic coordinate (i1, i2), 1-based and N-periodic."""
    n = x.shape[0]
    return x[(i2 - 1) % n, (i1 - 1) % n]


def set_pixel(x: np.ndarray, i1: int, i2: int, value) -> None:
    n = x.shape[0]
    x[(i2 - 1) % n, (i1 - 1) % n] = value


def shift_inverse(s: Shift, n: int) -> Shift:
    return Shift((n - s.a) % n, (n - s.b) % n)


def shift_compose(s1: Shift, s2: Shift, n: int) -> Shift:
    return Shift((s1.a + s2.a) % n, (s1.b + s2.b) % n)


def apply_mask(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Pointwise masking: keep x where m is 1, zero elsewhere.

    Equals zero_upsample(subsample(x, m), m); implemented with ``np.where`` so
    that masked-out entries never influence the result, whatever they contain.
    """
    if x.shape != m.shape:
        raise ValueError("mask/image size differ")
    return np.where(m != 0, x, 0.0)


def subsample(x: np.ndarray, m: np.ndarray) -> list:
    """Restrict x to the pixels selected by m.

    Returns a list of ((i1, i2), value) pairs in row-major order of (i2, i1),
    using 1-based coordinates.
    """
    if x.shape != m.shape:
        raise ValueError("mask/image size differ")
    rows, cols = np.nonzero(m)
    return [((int(c) + 1, int(r) + 1), float(x[r, c])) for r, c in zip(rows, cols)]


def zero_upsample(values, m: np.ndarray) -> np.ndarray:
    """Adjoint of subsample: place values back on the grid, zeros elsewhere.

    ``values`` is either the pair list produced by :func:`subsample` or a flat
    sequence of values in the same row-major support order.
    """
    values = list(values)
    vals = [v for _, v in values] if values and isinstance(values[0], tuple) else values
    rows, cols = np.nonzero(m)
    if len(vals) != len(rows):
        raise ValueError(f"expected {len(rows)} values for the mask support, got {len(vals)}")
    out = np.zeros(m.shape, dtype=np.float64)
    out[rows, cols] = vals
    return out


def apply_shift(x: np.ndarray, s: Shift) -> np.ndarray:
    """Translate periodically: output(i1, i2) = x(i1 + a, i2 + b) mod n."""
    a, b = s
    return np.roll(x, shift=(-b, -a), axis=(0, 1))


def make_sparse_dense_masks(n: int):
    """Sparse-dense sampling design: odd-odd lattice plus one dense quadrant.

    Returns (omega, b, family) where omega selects all (odd, odd) coordinate
    pairs, b selects the quadrant {1..n/2} x {1..n/2} and the family holds the
    four translations by multiples of n/2. Requires n divisible by 4 so the
    quadrant corner lands on the odd lattice.
    """
    if n < 4 or n % 4 != 0:
        raise ValueError(f"side length must be divisible by 4, got {n}")
    omega = np.zeros((n, n), dtype=np.uint8)
    omega[0::2, 0::2] = 1
    b = np.zeros((n, n), dtype=np.uint8)
    b[: n // 2, : n // 2] = 1
    family = TranslationFamily(n, ((0, 0), (n // 2, 0), (0, n // 2), (n // 2, n // 2)))
    return omega, b, family


def make_generalized_masks(n: int, patch: int):
    """Same design with a patch x patch supervision region.

    The translation family contains all (l*patch, k*patch) shifts, so the
    translated copies of the supervision patch tile the whole grid.
    """
    if n < 4 or n % 4 != 0:
        raise ValueError(f"side length must be divisible by 4, got {n}")
    if patch < 1 or n % patch != 0:
        raise ValueError(f"patch {patch} must divide the side length {n}")
    omega = np.zeros((n, n), dtype=np.uint8)
    omega[0::2, 0::2] = 1
    b = np.zeros((n, n), dtype=np.uint8)
    b[:patch, :patch] = 1
    reps = n // patch
    shifts = [(l * patch, k * patch) for k in range(reps) for l in range(reps)]
    shifts.sort(key=lambda s: (s != (0, 0), s))  # identity first, rest deterministic
    return omega, b, TranslationFamily(n, tuple(shifts))


def check_partition(family: TranslationFamily, b: np.ndarray) -> bool:
    """True iff the translated copies of b's support tile the grid exactly once.

    Equivalently sum_l apply_shift(b, inverse(s_l)) is the all-ones image,
    which is the resolution-of-identity form used by the local-loss minimizer.
    """
    n = family.n
    if b.shape != (n, n):
        raise ValueError("mask/family size differ")
    total = np.zeros((n, n), dtype=np.int64)
    for s in family:
        total += apply_shift(b.astype(np.int64), shift_inverse(s, n))
    return bool(np.all(total == 1))


def check_mask_shift_invariance(m: np.ndarray, s: Shift) -> bool:
    """True iff the support of m is setwise invariant under the shift.

    This is the sufficient (pathwise) condition; the distributional check for
    masked random images lives in :mod:`sparsedense.oracle`.
    """
    return bool(np.array_equal(apply_shift(m, s), m))
