import os

import numpy as np
import pytest

from sparsedense.oracle import check_distribution_invariance, conditional_expectation
from sparsedense.quadrants import (
    load_dataset,
    quadrant_distribution,
    render_pattern,
    render_quadrant_image,
    sample_dataset,
    write_dataset,
)
from sparsedense.sampling import Shift, apply_mask, apply_shift, make_sparse_dense_masks, pixel


class TestRenderPattern:
    def test_p1_rows_alternate_along_i2(self):
        block = render_pattern("P1", 4)
        for i1 in range(1, 5):
            assert [pixel(block, i1, i2) for i2 in range(1, 5)] == [1.0, 0.0, 1.0, 0.0]

    def test_p2_columns_alternate_along_i1(self):
        block = render_pattern("P2", 4)
        for i2 in range(1, 5):
            assert [pixel(block, i1, i2) for i1 in range(1, 5)] == [1.0, 0.0, 1.0, 0.0]

    def test_p3_checkerboard(self):
        block = render_pattern("P3", 4)
        for i1 in range(1, 5):
            for i2 in range(1, 5):
                assert pixel(block, i1, i2) == (1.0 if (i1 + i2) % 2 == 0 else 0.0)

    def test_stripe_patterns_coincide_on_odd_lattice(self):
        blocks = [render_pattern(k, 8) for k in ("P1", "P2", "P3")]
        lattice = np.zeros((8, 8), dtype=np.uint8)
        lattice[0::2, 0::2] = 1
        downsampled = [apply_mask(b, lattice) for b in blocks]
        assert np.array_equal(downsampled[0], downsampled[1])
        assert np.array_equal(downsampled[1], downsampled[2])
        assert np.all(downsampled[0][lattice == 1] == 1.0)

    def test_p4_corner_square(self):
        block = render_pattern("P4", 8)
        assert pixel(block, 1, 1) == 1.0
        assert pixel(block, 2, 2) == 1.0
        assert pixel(block, 3, 3) == 0.0
        assert block.sum() == 4.0

    def test_rejects_odd_size(self):
        with pytest.raises(ValueError):
            render_pattern("P1", 5)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            render_pattern("P9", 4)


class TestRenderQuadrantImage:
    def test_placement0_layout(self):
        img = render_quadrant_image(16, 0)
        q = 8
        assert np.array_equal(img[:q, :q], render_pattern("P4", q))        # upper-left
        assert np.array_equal(img[:q, q:], render_pattern("P1", q))        # upper-right
        assert np.array_equal(img[q:, q:], render_pattern("P2", q))        # lower-right
        assert np.array_equal(img[q:, :q], render_pattern("P3", q))        # lower-left

    def test_placements_are_family_shifts_of_placement0(self):
        n = 16
        base = render_quadrant_image(n, 0)
        family_shifts = [Shift(0, 0), Shift(8, 0), Shift(0, 8), Shift(8, 8)]
        matches = {}
        for k in range(4):
            img = render_quadrant_image(n, k)
            for s in family_shifts:
                if np.array_equal(img, apply_shift(base, s)):
                    matches[k] = s
                    break
        assert len(matches) == 4
        assert sorted(matches.values()) == sorted(family_shifts)

    def test_four_distinct_images(self):
        images = {render_quadrant_image(16, k).tobytes() for k in range(4)}
        assert len(images) == 4

    def test_rejects_bad_placement(self):
        with pytest.raises(ValueError):
            render_quadrant_image(16, 4)


class TestQuadrantDistribution:
    def test_four_atoms_equal_probability(self):
        d = quadrant_distribution(16)
        assert len(d.atoms) == 4
        assert all(p == 0.25 for _, p in d.atoms)

    def test_invariant_under_half_shifts(self):
        d = quadrant_distribution(16)
        for s in [Shift(8, 0), Shift(0, 8), Shift(8, 8)]:
            assert check_distribution_invariance(d, s)

    def test_observation_identifies_atom(self):
        d = quadrant_distribution(16)
        omega, _, _ = make_sparse_dense_masks(16)
        for img, _ in d.atoms:
            y = apply_mask(img, omega)
            assert np.array_equal(conditional_expectation(d, omega, y), img)

    def test_ambiguity_inside_single_quadrant(self):
        # within any stripe quadrant the observed pixels are identical across
        # the three placements that put a stripe pattern there
        n = 16
        omega, _, _ = make_sparse_dense_masks(n)
        q = n // 2
        # upper-right quadrant is a stripe pattern for placements 0, 2, 3
        views = []
        for k in (0, 2, 3):
            masked = apply_mask(render_quadrant_image(n, k), omega)
            views.append(masked[:q, q:])
        assert np.array_equal(views[0], views[1])
        assert np.array_equal(views[1], views[2])


class TestDatasets:
    def test_counts_and_manifest(self, tmp_path):
        rows = write_dataset(16, (64, 16, 16), seed=0, out_dir=tmp_path)
        assert len(rows) == 96
        files = [f for f in os.listdir(tmp_path) if f.endswith(".sdi1")]
        assert len(files) == 96
        splits = [r[1] for r in rows]
        assert splits.count("train") == 64
        assert splits.count("val") == 16
        assert splits.count("test") == 16

    def test_deterministic_bytes(self, tmp_path):
        dir_a = tmp_path / "a"
        dir_b = tmp_path / "b"
        write_dataset(16, (4, 2, 2), seed=123, out_dir=dir_a)
        write_dataset(16, (4, 2, 2), seed=123, out_dir=dir_b)
        for name in sorted(os.listdir(dir_a)):
            with open(dir_a / name, "rb") as fa, open(dir_b / name, "rb") as fb:
                assert fa.read() == fb.read(), name

    def test_roundtrip_load(self, tmp_path):
        write_dataset(16, (3, 2, 2), seed=7, out_dir=tmp_path)
        ds = load_dataset(tmp_path)
        assert len(ds.train) == 3 and len(ds.val) == 2 and len(ds.test) == 2
        assert ds.side() == 16
        reference = sample_dataset(16, (3, 2, 2), seed=7)
        for a, b in zip(ds.train, reference.train):
            assert np.array_equal(a, b)

    def test_rejects_empty_split(self, tmp_path):
        with pytest.raises(ValueError):
            write_dataset(16, (4, 0, 2), seed=0, out_dir=tmp_path)
