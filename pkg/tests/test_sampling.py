import numpy as np
import pytest

from sparsedense.sampling import (
    Shift,
    TranslationFamily,
    apply_mask,
    apply_shift,
    as_image,
    as_mask,
    check_mask_shift_invariance,
    check_partition,
    make_generalized_masks,
    make_sparse_dense_masks,
    pixel,
    set_pixel,
    shift_compose,
    shift_inverse,
    subsample,
    zero_upsample,
)


def odd_odd_mask(n):
    m = np.zeros((n, n), dtype=np.uint8)
    m[0::2, 0::2] = 1
    return m


class TestValidation:
    def test_as_image_rejects_odd_side(self):
        with pytest.raises(ValueError):
            as_image(np.zeros((3, 3)))

    def test_as_image_rejects_nan(self):
        bad = np.zeros((2, 2))
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            as_image(bad)

    def test_as_mask_rejects_non_binary(self):
        with pytest.raises(ValueError):
            as_mask(np.full((2, 2), 0.5))

    def test_family_requires_identity_first(self):
        with pytest.raises(ValueError):
            TranslationFamily(4, ((1, 0), (0, 0)))

    def test_family_rejects_duplicates(self):
        with pytest.raises(ValueError):
            TranslationFamily(4, ((0, 0), (2, 0), (2, 0)))


class TestApplyMask:
    def test_identity_mask(self):
        x = np.ones((2, 2))
        assert np.array_equal(apply_mask(x, np.ones((2, 2), dtype=np.uint8)), x)

    def test_annihilating_mask(self):
        x = np.ones((2, 2))
        assert np.array_equal(apply_mask(x, np.zeros((2, 2), dtype=np.uint8)), np.zeros((2, 2)))

    def test_odd_mask_elementwise_reference(self):
        rng = np.random.default_rng(7)
        x = rng.random((4, 4))
        m = odd_odd_mask(4)
        out = apply_mask(x, m)
        for i1 in range(1, 5):
            for i2 in range(1, 5):
                expected = pixel(x, i1, i2) if (i1 % 2 == 1 and i2 % 2 == 1) else 0.0
                assert pixel(out, i1, i2) == expected

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="mask/image size differ"):
            apply_mask(np.ones((2, 2)), np.ones((4, 4), dtype=np.uint8))

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        x = rng.random((8, 8))
        m = odd_odd_mask(8)
        once = apply_mask(x, m)
        assert np.array_equal(apply_mask(once, m), once)


class TestSubsample:
    def test_full_mask_counts(self):
        x = np.arange(4.0).reshape(2, 2)
        entries = subsample(x, np.ones((2, 2), dtype=np.uint8))
        assert len(entries) == 4

    def test_empty_mask(self):
        x = np.arange(4.0).reshape(2, 2)
        assert subsample(x, np.zeros((2, 2), dtype=np.uint8)) == []

    def test_row_major_order_and_coordinates(self):
        x = np.zeros((4, 4))
        set_pixel(x, 3, 1, 5.0)
        set_pixel(x, 1, 3, 7.0)
        m = odd_odd_mask(4)
        entries = subsample(x, m)
        assert entries[0][0] == (1, 1)
        assert ((3, 1), 5.0) in entries
        assert ((1, 3), 7.0) in entries

    def test_roundtrip_matches_apply_mask(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = rng.random((8, 8))
            m = (rng.random((8, 8)) < 0.4).astype(np.uint8)
            assert np.array_equal(zero_upsample(subsample(x, m), m), apply_mask(x, m))

    def test_adjointness(self):
        rng = np.random.default_rng(13)
        x = rng.random((8, 8))
        m = (rng.random((8, 8)) < 0.5).astype(np.uint8)
        vals = [v for _, v in subsample(x, m)]
        y = rng.random(len(vals))
        lhs = float(np.dot(vals, y))
        rhs = float(np.sum(x * zero_upsample(y, m)))
        assert abs(lhs - rhs) <= 1e-12


class TestApplyShift:
    def test_identity(self):
        rng = np.random.default_rng(0)
        x = rng.random((4, 4))
        assert np.array_equal(apply_shift(x, Shift(0, 0)), x)

    def test_two_by_two_reference(self):
        # x(1,1)=1, x(2,1)=2, x(1,2)=3, x(2,2)=4, shifted by (1,0)
        x = np.zeros((2, 2))
        set_pixel(x, 1, 1, 1.0)
        set_pixel(x, 2, 1, 2.0)
        set_pixel(x, 1, 2, 3.0)
        set_pixel(x, 2, 2, 4.0)
        out = apply_shift(x, Shift(1, 0))
        assert pixel(out, 1, 1) == 2.0
        assert pixel(out, 2, 1) == 1.0
        assert pixel(out, 1, 2) == 4.0
        assert pixel(out, 2, 2) == 3.0

    def test_definition_pointwise(self):
        rng = np.random.default_rng(5)
        n = 6
        x = rng.random((n, n))
        for a, b in [(1, 0), (0, 1), (3, 4), (5, 5)]:
            out = apply_shift(x, Shift(a, b))
            for i1 in range(1, n + 1):
                for i2 in range(1, n + 1):
                    assert pixel(out, i1, i2) == pixel(x, i1 + a, i2 + b)

    def test_roundtrip_inverse(self):
        rng = np.random.default_rng(17)
        n = 8
        for _ in range(20):
            x = rng.random((n, n))
            a, b = rng.integers(0, n, 2)
            s = Shift(int(a), int(b))
            assert np.array_equal(apply_shift(apply_shift(x, s), shift_inverse(s, n)), x)

    def test_group_law(self):
        rng = np.random.default_rng(19)
        n = 8
        x = rng.random((n, n))
        for _ in range(20):
            s1 = Shift(*(int(v) for v in rng.integers(0, n, 2)))
            s2 = Shift(*(int(v) for v in rng.integers(0, n, 2)))
            lhs = apply_shift(apply_shift(x, s1), s2)
            rhs = apply_shift(x, shift_compose(s1, s2, n))
            assert np.array_equal(lhs, rhs)

    def test_linearity(self):
        rng = np.random.default_rng(23)
        x, y = rng.random((2, 4, 4))
        s = Shift(1, 3)
        assert np.allclose(apply_shift(2.0 * x + y, s),
                           2.0 * apply_shift(x, s) + apply_shift(y, s))


class TestSparseDenseMasks:
    def test_n4_explicit_sets(self):
        omega, b, family = make_sparse_dense_masks(4)
        omega_coords = {idx for idx, _ in subsample(np.ones((4, 4)), omega)}
        assert omega_coords == {(1, 1), (3, 1), (1, 3), (3, 3)}
        b_coords = {idx for idx, _ in subsample(np.ones((4, 4)), b)}
        assert b_coords == {(i1, i2) for i1 in (1, 2) for i2 in (1, 2)}
        assert int((omega | b).sum()) == 7
        assert list(family) == [Shift(0, 0), Shift(2, 0), Shift(0, 2), Shift(2, 2)]

    def test_n128_counts(self):
        omega, b, _ = make_sparse_dense_masks(128)
        assert int(omega.sum()) == 4096
        assert int(b.sum()) == 4096

    @pytest.mark.parametrize("n", [4, 8, 16, 64, 128])
    def test_measurement_fraction(self, n):
        omega, b, _ = make_sparse_dense_masks(n)
        assert (omega | b).sum() / n**2 == 0.4375

    def test_rejects_bad_n(self):
        with pytest.raises(ValueError):
            make_sparse_dense_masks(6)


class TestGeneralizedMasks:
    def test_patch8_on_128(self):
        omega, b, family = make_generalized_masks(128, 8)
        assert len(family) == 256
        assert int(b.sum()) == 64
        assert np.array_equal(omega, make_sparse_dense_masks(128)[0])

    def test_patch2(self):
        _, b, family = make_generalized_masks(128, 2)
        assert int(b.sum()) == 4
        assert len(family) == 64**2

    def test_specializes_to_sparse_dense(self):
        omega_g, b_g, family_g = make_generalized_masks(16, 8)
        omega_s, b_s, family_s = make_sparse_dense_masks(16)
        assert np.array_equal(omega_g, omega_s)
        assert np.array_equal(b_g, b_s)
        assert set(family_g) == set(family_s)

    def test_rejects_non_divisor(self):
        with pytest.raises(ValueError):
            make_generalized_masks(16, 3)

    @pytest.mark.parametrize("n,patch", [(8, 2), (8, 4), (16, 2), (16, 4), (16, 8), (32, 8)])
    def test_partition_property(self, n, patch):
        _, b, family = make_generalized_masks(n, patch)
        assert check_partition(family, b)


class TestCheckPartition:
    def test_sparse_dense_partitions(self):
        _, b, family = make_sparse_dense_masks(8)
        assert check_partition(family, b)

    def test_identity_family_with_proper_subset(self):
        b = np.zeros((4, 4), dtype=np.uint8)
        b[:2, :2] = 1
        assert not check_partition(TranslationFamily(4, ((0, 0),)), b)

    def test_overlapping_translates(self):
        # shifting a half-plane by one pixel overlaps itself
        b = np.zeros((4, 4), dtype=np.uint8)
        b[:, :2] = 1
        family = TranslationFamily(4, ((0, 0), (1, 0)))
        assert not check_partition(family, b)


class TestMaskShiftInvariance:
    def test_odd_lattice_even_shift(self):
        m = odd_odd_mask(8)
        assert check_mask_shift_invariance(m, Shift(2, 0))
        assert check_mask_shift_invariance(m, Shift(0, 2))
        assert check_mask_shift_invariance(m, Shift(4, 4))

    def test_single_column_fails_horizontal(self):
        m = np.zeros((4, 4), dtype=np.uint8)
        m[:, 1] = 1  # fixed i1, all i2
        assert not check_mask_shift_invariance(m, Shift(1, 0))

    def test_single_row_invariant_horizontal(self):
        m = np.zeros((4, 4), dtype=np.uint8)
        m[1, :] = 1  # fixed i2, all i1
        assert check_mask_shift_invariance(m, Shift(1, 0))


class TestMaskShiftCommutation:
    def test_commutes_when_support_invariant(self):
        rng = np.random.default_rng(31)
        m = odd_odd_mask(8)
        for _ in range(10):
            x = rng.random((8, 8))
            for s in [Shift(2, 0), Shift(0, 4), Shift(6, 2)]:
                assert check_mask_shift_invariance(m, s)
                assert np.array_equal(apply_shift(apply_mask(x, m), s),
                                      apply_mask(apply_shift(x, s), m))
