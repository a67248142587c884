"""Mask translation/union, offset and transform samplers, free-form masks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidinpaint.augment import (
    BLUR_CHOICES,
    GAIN_RANGE,
    ROTATION_RANGE,
    SCALE_RANGE,
    SHEAR_RANGE,
    TRANSLATION_RANGE,
    BASConfig,
    TransformParams,
    apply_transform,
    free_form_mask,
    sample_offset,
    sample_transform,
    translate_mask,
    union_mask,
)
from vidinpaint.errors import EmptyMask, OffsetTooLarge, ShapeMismatch


def _square_mask(h=32, w=32, y=10, x=12, side=6):
    m = np.zeros((h, w), dtype=np.float32)
    m[y:y + side, x:x + side] = 1.0
    return m


class TestTranslateMask:
    def test_zero_offset_identity(self):
        m = _square_mask()
        assert np.array_equal(translate_mask(m, 0, 0), m)

    def test_pixel_moves(self):
        m = np.zeros((8, 8), np.float32)
        m[2, 3] = 1.0
        out = translate_mask(m, 2, 1)
        assert out[3, 5] == 1.0
        assert out.sum() == 1.0

    def test_out_of_frame_pixels_drop(self):
        m = np.zeros((8, 8), np.float32)
        m[0, 0] = 1.0
        out = translate_mask(m, -1, -1)
        assert out.sum() == 0.0

    def test_offset_too_large(self):
        m = _square_mask(8, 8, 1, 1, 3)
        with pytest.raises(OffsetTooLarge):
            translate_mask(m, 8, 0)
        with pytest.raises(OffsetTooLarge):
            translate_mask(m, 0, -8)

    @given(dx=st.integers(-7, 7), dy=st.integers(-7, 7),
           seed=st.integers(0, 1000))
    @settings(max_examples=50, deadline=None)
    def test_never_gains_pixels(self, dx, dy, seed):
        r = np.random.default_rng(seed)
        m = (r.uniform(size=(8, 8)) > 0.7).astype(np.float32)
        out = translate_mask(m, dx, dy)
        assert out.sum() <= m.sum()
        assert set(np.unique(out)) <= {0.0, 1.0}

    def test_inverse_recovers_interior(self):
        m = _square_mask()
        back = translate_mask(translate_mask(m, 3, -2), -3, 2)
        assert np.array_equal(back, m)  # nothing left the frame


class TestUnionMask:
    def test_disjoint_counts_add(self):
        a = _square_mask(16, 16, 1, 1, 3)
        b = _square_mask(16, 16, 10, 10, 4)
        u = union_mask(a, b)
        assert u.sum() == a.sum() + b.sum()

    def test_idempotent_and_commutative(self):
        a = _square_mask(16, 16, 1, 1, 5)
        b = _square_mask(16, 16, 3, 3, 5)
        assert np.array_equal(union_mask(a, a), a)
        assert np.array_equal(union_mask(a, b), union_mask(b, a))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            union_mask(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSampleOffset:
    def test_empty_mask_raises(self):
        with pytest.raises(EmptyMask):
            sample_offset(np.zeros((8, 8), np.float32),
                          np.random.default_rng(0))

    def test_always_keeps_a_pixel(self):
        m = _square_mask(20, 20, 8, 8, 4)
        rng = np.random.default_rng(1)
        for _ in range(500):
            dx, dy = sample_offset(m, rng)
            assert translate_mask(m, dx, dy).sum() > 0

    def test_uniform_chi_square(self):
        # single-pixel mask on a 5x5 grid: 25 equally likely offsets
        m = np.zeros((5, 5), np.float32)
        m[2, 2] = 1.0
        rng = np.random.default_rng(7)
        n = 25_000
        counts = np.zeros((5, 5))
        for _ in range(n):
            dx, dy = sample_offset(m, rng)
            counts[dy + 2, dx + 2] += 1
        expected = n / 25.0
        chi2 = ((counts - expected) ** 2 / expected).sum()
        # chi-square_{24} 0.999 quantile is 51.18; exceeding it flags bias
        assert chi2 < 51.18

    def test_bas_ratio_close_to_weight(self):
        # Mask tall enough that some translated centroids fall outside the
        # 3px boundary windows, splitting offsets into two strata.
        m = _square_mask(60, 60, 26, 26, 8)
        bas = BASConfig(height_window=3, width_window=3, weight=5.0)
        rng = np.random.default_rng(3)
        n = 40_000
        in_count = 0
        x0, x1, y0, y1 = 26, 33, 26, 33
        cx = cy = 26 + 3.5
        n_in = n_out = 0
        counts = {}
        for _ in range(n):
            dx, dy = sample_offset(m, rng, bas)
            counts[(dx, dy)] = counts.get((dx, dy), 0) + 1
        # classify every observed offset analytically
        freqs_in, freqs_out = [], []
        for (dx, dy), c in counts.items():
            near_h = min(abs(cx + dx - x0), abs(cx + dx - x1)) <= 3
            near_v = min(abs(cy + dy - y0), abs(cy + dy - y1)) <= 3
            (freqs_in if (near_h or near_v) else freqs_out).append(c)
        ratio = np.mean(freqs_in) / np.mean(freqs_out)
        assert 5.0 * 0.85 <= ratio <= 5.0 * 1.15

    def test_reproducible(self):
        m = _square_mask()
        a = [sample_offset(m, np.random.default_rng(5)) for _ in range(3)]
        b = [sample_offset(m, np.random.default_rng(5)) for _ in range(3)]
        assert a == b


class TestSampleTransform:
    def test_marginals_within_ranges(self):
        rng = np.random.default_rng(0)
        draws = [sample_transform(rng) for _ in range(2000)]
        for p in draws:
            assert TRANSLATION_RANGE[0] <= p.tx <= TRANSLATION_RANGE[1]
            assert TRANSLATION_RANGE[0] <= p.ty <= TRANSLATION_RANGE[1]
            assert ROTATION_RANGE[0] <= p.rot <= ROTATION_RANGE[1]
            assert SCALE_RANGE[0] <= p.scale <= SCALE_RANGE[1]
            assert SHEAR_RANGE[0] <= p.shear <= SHEAR_RANGE[1]
            assert GAIN_RANGE[0] <= p.gain <= GAIN_RANGE[1]
            assert p.blur in BLUR_CHOICES
        # each blur choice used
        assert {p.blur for p in draws} == set(BLUR_CHOICES)
        # ranges actually explored, not constant
        assert np.std([p.tx for p in draws]) > 0.5

    def test_reproducible(self):
        a = sample_transform(np.random.default_rng(11))
        b = sample_transform(np.random.default_rng(11))
        assert a == b


class TestApplyTransform:
    def test_identity_params(self, rng):
        img = rng.uniform(-1, 1, (16, 16, 3)).astype(np.float32)
        out = apply_transform(img, TransformParams())
        assert np.allclose(out, img, atol=1e-6)

    def test_pure_translation_moves_impulse(self):
        img = np.full((16, 16), -1.0, np.float32)
        img[8, 8] = 1.0
        out = apply_transform(img, TransformParams(tx=3.0),
                              geometric_only=True)
        assert out[8, 11] == 1.0

    def test_translation_inverse_identity_interior(self, rng):
        img = rng.uniform(-1, 1, (20, 20)).astype(np.float32)
        p = TransformParams(tx=3.0, ty=-2.0)
        back = apply_transform(apply_transform(img, p, geometric_only=True),
                               TransformParams(tx=-3.0, ty=2.0),
                               geometric_only=True)
        assert np.allclose(back[4:16, 4:16], img[4:16, 4:16], atol=1e-6)

    def test_gain_arithmetic(self):
        # value 0.0 in [-1,1] is 0.5 in [0,1]; gain 1.05 -> 0.525 -> 0.05
        img = np.zeros((8, 8), np.float32)
        out = apply_transform(img, TransformParams(gain=1.05))
        assert np.allclose(out, 0.05, atol=1e-6)

    def test_mask_stays_binary(self, rng):
        m = (rng.uniform(size=(24, 24)) > 0.6).astype(np.float32)
        p = TransformParams(tx=1.3, ty=-0.7, rot=1.5, scale=1.03, shear=0.5)
        out = apply_transform(m, p, geometric_only=True)
        assert set(np.unique(out)) <= {0.0, 1.0}

    def test_geometric_only_ignores_gain_and_blur(self, rng):
        img = rng.uniform(-1, 1, (16, 16)).astype(np.float32)
        out = apply_transform(img, TransformParams(gain=1.05, blur=5),
                              geometric_only=True)
        assert np.allclose(out, img, atol=1e-6)

    def test_output_clipped(self):
        img = np.ones((8, 8), np.float32)
        out = apply_transform(img, TransformParams(gain=1.05))
        assert out.max() <= 1.0

    @given(seed=st.integers(0, 500))
    @settings(max_examples=25, deadline=None)
    def test_any_sampled_transform_keeps_mask_binary(self, seed):
        r = np.random.default_rng(seed)
        m = (r.uniform(size=(16, 16)) > 0.5).astype(np.float32)
        p = sample_transform(r)
        out = apply_transform(m, p, geometric_only=True)
        assert set(np.unique(out)) <= {0.0, 1.0}


class TestFreeFormMask:
    def test_binary_and_area_bounds(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            m = free_form_mask(64, 64, rng)
            assert m.shape == (64, 64)
            assert set(np.unique(m)) <= {0.0, 1.0}
            frac = m.mean()
            assert 0.0 < frac <= 0.5

    def test_small_frames_still_work(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            m = free_form_mask(12, 12, rng)
            assert 0.0 < m.mean() <= 0.5

    def test_reproducible(self):
        a = free_form_mask(32, 32, np.random.default_rng(4))
        b = free_form_mask(32, 32, np.random.default_rng(4))
        assert np.array_equal(a, b)
