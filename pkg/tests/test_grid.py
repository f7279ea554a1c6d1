import numpy as np
import pytest

from stereofuse import (
    DimensionError,
    ImageBuffer,
    ScalarField,
    bilinear_resize,
    warp_horizontal,
)


def bilinear_1d_oracle(values, n_out):
    """Independent scalar edge-aligned interpolation."""
    n_in = len(values)
    out = []
    for j in range(n_out):
        pos = 0.0 if n_out == 1 else j * (n_in - 1) / (n_out - 1)
        x0 = int(np.floor(pos))
        x1 = min(x0 + 1, n_in - 1)
        f = pos - x0
        out.append(values[x0] * (1 - f) + values[x1] * f)
    return out


class TestBilinearResize:
    def test_identity_is_bitwise_equal(self):
        rng = np.random.default_rng(0)
        data = rng.random((5, 7)).astype(np.float32)
        valid = rng.random((5, 7)) > 0.2
        field = ScalarField(data.copy(), valid.copy())
        out = bilinear_resize(field, 7, 5)
        assert np.array_equal(out.data[out.valid], field.data[valid])
        assert np.array_equal(out.valid, valid)

    def test_constant_preserved_at_any_size(self):
        field = ScalarField.full(2, 2, 5.0)
        for (w, h) in [(3, 3), (9, 4), (1, 1), (17, 2)]:
            out = bilinear_resize(field, w, h)
            assert out.shape == (h, w)
            assert np.all(out.data == 5.0)

    def test_1x2_to_1x4_matches_oracle(self):
        field = ScalarField(np.array([[0.0, 1.0]], dtype=np.float32),
                            np.ones((1, 2), dtype=bool))
        out = bilinear_resize(field, 4, 1)
        expected = bilinear_1d_oracle([0.0, 1.0], 4)
        np.testing.assert_allclose(out.data[0], expected, atol=1e-7)

    def test_scale_values_multiplies_by_width_ratio(self):
        field = ScalarField.full(4, 4, 8.0)
        out = bilinear_resize(field, 8, 8, scale_values=True)
        assert np.allclose(out.data, 16.0)

    def test_zero_target_raises(self):
        field = ScalarField.full(2, 2, 1.0)
        with pytest.raises(DimensionError):
            bilinear_resize(field, 0, 2)
        with pytest.raises(DimensionError):
            bilinear_resize(field, 2, 0)

    def test_invalid_taps_propagate(self):
        data = np.arange(4, dtype=np.float32).reshape(1, 4)
        valid = np.array([[True, True, False, True]])
        out = bilinear_resize(ScalarField(data, valid), 7, 1)
        # outputs interpolating between columns 1-2 and 2-3 must be invalid
        assert not out.valid[0, 3]
        assert out.valid[0, 0]

    def test_resize_round_trip_constant(self):
        field = ScalarField.full(6, 9, 3.25)
        up = bilinear_resize(field, 31, 17)
        back = bilinear_resize(up, 9, 6)
        assert np.array_equal(back.data, field.data)


class TestWarpHorizontal:
    def test_zero_disparity_identity(self):
        rng = np.random.default_rng(1)
        src = ScalarField.from_array(rng.random((6, 8)).astype(np.float32))
        disp = ScalarField.full(6, 8, 0.0)
        out = warp_horizontal(src, disp)
        assert np.array_equal(out.data, src.data)
        assert out.valid.all()

    def test_constant_disparity_on_ramp(self):
        h, w = 4, 8
        ramp = np.tile(np.arange(w, dtype=np.float32), (h, 1))
        src = ScalarField.from_array(ramp)
        disp = ScalarField.full(h, w, 1.0)
        out = warp_horizontal(src, disp)
        assert not out.valid[:, 0].any()
        np.testing.assert_allclose(out.data[:, 1:],
                                   ramp[:, 1:] - 1.0, atol=1e-6)

    def test_integer_disparity_matches_shift_oracle(self):
        rng = np.random.default_rng(2)
        h, w = 8, 8
        src_data = rng.random((h, w)).astype(np.float32)
        src = ScalarField.from_array(src_data)
        d = rng.integers(0, 4, size=(h, w)).astype(np.float32)
        disp = ScalarField.from_array(d)
        out = warp_horizontal(src, disp)
        for y in range(h):
            for x in range(w):
                xs = x - int(d[y, x])
                if 0 <= xs < w:
                    assert out.valid[y, x]
                    assert out.data[y, x] == pytest.approx(src_data[y, xs], abs=1e-6)
                else:
                    assert not out.valid[y, x]

    def test_dim_mismatch_raises(self):
        src = ScalarField.full(4, 4, 1.0)
        disp = ScalarField.full(4, 5, 0.0)
        with pytest.raises(DimensionError):
            warp_horizontal(src, disp)

    def test_image_warp_clamps_and_stays_valid(self):
        rng = np.random.default_rng(3)
        img = ImageBuffer(rng.random((5, 6, 3)).astype(np.float32))
        disp = ScalarField.full(5, 6, 2.5)
        out = warp_horizontal(img, disp)
        assert isinstance(out, ImageBuffer)
        assert out.data.shape == img.data.shape

    def test_image_warp_integer_shift_values(self):
        rng = np.random.default_rng(5)
        data = rng.random((4, 8, 1)).astype(np.float32)
        img = ImageBuffer(data)
        out = warp_horizontal(img, ScalarField.full(4, 8, 2.0))
        # interior columns shift by 2; the left border clamps to column 0
        np.testing.assert_allclose(out.data[:, 2:], data[:, :-2], atol=1e-6)
        np.testing.assert_allclose(out.data[:, 0], data[:, 0], atol=1e-6)

    def test_invalid_disparity_marks_output_invalid(self):
        src = ScalarField.full(2, 4, 1.0)
        disp = ScalarField(np.zeros((2, 4), dtype=np.float32),
                           np.array([[True, False, True, True],
                                     [True, True, True, False]]))
        out = warp_horizontal(src, disp)
        assert not out.valid[0, 1]
        assert not out.valid[1, 3]
        assert out.valid[0, 0]


class TestGridFuzz:
    def test_no_nonfinite_in_valid_pixels(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            h = int(rng.integers(1, 7))
            w = int(rng.integers(1, 7))
            data = (rng.standard_normal((h, w)) * 10).astype(np.float32)
            valid = rng.random((h, w)) > 0.3
            data[~valid] = np.nan
            data[~valid] = 0.0
            field = ScalarField(data, valid)
            out = bilinear_resize(field, int(rng.integers(1, 9)), int(rng.integers(1, 9)))
            assert np.all(np.isfinite(out.data[out.valid]))
            disp = ScalarField((rng.random((h, w)) * 3).astype(np.float32),
                               np.ones((h, w), dtype=bool))
            warped = warp_horizontal(field, disp)
            assert np.all(np.isfinite(warped.data[warped.valid]))
