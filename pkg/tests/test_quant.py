import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmcodec.errors import CorruptPayload, DimensionMismatch, InvalidBits
from dmcodec.quant import (dequantize_rows, dequantize_uniform, f32_range, pack_bits, quantize_rows,
                           quantize_uniform, unpack_bits)


def brute_quantize(x, lo, hi, bits):
    """Nearest bin centre by exhaustive search; ties go to the upper bin like the floor rule."""
    centres = lo + (np.arange(2 ** bits) + 0.5) * (hi - lo) / 2 ** bits
    out = []
    for v in x:
        d = np.abs(centres - v)
        out.append(int(np.flatnonzero(d == d.min())[-1]))
    return np.array(out)


class TestPacking:
    def test_msb_first(self):
        assert pack_bits([1, 0, 3], 2) == bytes([0b01001100])
        assert pack_bits([0xABC], 12) == bytes([0xAB, 0xC0])

    @given(st.integers(1, 16), st.lists(st.integers(0, 2**16 - 1), max_size=50))
    @settings(max_examples=60, deadline=None)
    def test_roundtrip(self, width, vals):
        vals = np.array(vals, dtype=np.uint32) % (1 << width)
        buf = pack_bits(vals, width)
        assert len(buf) == (len(vals) * width + 7) // 8
        assert np.array_equal(unpack_bits(buf, len(vals), width), vals)

    def test_overflow(self):
        with pytest.raises(CorruptPayload):
            pack_bits([4], 2)

    def test_short_buffer(self):
        with pytest.raises(CorruptPayload):
            unpack_bits(b"\x00", 3, 4)


class TestUniform:
    def test_linspace_3_bits(self):
        x = np.linspace(-1, 1, 9)
        codes = quantize_uniform(x, -1, 1, 3)
        assert np.array_equal(codes, brute_quantize(x, -1.0, 1.0, 3))
        err = np.abs(dequantize_uniform(codes, -1, 1, 3) - x)
        assert err.max() <= 0.125 + 1e-15

    def test_degenerate_range(self):
        assert not quantize_uniform([2.0, 2.0], 2.0, 2.0, 5).any()
        assert dequantize_uniform([0, 0], 2.0, 2.0, 5).tolist() == [2.0, 2.0]

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_f32_range_contains(self, vals):
        lo, hi = f32_range(vals)
        assert lo.dtype == np.float32 and hi.dtype == np.float32
        assert float(lo) <= min(vals) and float(hi) >= max(vals)


class TestRows:
    def test_k_l_zero(self):
        q = quantize_rows(np.ones((4, 5)), 0, 8)
        assert q.payload_bits() == 0
        assert np.array_equal(dequantize_rows(q, 4), np.zeros((4, 5)))

    @pytest.mark.parametrize("bits", [1, 7, 16])
    def test_constant_row_exact(self, bits):
        # header ranges are float32, so the constant comes back at that precision
        out = dequantize_rows(quantize_rows(np.full((2, 6), 0.1), 2, bits), 2)
        assert (out == float(np.float32(0.1))).all()
        q = quantize_rows(np.full((1, 3), 0.5), 1, bits)
        assert q.bits.tolist() == [0]
        assert dequantize_rows(q, 1).tolist() == [[0.5, 0.5, 0.5]]

    @given(st.integers(1, 6), st.integers(1, 20), st.integers(1, 16), st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_half_bin_bound(self, m, w, bits, seed):
        c = np.random.default_rng(seed).standard_normal((m, w))
        q = quantize_rows(c, m, bits)
        out = dequantize_rows(q, m)
        half = (q.maxs.astype(float) - q.mins.astype(float)) / 2 ** bits / 2
        # constant rows are kept at float32 precision instead
        half = np.where(q.bits == 0, np.abs(c).max(axis=1) * np.finfo(np.float32).eps, half)
        assert (np.abs(out - c) <= half[:, None] * (1 + 1e-9) + 1e-300).all()
        assert all(v.size == 0 or v.max() < 2 ** bits for v in q.values)
        assert (q.mins <= q.maxs).all()

    def test_16_bit_unit_scale(self):
        c = np.random.default_rng(0).uniform(-1, 1, (8, 50))
        out = dequantize_rows(quantize_rows(c, 8, 16), 8)
        assert np.abs(out - c).max() / np.abs(c).max() < 1e-4

    def test_zero_rows_exact(self):
        c = np.random.default_rng(1).standard_normal((6, 4))
        out = dequantize_rows(quantize_rows(c, 2, [4, 9]), 6)
        assert (out[2:] == 0.0).all()

    def test_raw_rows(self):
        c = np.random.default_rng(2).standard_normal((3, 4))
        assert np.array_equal(dequantize_rows(quantize_rows(c, 3, 8, raw=64), 3), c)
        np.testing.assert_array_equal(dequantize_rows(quantize_rows(c, 3, 8, raw=32), 3), c.astype(np.float32))

    def test_errors(self):
        with pytest.raises(InvalidBits):
            quantize_rows(np.ones((2, 2)), 2, 17)
        with pytest.raises(InvalidBits):
            quantize_rows(np.ones((2, 2)), 2, 0)
        with pytest.raises(DimensionMismatch):
            quantize_rows(np.ones((2, 2)), 3, 8)
        with pytest.raises(DimensionMismatch):
            quantize_rows(np.ones((2, 2)), 2, [8])
        with pytest.raises(InvalidBits):
            quantize_rows(np.ones((2, 2)), 2, 8, raw=16)

    def test_bad_code_detected(self):
        q = quantize_rows(np.arange(8.0)[None], 1, 3)
        q.values[0][0] = 9
        with pytest.raises(CorruptPayload):
            dequantize_rows(q, 1)
