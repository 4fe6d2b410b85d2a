"""Uniform scalar quantisation and fixed-width MSB-first bit packing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorruptPayload, DimensionMismatch, InvalidBits

MAX_BITS = 16
# row "bit depths" above MAX_BITS mark unquantised float rows
RAW_F32 = 32
RAW_F64 = 64
_RAW_DTYPES = {RAW_F32: np.float32, RAW_F64: np.float64}


def check_bits(bits) -> int:
    b = int(bits)
    if b != bits or not 1 <= b <= MAX_BITS:
        raise InvalidBits(f"bit depth must be an integer in 1..{MAX_BITS}, got {bits!r}")
    return b


def pack_bits(values, width: int) -> bytes:
    """Concatenate ``width``-bit unsigned codes MSB-first, zero-padding the last byte."""
    values = np.asarray(values, dtype=np.uint64).ravel()
    if width == 0 or values.size == 0:
        return b""
    if values.max(initial=0) >> np.uint64(width):
        raise CorruptPayload(f"value does not fit in {width} bits")
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    bits = ((values[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.ravel()).tobytes()


def packed_size(count: int, width: int) -> int:
    return (count * width + 7) // 8


def unpack_bits(buf, count: int, width: int) -> np.ndarray:
    if width == 0 or count == 0:
        return np.zeros(count, dtype=np.uint32)
    raw = np.frombuffer(bytes(buf), dtype=np.uint8)
    if raw.size < packed_size(count, width):
        raise CorruptPayload("packed buffer is shorter than its declared contents")
    bits = np.unpackbits(raw)[: count * width].reshape(count, width).astype(np.uint64)
    weights = np.uint64(1) << np.arange(width - 1, -1, -1, dtype=np.uint64)
    return (bits @ weights).astype(np.uint32)


def f32_range(x, axis=None):
    """Smallest float32 interval containing every value of ``x`` (per ``axis`` if given)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return np.float32(0), np.float32(0)
    xmin, xmax = x.min(axis=axis), x.max(axis=axis)
    lo, hi = np.asarray(xmin).astype(np.float32), np.asarray(xmax).astype(np.float32)
    lo = np.where(lo > xmin, np.nextafter(lo, np.float32(-np.inf)), lo).astype(np.float32)
    hi = np.where(hi < xmax, np.nextafter(hi, np.float32(np.inf)), hi).astype(np.float32)
    if axis is None:
        return np.float32(lo), np.float32(hi)
    return lo, hi


def quantize_uniform(x, lo, hi, bits: int) -> np.ndarray:
    """Index of the ``2**bits`` equal bins on ``[lo, hi]`` holding each value."""
    lo, hi = float(lo), float(hi)
    x = np.asarray(x, dtype=np.float64)
    levels = 1 << bits
    if hi <= lo:
        return np.zeros(x.shape, dtype=np.uint32)
    idx = np.floor((x - lo) / (hi - lo) * levels)
    return np.clip(idx, 0, levels - 1).astype(np.uint32)


def dequantize_uniform(codes, lo, hi, bits: int) -> np.ndarray:
    """Bin centres for ``codes``; a degenerate range decodes to ``lo`` exactly."""
    lo, hi = float(lo), float(hi)
    codes = np.asarray(codes)
    if hi <= lo:
        return np.full(codes.shape, lo)
    width = (hi - lo) / (1 << bits)
    return lo + (codes.astype(np.float64) + 0.5) * width


@dataclass(eq=False)
class QuantizedCoefficients:
    """Leading ``k_l`` rows of a coefficient matrix, one quantiser per row.

    ``bits[i]`` is 0 for a constant row (value ``mins[i]``), 1..16 for a
    uniformly quantised row, or 32/64 for a row stored as raw floats.
    """

    width: int
    mins: np.ndarray
    maxs: np.ndarray
    bits: np.ndarray
    values: list

    @property
    def k_l(self) -> int:
        return len(self.bits)

    def payload_bits(self) -> int:
        return sum(int(b) * self.width for b in self.bits)

    def __eq__(self, other):
        if not isinstance(other, QuantizedCoefficients):
            return NotImplemented
        return (
            self.width == other.width
            and np.array_equal(self.mins, other.mins)
            and np.array_equal(self.maxs, other.maxs)
            and np.array_equal(self.bits, other.bits)
            and all(np.array_equal(a, b) for a, b in zip(self.values, other.values))
        )


def quantize_rows(c, k_l: int, row_bits, raw: int | None = None) -> QuantizedCoefficients:
    """Quantise rows ``0..k_l-1`` of ``c``; later rows are dropped.

    Parameters
    ----------
    c : ndarray, shape (m, width)
    k_l : int
        Number of leading rows kept.
    row_bits : int or sequence of int
        Bits per row (1..16), broadcast when scalar.
    raw : {None, 32, 64}
        Store the kept rows as float32/float64 instead of quantising.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2:
        raise DimensionMismatch(f"coefficient matrix must be 2-D, got {c.shape}")
    if not 0 <= k_l <= c.shape[0]:
        raise DimensionMismatch(f"k_l={k_l} outside 0..{c.shape[0]}")
    width = c.shape[1]
    if raw is not None:
        if raw not in _RAW_DTYPES:
            raise InvalidBits(f"raw row storage must be 32 or 64 bits, got {raw}")
        dt = _RAW_DTYPES[raw]
        zero = np.zeros(k_l, dtype=np.float32)
        return QuantizedCoefficients(width, zero, zero.copy(), np.full(k_l, raw, dtype=np.uint8),
                                     [c[i].astype(dt) for i in range(k_l)])
    if np.isscalar(row_bits):
        row_bits = [row_bits] * k_l
    row_bits = np.array([check_bits(b) for b in row_bits], dtype=np.int64)
    if len(row_bits) != k_l:
        raise DimensionMismatch(f"row_bits has {len(row_bits)} entries, k_l is {k_l}")
    if k_l == 0:
        empty = np.zeros(0, dtype=np.float32)
        return QuantizedCoefficients(width, empty, empty.copy(), np.zeros(0, dtype=np.uint8), [])
    rows = c[:k_l]
    mins, maxs = f32_range(rows, axis=1)
    lo, hi = mins.astype(np.float64)[:, None], maxs.astype(np.float64)[:, None]
    levels = (1 << row_bits)[:, None]
    # constant rows collapse to one float32 value and cost no payload bits
    flat = rows.min(axis=1) == rows.max(axis=1)
    mins = np.where(flat, rows[:, 0].astype(np.float32), mins)
    maxs = np.where(flat, mins, maxs)
    flat |= maxs <= mins
    span = np.where(flat[:, None], 1.0, hi - lo)
    codes = np.clip(np.floor((rows - lo) / span * levels), 0, levels - 1).astype(np.uint32)
    bits = np.where(flat, 0, row_bits).astype(np.uint8)
    empty = np.zeros(0, dtype=np.uint32)
    values = [empty if flat[i] else codes[i] for i in range(k_l)]
    return QuantizedCoefficients(width, mins, maxs, bits, values)


def dequantize_rows(q: QuantizedCoefficients, m: int) -> np.ndarray:
    """Rebuild an ``m x width`` matrix; rows at or beyond ``k_l`` are exactly zero."""
    if m < q.k_l:
        raise DimensionMismatch(f"cannot place {q.k_l} rows into {m}")
    out = np.zeros((m, q.width))
    for i in range(q.k_l):
        b = int(q.bits[i])
        if b in _RAW_DTYPES:
            out[i] = np.asarray(q.values[i], dtype=np.float64)
        elif b == 0:
            out[i] = float(q.mins[i])
        else:
            codes = np.asarray(q.values[i])
            if codes.size != q.width:
                raise CorruptPayload(f"row {i} holds {codes.size} values, expected {q.width}")
            if b > MAX_BITS or (codes.size and int(codes.max()) >= (1 << b)):
                raise CorruptPayload(f"row {i} has a code outside its {b}-bit range")
            out[i] = dequantize_uniform(codes, q.mins[i], q.maxs[i], b)
    return out
