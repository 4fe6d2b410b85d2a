"""Byte layout of a :class:`~dmcodec.codec.CompressedAnimation`.

Little-endian throughout.  Header::

    "DMC1" | version u16 | variant u8 | flags u8 | n u32 | k u32 | n_b u16 |
    pad u16 | k_l u32 | n_c u32 | anchor_bits u8 | dict_bits u8 |
    diff_bits u8 | reserved u8

followed by the face list (count u32, u32 triples), one section per axis in
x, y, z order and finally the anchor section.  Packed integer codes are
MSB-first and each packed run ends on a byte boundary.
"""

from __future__ import annotations

import struct
from collections import Counter

import numpy as np

from . import quant
from .codec import (
    ANCHORED,
    MEAN_PINNED,
    VARIANTS,
    AnchorPayload,
    AxisPayload,
    CompressedAnimation,
    DictionaryPayload,
    FLAG_NORMALIZED,
    FLAG_RAW,
)
from .errors import CorruptPayload, CorruptStream, VersionMismatch

MAGIC = b"DMC1"
VERSION = 1
_HEADER = struct.Struct("<4sHBBIIHHIIBBBB")

# accounting categories
HEADER = "header"
COEFFICIENTS = "coefficients"
ANCHORS = "anchors"
DICTIONARY = "dictionary"
AUX = "aux"


class _Writer:
    def __init__(self):
        self.chunks = []
        self.sizes = Counter()

    def put(self, data: bytes, category: str):
        self.chunks.append(data)
        self.sizes[category] += len(data)

    def pack(self, fmt, *vals, category=AUX):
        self.put(struct.pack("<" + fmt, *vals), category)

    def getvalue(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, size: int) -> bytes:
        if size < 0 or self.pos + size > len(self.data):
            raise CorruptStream(f"stream truncated: need {size} bytes at offset {self.pos}, "
                                f"{len(self.data) - self.pos} left")
        out = self.data[self.pos:self.pos + size].tobytes()
        self.pos += size
        return out

    def unpack(self, fmt):
        s = struct.Struct("<" + fmt)
        return s.unpack(self.take(s.size))

    def floats(self, count: int, dtype) -> np.ndarray:
        dt = np.dtype(dtype).newbyteorder("<")
        return np.frombuffer(self.take(count * dt.itemsize), dtype=dt).astype(dtype)

    def codes(self, count: int, width: int) -> np.ndarray:
        return quant.unpack_bits(self.take(quant.packed_size(count, width)), count, width)


def _le(a, dtype) -> bytes:
    return np.asarray(a, dtype=np.dtype(dtype).newbyteorder("<")).tobytes()


def _write_coeffs(w: _Writer, q: quant.QuantizedCoefficients):
    for lo, hi, b in zip(q.mins, q.maxs, q.bits):
        w.pack("ffB", float(lo), float(hi), int(b))
    packed = [(v, int(b)) for v, b in zip(q.values, q.bits) if 0 < b <= quant.MAX_BITS]
    if packed:
        bits = np.concatenate([np.unpackbits(np.frombuffer(quant.pack_bits(v, b), np.uint8))[: v.size * b]
                               for v, b in packed])
        w.put(np.packbits(bits).tobytes(), COEFFICIENTS)
    for v, b in zip(q.values, q.bits):
        if b == quant.RAW_F32:
            w.put(_le(v, np.float32), COEFFICIENTS)
        elif b == quant.RAW_F64:
            w.put(_le(v, np.float64), COEFFICIENTS)


def _read_coeffs(r: _Reader, k_l: int, width: int) -> quant.QuantizedCoefficients:
    mins = np.zeros(k_l, dtype=np.float32)
    maxs = np.zeros(k_l, dtype=np.float32)
    bits = np.zeros(k_l, dtype=np.uint8)
    for i in range(k_l):
        mins[i], maxs[i], bits[i] = r.unpack("ffB")
        b = int(bits[i])
        if not (b <= quant.MAX_BITS or b in (quant.RAW_F32, quant.RAW_F64)):
            raise CorruptStream(f"row {i} declares an invalid bit depth {b}")
        if 0 < b <= quant.MAX_BITS and not mins[i] < maxs[i]:
            raise CorruptStream(f"row {i} has an empty quantiser range")
    total = sum(int(b) * width for b in bits if b <= quant.MAX_BITS)
    stream = np.unpackbits(np.frombuffer(r.take((total + 7) // 8), np.uint8))
    values, pos = [], 0
    for b in bits:
        b = int(b)
        if b == 0 or b > quant.MAX_BITS:
            values.append(np.zeros(0, dtype=np.uint32))
            continue
        chunk = stream[pos:pos + width * b].reshape(width, b).astype(np.uint64)
        values.append((chunk @ (np.uint64(1) << np.arange(b - 1, -1, -1, dtype=np.uint64))).astype(np.uint32))
        pos += width * b
    for i, b in enumerate(bits):
        if b == quant.RAW_F32:
            values[i] = r.floats(width, np.float32)
        elif b == quant.RAW_F64:
            values[i] = r.floats(width, np.float64)
    return quant.QuantizedCoefficients(width, mins, maxs, bits, values)


def _write_dictionary(w: _Writer, d: DictionaryPayload):
    for i, blk in enumerate(d.blocks):
        if d.raw:
            w.put(_le(blk, np.float64), DICTIONARY)
            continue
        if i == 0:
            w.put(quant.pack_bits(blk, d.bits), DICTIONARY)
        else:
            lo, hi = d.ranges[i - 1]
            w.pack("ff", float(lo), float(hi))
            w.put(quant.pack_bits(blk, d.diff_bits), DICTIONARY)


def _read_dictionary(r: _Reader, m: int, n_b: int, bits: int, diff_bits: int, raw: bool) -> DictionaryPayload:
    mm = m * m
    if raw:
        return DictionaryPayload(m, 64, 64, [r.floats(mm, np.float64).reshape(m, m) for _ in range(n_b)], raw=True)
    blocks, ranges = [r.codes(mm, bits)], []
    for _ in range(1, n_b):
        lo, hi = r.unpack("ff")
        ranges.append((np.float32(lo), np.float32(hi)))
        blocks.append(r.codes(mm, diff_bits))
    return DictionaryPayload(m, bits, diff_bits, blocks, ranges)


def serialize(c: CompressedAnimation, sizes: dict | None = None) -> bytes:
    """Encode ``c`` to bytes; ``sizes`` (if given) receives per-category byte counts."""
    w = _Writer()
    w.put(_HEADER.pack(MAGIC, c.version, VARIANTS.index(c.variant), c.flags, c.n, c.k, c.n_b, c.pad, c.k_l,
                       c.n_c, c.anchor_bits, c.dict_bits, c.diff_bits, 0), HEADER)
    faces = np.asarray(c.faces).reshape(-1, 3)
    w.pack("I", len(faces), category=HEADER)
    w.put(_le(faces, np.uint32), HEADER)
    mean_dtype = np.float64 if c.raw else np.float32
    for ax in c.axes:
        if ax.dictionary is not None:
            _write_dictionary(w, ax.dictionary)
        for q in ax.coeffs:
            _write_coeffs(w, q)
        if ax.means is not None:
            w.put(_le(ax.means, mean_dtype), AUX)
    if c.anchors is not None and c.n_c:
        a = c.anchors
        w.put(_le(a.indices, np.uint32), AUX)
        if a.raw:
            for v in a.values:
                w.put(_le(v, np.float64), ANCHORS)
        else:
            for lo, hi in a.ranges:
                w.pack("ff", float(lo), float(hi))
            for v in a.values:
                w.put(quant.pack_bits(v, a.bits), ANCHORS)
    if sizes is not None:
        sizes.update(w.sizes)
    return w.getvalue()


def parse(data: bytes) -> CompressedAnimation:
    """Inverse of :func:`serialize`; raises :class:`CorruptStream` on malformed input."""
    try:
        return _parse(bytes(data))
    except CorruptPayload as exc:
        raise CorruptStream(str(exc)) from exc


def _parse(data: bytes) -> CompressedAnimation:
    r = _Reader(data)
    (magic, version, variant_id, flags, n, k, n_b, pad, k_l, n_c,
     anchor_bits, dict_bits, diff_bits, _reserved) = _HEADER.unpack(r.take(_HEADER.size))
    if magic != MAGIC:
        raise CorruptStream(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"stream version {version}, decoder supports {VERSION}")
    if variant_id >= len(VARIANTS):
        raise CorruptStream(f"unknown variant id {variant_id}")
    variant = VARIANTS[variant_id]
    if flags & ~(FLAG_RAW | FLAG_NORMALIZED):
        raise CorruptStream(f"unknown flags 0x{flags:02x}")
    raw = bool(flags & FLAG_RAW)
    if n < 1 or k < 1 or n_b < 1 or (k + pad) % n_b:
        raise CorruptStream("inconsistent sequence dimensions in header")
    k_f = (k + pad) // n_b
    if pad >= k_f:
        raise CorruptStream("padding exceeds one block")
    width, dim = (k, n) if variant == "per_mesh_gft" else (n, k_f)
    if k_l > dim or n_c > n:
        raise CorruptStream("header counts exceed sequence dimensions")
    if (variant in ANCHORED) != (n_c > 0):
        raise CorruptStream(f"anchor count {n_c} is inconsistent with variant {variant!r}")
    for b in (anchor_bits, dict_bits, diff_bits):
        if not 1 <= b <= quant.MAX_BITS:
            raise CorruptStream(f"invalid bit depth {b} in header")

    (nf,) = r.unpack("I")
    faces = r.floats(3 * nf, np.uint32).astype(np.int64).reshape(nf, 3)
    if nf and faces.max() >= n:
        raise CorruptStream("face index exceeds vertex count")

    mean_dtype = np.float64 if raw else np.float32
    axes = []
    for _ in range(3):
        d = None
        if variant != "per_mesh_gft":
            d = _read_dictionary(r, k_f, n_b, dict_bits, diff_bits, raw)
        blocks = 1 if variant == "per_mesh_gft" else n_b
        coeffs = [_read_coeffs(r, k_l, width) for _ in range(blocks)]
        means = r.floats(k, mean_dtype) if variant in MEAN_PINNED else None
        axes.append(AxisPayload(d, coeffs, means))

    anchors = None
    if n_c:
        idx = r.floats(n_c, np.uint32).astype(np.int64)
        if idx.max() >= n or np.any(np.diff(idx) <= 0):
            raise CorruptStream("anchor indices must be strictly increasing and below n")
        if raw:
            anchors = AnchorPayload(idx, 64, [], [r.floats(n_c * k, np.float64).reshape(n_c, k) for _ in range(3)],
                                    raw=True)
        else:
            ranges = [tuple(np.float32(v) for v in r.unpack("ff")) for _ in range(3)]
            values = [r.codes(n_c * k, anchor_bits).reshape(n_c, k) for _ in range(3)]
            anchors = AnchorPayload(idx, anchor_bits, ranges, values)
    if r.pos != len(data):
        raise CorruptStream(f"{len(data) - r.pos} trailing bytes after payload")
    return CompressedAnimation(variant=variant, flags=flags, n=n, k=k, n_b=n_b, pad=pad, k_l=k_l, n_c=n_c,
                               anchor_bits=anchor_bits, dict_bits=dict_bits, diff_bits=diff_bits, faces=faces,
                               axes=axes, anchors=anchors, version=version)


def save(c: CompressedAnimation, path) -> int:
    from .io import atomic_write_bytes

    data = serialize(c)
    atomic_write_bytes(path, data)
    return len(data)


def load(path) -> CompressedAnimation:
    with open(path, "rb") as fh:
        return parse(fh.read())
