import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmcodec.bitstream import ANCHORS, COEFFICIENTS, DICTIONARY, HEADER, load, parse, save, serialize
from dmcodec.codec import VARIANTS, EncoderConfig, decode, encode
from dmcodec.errors import CorruptStream, VersionMismatch
from dmcodec.metrics import rate_exact
from dmcodec.synth import synth_sequence


@pytest.fixture(scope="module")
def seq():
    return synth_sequence(n_target=120, k=12, seed=7)


def configs():
    for v in VARIANTS:
        kw = {"n_b": 3} if v == "blocks" else {}
        yield EncoderConfig(variant=v, row_bits=9, **kw)
        yield EncoderConfig(variant=v, raw=True, **kw)


@pytest.mark.parametrize("cfg", list(configs()), ids=lambda c: f"{c.variant}-{'raw' if c.raw else 'q'}")
def test_roundtrip_bit_identical(seq, cfg):
    c = encode(seq, cfg)
    data = serialize(c)
    back = parse(data)
    assert back == c
    assert serialize(back) == data
    assert np.array_equal(decode(back).frames, decode(c).frames)


def test_header_layout(seq):
    c = encode(seq, EncoderConfig(k_l=5, row_bits=7))
    data = serialize(c)
    magic, version, variant, flags, n, k, n_b, pad, k_l, n_c = struct.unpack_from("<4sHBBIIHHII", data)
    assert (magic, version, n, k, n_b, pad, k_l, n_c) == (b"DMC1", 1, seq.n, seq.k, 1, 0, 5, c.n_c)
    assert VARIANTS[variant] == "pca_qp" and flags == 0


def test_sizes_sum_to_file(seq, tmp_path):
    c = encode(seq, EncoderConfig(variant="blocks", n_b=4, row_bits=[3, 5, 7]))
    sizes = {}
    nbytes = save(c, tmp_path / "x.dmc")
    serialize(c, sizes)
    assert sum(sizes.values()) == nbytes == (tmp_path / "x.dmc").stat().st_size
    assert sizes[HEADER] > 0 and sizes[COEFFICIENTS] > 0 and sizes[ANCHORS] > 0 and sizes[DICTIONARY] > 0
    assert load(tmp_path / "x.dmc") == c
    assert rate_exact(c).q_s == pytest.approx(8 * nbytes / (seq.n * seq.k), rel=0, abs=0)


def test_every_truncation_rejected(seq):
    data = serialize(encode(seq, EncoderConfig(variant="blocks", n_b=2, k_l=2, row_bits=4)))
    for cut in range(len(data)):
        with pytest.raises(CorruptStream):
            parse(data[:cut])


def test_trailing_bytes(seq):
    data = serialize(encode(seq, EncoderConfig(k_l=2)))
    with pytest.raises(CorruptStream):
        parse(data + b"\x00")


def test_bad_magic_and_version(seq):
    data = bytearray(serialize(encode(seq, EncoderConfig(k_l=2))))
    bad = bytes(b"XXXX" + data[4:])
    with pytest.raises(CorruptStream):
        parse(bad)
    data[4:6] = struct.pack("<H", 99)
    with pytest.raises(VersionMismatch):
        parse(bytes(data))


@given(st.integers(0, 10**6), st.integers(0, 255))
@settings(max_examples=80, deadline=None)
def test_single_byte_corruption_never_crashes(pos, value):
    s = synth_sequence(n_target=30, k=4, seed=1)
    data = bytearray(serialize(encode(s, EncoderConfig(k_l=2, row_bits=5))))
    data[pos % len(data)] = value
    try:
        c = parse(bytes(data))
    except CorruptStream:
        return
    # a flip that survives parsing must still describe a decodable stream
    assert isinstance(c.n, int)
