"""Encoder and decoder for eigen-trajectory coded mesh animations.

Per coordinate axis the encoder forms the ``k x n`` trajectory matrix, takes
the eigenvectors of its temporal autocorrelation as a dictionary, projects
the Laplacian (delta) coordinates onto it and keeps the first ``k_l`` rows of
the projection, quantised row by row.  The decoder unprojects and recovers
positions with a sparse least-squares solve pinned either by anchor vertices
or by transmitted per-frame means.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import splu, spsolve

from . import quant
from .errors import (
    BlockSizeError,
    DimensionMismatch,
    InvalidConfig,
    InvalidCount,
    InvalidSequence,
    SignMisalignment,
    SingularSystem,
)
from .mesh import MeshSequence, build_connectivity, build_laplacian, delta_coordinates, validate_sequence
from .spectral import (
    align_signs,
    autocorrelation,
    canonical_signs,
    full_eigenbasis,
    gft_project,
    gft_unproject,
    orthogonal_iterations,
)

log = logging.getLogger(__name__)

VARIANTS = ("pca", "pca_q", "v2v", "pca_qs", "pca_qp", "blocks", "per_mesh_gft")
ANCHORED = frozenset({"pca_qs", "pca_qp", "blocks"})
MEAN_PINNED = frozenset({"pca", "pca_q", "per_mesh_gft"})
PER_MESH_MAX_N = 5000

FLAG_RAW = 0x01
FLAG_NORMALIZED = 0x02


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder settings.

    ``k_l=None`` keeps every row (``k``, ``k_f`` or ``n`` for the per-mesh
    baseline).  ``raw=True`` is a test mode that stores every payload as
    float64 instead of quantising it.
    """

    variant: str = "pca_qp"
    k_l: int | None = None
    row_bits: int | tuple = 12
    n_b: int = 1
    t_max: int = 4
    oi_tol: float | None = None
    anchor_fraction: float = 0.01
    anchor_bits: int = 16
    dict_bits: int = 16
    diff_bits: int = 8
    anchor_strategy: str = "stride"
    seed: int = 0
    normalized_laplacian: bool = False
    raw: bool = False

    def block_layout(self, k: int) -> tuple[int, int]:
        """``(k_f, pad)`` for splitting ``k`` frames into ``n_b`` blocks."""
        if self.n_b < 1 or self.n_b > k:
            raise BlockSizeError(f"n_b={self.n_b} must lie in 1..k={k}")
        k_f = -(-k // self.n_b)
        pad = self.n_b * k_f - k
        if pad >= k_f:
            raise BlockSizeError(f"{k} frames cannot fill {self.n_b} blocks of {k_f}")
        return k_f, pad

    def rows_for(self, n: int, k: int) -> int:
        if self.variant == "per_mesh_gft":
            return n
        return self.block_layout(k)[0]

    def anchor_count(self, n: int) -> int:
        if self.variant not in ANCHORED:
            return 0
        return max(1, int(math.floor(self.anchor_fraction * n + 0.5)))

    def resolved_k_l(self, n: int, k: int) -> int:
        dim = self.rows_for(n, k)
        return dim if self.k_l is None else int(self.k_l)

    def resolved_row_bits(self, k_l: int) -> list[int]:
        if np.isscalar(self.row_bits):
            return [int(self.row_bits)] * k_l
        bits = [int(b) for b in self.row_bits]
        if len(bits) == 1:
            return bits * k_l
        if len(bits) < k_l:
            raise InvalidConfig(f"row_bits lists {len(bits)} rows but k_l={k_l}")
        return bits[:k_l]

    def validate(self, n: int, k: int) -> None:
        if self.variant not in VARIANTS:
            raise InvalidConfig(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.n_b != 1 and self.variant != "blocks":
            raise InvalidConfig(f"n_b > 1 requires variant 'blocks', got {self.variant!r}")
        self.block_layout(k)
        dim = self.rows_for(n, k)
        k_l = self.resolved_k_l(n, k)
        if not 0 <= k_l <= dim:
            raise InvalidConfig(f"k_l={k_l} must lie in 0..{dim}")
        for b in self.resolved_row_bits(k_l):
            quant.check_bits(b)
        for name in ("anchor_bits", "dict_bits", "diff_bits"):
            quant.check_bits(getattr(self, name))
        if self.t_max < 1:
            raise InvalidConfig("t_max must be at least 1")
        if not 0.0 <= self.anchor_fraction <= 1.0:
            raise InvalidConfig("anchor_fraction must lie in [0, 1]")
        if self.anchor_strategy not in ("stride", "seeded_random"):
            raise InvalidConfig(f"unknown anchor strategy {self.anchor_strategy!r}")
        if self.variant == "per_mesh_gft" and n > PER_MESH_MAX_N:
            raise InvalidConfig(f"per_mesh_gft needs a dense {n}x{n} eigensolve; limited to n <= {PER_MESH_MAX_N}")


def select_anchors(n: int, n_c: int, strategy: str = "stride", seed: int = 0) -> np.ndarray:
    """Sorted vertex indices used to pin the least-squares reconstruction."""
    if not 1 <= n_c <= n:
        raise InvalidCount(f"anchor count {n_c} must lie in 1..{n}")
    if strategy == "stride":
        idx = np.unique((np.arange(n_c, dtype=np.int64) * n) // n_c)
        if len(idx) < n_c:
            unused = np.setdiff1d(np.arange(n), idx)[: n_c - len(idx)]
            idx = np.union1d(idx, unused)
    elif strategy == "seeded_random":
        idx = np.sort(np.random.default_rng(seed).permutation(n)[:n_c])
    else:
        raise InvalidConfig(f"unknown anchor strategy {strategy!r}")
    return idx.astype(np.int64)


# ---------------------------------------------------------------- dictionaries


@dataclass(eq=False)
class DictionaryPayload:
    """Per-block dictionary data for one axis.

    Quantised mode: ``blocks[0]`` holds codes on ``[-1, 1]``, later blocks
    hold difference codes on ``[lo, hi]`` taken from ``ranges``.  Raw mode:
    every block is the full float64 matrix and ``ranges`` is empty.
    """

    m: int
    bits: int
    diff_bits: int
    blocks: list
    ranges: list = field(default_factory=list)
    raw: bool = False

    def __eq__(self, other):
        if not isinstance(other, DictionaryPayload):
            return NotImplemented
        return (
            (self.m, self.bits, self.diff_bits, self.raw) == (other.m, other.bits, other.diff_bits, other.raw)
            and len(self.blocks) == len(other.blocks)
            and all(np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks))
            and all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in zip(self.ranges, other.ranges))
            and len(self.ranges) == len(other.ranges)
        )


def _dequant_dict(codes, m, bits):
    return quant.dequantize_uniform(codes, -1.0, 1.0, bits).reshape(m, m)


def encode_dictionaries(dicts, dict_bits: int = 16, diff_bits: int = 8, raw: bool = False):
    """Code a chain of per-block dictionaries with closed-loop differences.

    Returns ``(payload, decoded)`` where ``decoded`` are the matrices the
    decoder will rebuild; every difference is taken against the decoded
    predecessor so quantisation error does not accumulate.
    """
    mats = [np.asarray(getattr(d, "U", d), dtype=np.float64) for d in dicts]
    if not mats:
        raise DimensionMismatch("no dictionaries to encode")
    m = mats[0].shape[0]
    if any(u.shape != (m, m) for u in mats):
        raise DimensionMismatch("all dictionaries must share one square shape")
    if raw:
        blocks = [u.copy() for u in mats]
        return DictionaryPayload(m, 64, 64, blocks, raw=True), [u.copy() for u in mats]
    quant.check_bits(dict_bits)
    quant.check_bits(diff_bits)
    codes = quant.quantize_uniform(mats[0], -1.0, 1.0, dict_bits).ravel()
    prev = _dequant_dict(codes, m, dict_bits)
    blocks, ranges, decoded = [codes], [], [prev]
    for i, u in enumerate(mats[1:], start=2):
        diff = u - prev
        if (np.linalg.norm(diff, axis=0) > math.sqrt(2)).any():
            warnings.warn(f"dictionary {i} is sign-misaligned with its predecessor; realigning", SignMisalignment,
                          stacklevel=2)
            u = align_signs(prev, u).U
            diff = u - prev
        lo, hi = quant.f32_range(diff)
        c = quant.quantize_uniform(diff, lo, hi, diff_bits).ravel()
        prev = prev + quant.dequantize_uniform(c, lo, hi, diff_bits).reshape(m, m)
        blocks.append(c)
        ranges.append((lo, hi))
        decoded.append(prev)
    return DictionaryPayload(m, dict_bits, diff_bits, blocks, ranges), decoded


def decode_dictionaries(p: DictionaryPayload) -> list[np.ndarray]:
    if p.raw:
        return [np.asarray(b, dtype=np.float64).reshape(p.m, p.m) for b in p.blocks]
    prev = _dequant_dict(p.blocks[0], p.m, p.bits)
    out = [prev]
    for c, (lo, hi) in zip(p.blocks[1:], p.ranges):
        prev = prev + quant.dequantize_uniform(c, lo, hi, p.diff_bits).reshape(p.m, p.m)
        out.append(prev)
    return out


# ---------------------------------------------------------------- anchors


@dataclass(eq=False)
class AnchorPayload:
    """Anchor indices plus per-axis anchor trajectories (``n_c x k`` each)."""

    indices: np.ndarray
    bits: int
    ranges: list
    values: list
    raw: bool = False

    @property
    def n_c(self) -> int:
        return len(self.indices)

    def trajectories(self) -> list[np.ndarray]:
        if self.raw:
            return [np.asarray(v, dtype=np.float64) for v in self.values]
        return [quant.dequantize_uniform(v, lo, hi, self.bits) for v, (lo, hi) in zip(self.values, self.ranges)]

    def __eq__(self, other):
        if not isinstance(other, AnchorPayload):
            return NotImplemented
        return (
            np.array_equal(self.indices, other.indices)
            and (self.bits, self.raw) == (other.bits, other.raw)
            and all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in zip(self.ranges, other.ranges))
            and all(np.array_equal(a, b) for a, b in zip(self.values, other.values))
        )


def encode_anchors(axis_mats, indices, bits: int, raw: bool = False) -> AnchorPayload:
    trajs = [np.asarray(a, dtype=np.float64)[:, indices].T for a in axis_mats]
    if raw:
        return AnchorPayload(np.asarray(indices), 64, [], [t.copy() for t in trajs], raw=True)
    ranges, values = [], []
    for t in trajs:
        lo, hi = quant.f32_range(t)
        ranges.append((lo, hi))
        values.append(quant.quantize_uniform(t, lo, hi, bits))
    return AnchorPayload(np.asarray(indices), bits, ranges, values)


# ---------------------------------------------------------------- solvers


class NormalEquationSolver:
    """Factor ``L.T L + S.T S`` once for a fixed Laplacian and pinned vertex set."""

    def __init__(self, lap, pinned):
        lap = sparse.csr_matrix(lap, dtype=np.float64)
        pinned = np.asarray(pinned, dtype=np.int64)
        if pinned.size == 0:
            raise SingularSystem("at least one anchor is required to fix the Laplacian null space")
        n = lap.shape[0]
        self.n = n
        self.lap = lap
        self.pinned = pinned
        self.select = sparse.csr_matrix(
            (np.ones(len(pinned)), (np.arange(len(pinned)), pinned)), shape=(len(pinned), n))
        self.normal = (lap.T @ lap + self.select.T @ self.select).tocsc()
        self._lu = None

    def rhs(self, delta, values):
        return self.lap.T @ np.asarray(delta, dtype=np.float64) + self.select.T @ np.asarray(values, dtype=np.float64)

    def solve(self, delta, values, mode: str = "parallel"):
        b = self.rhs(delta, values)
        if mode == "parallel":
            if self._lu is None:
                try:
                    self._lu = splu(self.normal)
                except RuntimeError as exc:
                    raise SingularSystem(str(exc)) from exc
            x = self._lu.solve(np.asfortranarray(b))
        elif mode == "serial":
            x = np.empty_like(b)
            for j in range(b.shape[1]):
                with warnings.catch_warnings():
                    warnings.simplefilter("error", sparse.linalg.MatrixRankWarning)
                    try:
                        x[:, j] = spsolve(self.normal, b[:, j])
                    except sparse.linalg.MatrixRankWarning as exc:
                        raise SingularSystem(str(exc)) from exc
        else:
            raise InvalidConfig(f"unknown solve mode {mode!r}")
        if not np.isfinite(x).all():
            raise SingularSystem("least-squares solve produced non-finite values")
        return x


def solve_anchored(lap, delta, anchor_idx, anchor_values, mode: str = "parallel") -> np.ndarray:
    """Least-squares positions from stacked ``[L; S] X = [delta; anchors]``.

    Parameters
    ----------
    lap : sparse (n, n)
    delta : ndarray (n, k)
        Differential coordinates, one column per frame.
    anchor_idx : sequence of int
    anchor_values : ndarray (n_c, k)
    mode : {'parallel', 'serial'}
        ``parallel`` factors once for all frames, ``serial`` refactors per frame.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.ndim == 1:
        delta = delta[:, None]
    vals = np.asarray(anchor_values, dtype=np.float64).reshape(len(anchor_idx), -1)
    if delta.shape[0] != lap.shape[0] or vals.shape[1] != delta.shape[1]:
        raise DimensionMismatch(f"delta {delta.shape} / anchors {vals.shape} do not match L {lap.shape}")
    return NormalEquationSolver(lap, anchor_idx).solve(delta, vals, mode)


def solve_mean_pinned(lap, delta, means, solver: NormalEquationSolver | None = None) -> np.ndarray:
    """Least-squares ``L X = delta`` with each column's mean fixed to ``means``.

    Vertex 0 is pinned to zero to pick one minimiser; the constant null-space
    component is then set from the transmitted means.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if solver is None:
        solver = NormalEquationSolver(lap, [0])
    x = solver.solve(delta, np.zeros((1, delta.shape[1])))
    return x - x.mean(axis=0) + np.asarray(means, dtype=np.float64)[None, :]


# ---------------------------------------------------------------- container


@dataclass(eq=False)
class AxisPayload:
    dictionary: DictionaryPayload | None
    coeffs: list
    means: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, AxisPayload):
            return NotImplemented
        if (self.means is None) != (other.means is None):
            return False
        return (
            self.dictionary == other.dictionary
            and len(self.coeffs) == len(other.coeffs)
            and all(a == b for a, b in zip(self.coeffs, other.coeffs))
            and (self.means is None or np.array_equal(self.means, other.means))
        )


@dataclass(eq=False)
class CompressedAnimation:
    variant: str
    flags: int
    n: int
    k: int
    n_b: int
    pad: int
    k_l: int
    n_c: int
    anchor_bits: int
    dict_bits: int
    diff_bits: int
    faces: np.ndarray
    axes: list
    anchors: AnchorPayload | None = None
    version: int = 1

    @property
    def k_f(self) -> int:
        return (self.k + self.pad) // self.n_b

    @property
    def raw(self) -> bool:
        return bool(self.flags & FLAG_RAW)

    @property
    def normalized_laplacian(self) -> bool:
        return bool(self.flags & FLAG_NORMALIZED)

    def __eq__(self, other):
        if not isinstance(other, CompressedAnimation):
            return NotImplemented
        head = ("variant", "flags", "n", "k", "n_b", "pad", "k_l", "n_c", "anchor_bits", "dict_bits",
                "diff_bits", "version")
        return (
            all(getattr(self, h) == getattr(other, h) for h in head)
            and np.array_equal(self.faces, other.faces)
            and all(a == b for a, b in zip(self.axes, other.axes))
            and self.anchors == other.anchors
        )


# ---------------------------------------------------------------- encode


def _split_blocks(a, n_b, k_f, pad):
    """``(n_b, k_f, width)`` stack of consecutive row blocks; the tail repeats the last row."""
    if pad:
        a = np.vstack([a, np.repeat(a[-1:], pad, axis=0)])
    return a.reshape(n_b, k_f, -1)


def block_dictionaries(blocks, t_max: int = 4, tol: float | None = None) -> list:
    """First block by direct eigensolve, later blocks by warm-started orthogonal iterations."""
    blocks = np.asarray(blocks, dtype=np.float64)
    rs = blocks @ blocks.transpose(0, 2, 1)
    rs = 0.5 * (rs + rs.transpose(0, 2, 1))
    out = []
    for i, r in enumerate(rs):
        if i == 0:
            out.append(full_eigenbasis(r))
        else:
            u = orthogonal_iterations(r, out[-1], t_max=t_max, tol=tol, block=i + 1, deficient="carry")
            out.append(align_signs(out[-1], u))
    return out


def fit_coefficients(u_dec, target, k_l: int) -> np.ndarray:
    """Leading ``k_l`` coefficient rows for the dictionary the decoder will hold.

    ``u_dec`` is the dequantised dictionary, orthonormal only up to
    quantisation error, so the rows are the least-squares fit of ``target``
    on its first ``k_l`` columns.  For an exactly orthonormal dictionary this
    is the plain projection ``U.T @ X`` restricted to those rows.  Stacked
    inputs ``(..., m, m)`` and ``(..., m, width)`` are fitted blockwise.
    """
    u_dec = np.asarray(u_dec, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if not k_l:
        return np.zeros(target.shape[:-2] + (0, target.shape[-1]))
    lead = u_dec[..., :k_l]
    lead_t = np.swapaxes(lead, -1, -2)
    return np.linalg.solve(lead_t @ lead, lead_t @ target)


def _quantize_blocks(coeffs, k_l, row_bits, raw):
    # one vectorised pass over every block's rows, split back per block
    n_b, width = coeffs.shape[0], coeffs.shape[-1]
    bits = np.tile(np.broadcast_to(np.asarray(row_bits), (k_l,)), n_b)
    q = quant.quantize_rows(coeffs.reshape(n_b * k_l, width), n_b * k_l, bits, raw=raw)
    return [quant.QuantizedCoefficients(width, q.mins[sl], q.maxs[sl], q.bits[sl], q.values[sl])
            for sl in (slice(b * k_l, (b + 1) * k_l) for b in range(n_b))]


def spatial_basis(lap_comb) -> np.ndarray:
    """Dense Laplacian eigenbasis, lowest graph frequency first."""
    w, v = scipy.linalg.eigh(lap_comb.toarray().astype(np.float64))
    return canonical_signs(v[:, np.argsort(w, kind="stable")])


def encode(seq: MeshSequence, cfg: EncoderConfig | None = None) -> CompressedAnimation:
    """Compress ``seq`` according to ``cfg``."""
    cfg = cfg or EncoderConfig()
    report = validate_sequence(seq)
    if not report.ok:
        raise InvalidSequence(f"cannot encode: {report}")
    n, k = seq.n, seq.k
    cfg.validate(n, k)
    k_f, pad = cfg.block_layout(k)
    k_l = cfg.resolved_k_l(n, k)
    row_bits = cfg.resolved_row_bits(k_l)
    conn = report.connectivity
    lap = build_laplacian(conn, normalized=cfg.normalized_laplacian)
    variant = cfg.variant
    raw_rows = quant.RAW_F64 if cfg.raw else (quant.RAW_F32 if variant == "pca" else None)

    axis_mats = list(np.moveaxis(seq.frames, 2, 0).copy())
    basis = spatial_basis(build_laplacian(conn)) if variant == "per_mesh_gft" else None

    axes = []
    for a in axis_mats:
        means = None
        if variant in MEAN_PINNED:
            means = a.mean(axis=1) if cfg.raw else a.mean(axis=1).astype(np.float32)
        if variant == "per_mesh_gft":
            coeff = basis.T @ delta_coordinates(lap, a)
            axes.append(AxisPayload(None, [quant.quantize_rows(coeff, k_l, row_bits, raw=raw_rows)], means))
            continue
        blocks = _split_blocks(a, cfg.n_b, k_f, pad)
        dicts = block_dictionaries(blocks, cfg.t_max, cfg.oi_tol)
        payload, decoded = encode_dictionaries(dicts, cfg.dict_bits, cfg.diff_bits, raw=cfg.raw)
        targets = blocks if variant == "v2v" else _split_blocks(delta_coordinates(lap, a).T, cfg.n_b, k_f, pad)
        coeffs = _quantize_blocks(fit_coefficients(np.stack(decoded), targets, k_l), k_l, row_bits, raw_rows)
        axes.append(AxisPayload(payload, coeffs, means))

    anchors = None
    n_c = cfg.anchor_count(n)
    if n_c:
        idx = select_anchors(n, n_c, cfg.anchor_strategy, cfg.seed)
        anchors = encode_anchors(axis_mats, idx, cfg.anchor_bits, raw=cfg.raw)

    flags = (FLAG_RAW if cfg.raw else 0) | (FLAG_NORMALIZED if cfg.normalized_laplacian else 0)
    return CompressedAnimation(
        variant=variant, flags=flags, n=n, k=k, n_b=cfg.n_b, pad=pad, k_l=k_l, n_c=n_c,
        anchor_bits=cfg.anchor_bits, dict_bits=cfg.dict_bits, diff_bits=cfg.diff_bits,
        faces=np.asarray(seq.faces, dtype=np.int64), axes=axes, anchors=anchors)


# ---------------------------------------------------------------- decode


def decode(c: CompressedAnimation, solve_mode: str | None = None) -> MeshSequence:
    """Reconstruct a :class:`MeshSequence` from a compressed animation.

    ``solve_mode`` overrides the variant's anchored solve path (``pca_qs`` is
    serial, every other anchored variant parallel).
    """
    n, k, n_b, k_f = c.n, c.k, c.n_b, c.k_f
    conn = build_connectivity(c.faces, n)
    lap = build_laplacian(conn, normalized=c.normalized_laplacian)
    variant = c.variant
    mode = solve_mode or ("serial" if variant == "pca_qs" else "parallel")

    solver = None
    anchor_trajs = None
    if variant in ANCHORED:
        if c.anchors is None or c.anchors.n_c == 0:
            raise SingularSystem(f"variant {variant!r} requires anchors")
        solver = NormalEquationSolver(lap, c.anchors.indices)
        anchor_trajs = c.anchors.trajectories()
    elif variant in MEAN_PINNED:
        solver = NormalEquationSolver(lap, [0])

    basis = spatial_basis(build_laplacian(conn)) if variant == "per_mesh_gft" else None

    out = np.empty((k, n, 3))
    for j, ax in enumerate(c.axes):
        if variant == "per_mesh_gft":
            delta = basis @ quant.dequantize_rows(ax.coeffs[0], n)
            out[:, :, j] = solve_mean_pinned(lap, delta, ax.means, solver).T
            continue
        dicts = decode_dictionaries(ax.dictionary)
        parts = []
        for b, (u, q) in enumerate(zip(dicts, ax.coeffs)):
            rec = gft_unproject(u, quant.dequantize_rows(q, k_f))  # k_f x n
            if variant == "v2v":
                parts.append(rec)
            elif variant in ANCHORED:
                vals = anchor_trajs[j]
                if c.pad:
                    vals = np.hstack([vals, np.repeat(vals[:, -1:], c.pad, axis=1)])
                x = solver.solve(rec.T, vals[:, b * k_f:(b + 1) * k_f], mode)
                parts.append(x.T)
            else:
                parts.append(solve_mean_pinned(lap, rec.T, ax.means, solver).T)
        out[:, :, j] = np.vstack(parts)[:k]
    return MeshSequence(c.faces, out)


def roundtrip(seq: MeshSequence, cfg: EncoderConfig | None = None, **overrides) -> MeshSequence:
    cfg = replace(cfg or EncoderConfig(), **overrides)
    return decode(encode(seq, cfg))
