"""Mesh sequences, vertex graphs, Laplacians and differential coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateFace, DimensionMismatch, IndexOutOfRange

AXES = {"x": 0, "y": 1, "z": 2}


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeshSequence:
    """Animation of ``k`` frames sharing one triangle list.

    Parameters
    ----------
    faces : array_like, shape (F, 3)
        Vertex indices of every triangle.
    frames : array_like, shape (k, n, 3)
        Vertex positions per frame.
    """

    faces: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise DimensionMismatch(f"frames must have shape (k, n, 3), got {frames.shape}")
        object.__setattr__(self, "faces", _frozen(faces))
        object.__setattr__(self, "frames", _frozen(frames))

    @property
    def n(self) -> int:
        return self.frames.shape[1]

    @property
    def k(self) -> int:
        return self.frames.shape[0]

    def axis(self, axis) -> np.ndarray:
        return sequence_axis_matrix(self, axis)

    @classmethod
    def from_axis_matrices(cls, faces, ax, ay, az) -> "MeshSequence":
        return cls(faces, np.stack([ax, ay, az], axis=-1))

    def bbox_diagonal(self) -> float:
        pts = self.frames.reshape(-1, 3)
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))

    def __eq__(self, other):
        if not isinstance(other, MeshSequence):
            return NotImplemented
        return np.array_equal(self.faces, other.faces) and np.array_equal(self.frames, other.frames)


@dataclass(frozen=True, eq=False)
class Connectivity:
    """First-ring neighbourhoods of a triangle mesh vertex graph."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def adjacency(self) -> sparse.csr_matrix:
        data = np.ones(len(self.indices), dtype=np.int64)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def build_connectivity(faces, n: int) -> Connectivity:
    """Undirected, deduplicated vertex graph induced by triangle edges.

    Raises
    ------
    IndexOutOfRange
        A face refers to a vertex outside ``[0, n)``.
    DegenerateFace
        A triangle repeats a vertex index.
    """
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) == 0:
        raise DimensionMismatch("at least one face is required")
    if faces.min() < 0 or faces.max() >= n:
        bad = int(np.argmax((faces < 0).any(axis=1) | (faces >= n).any(axis=1)))
        raise IndexOutOfRange(f"face {bad} {faces[bad].tolist()} refers to a vertex outside [0, {n})")
    degenerate = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    if degenerate.any():
        bad = int(np.argmax(degenerate))
        raise DegenerateFace(f"face {bad} {faces[bad].tolist()} repeats a vertex")

    i = faces[:, [0, 1, 2, 1, 2, 0]].ravel()
    j = faces[:, [1, 2, 0, 0, 1, 2]].ravel()
    adj = sparse.coo_matrix((np.ones(len(i), dtype=np.int64), (i, j)), shape=(n, n)).tocsr()
    adj.sum_duplicates()
    adj.sort_indices()
    return Connectivity(n=n, indptr=_frozen(adj.indptr.astype(np.int64)),
                        indices=_frozen(adj.indices.astype(np.int64)))


def build_laplacian(c: Connectivity, normalized: bool = False) -> sparse.csr_matrix:
    """Combinatorial Laplacian ``D - C`` in CSR layout.

    With ``normalized=True`` each row is divided by its degree, giving the
    mean-of-neighbours difference operator ``I - D^-1 C``.
    """
    adj = c.adjacency()
    deg = c.degrees
    lap = (sparse.diags(deg, dtype=np.int64) - adj).tocsr()
    if normalized:
        with np.errstate(divide="ignore"):
            inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1), 0.0)
        lap = (sparse.diags(inv) @ lap.astype(np.float64)).tocsr()
    lap.sort_indices()
    return lap


def laplacian_for(seq: MeshSequence, normalized: bool = False) -> sparse.csr_matrix:
    return build_laplacian(build_connectivity(seq.faces, seq.n), normalized=normalized)


def delta_coordinates(lap, a) -> np.ndarray:
    """Differential coordinates ``L @ A.T`` (``n x k``) of a ``k x n`` trajectory matrix."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None]
    if a.shape[1] != lap.shape[0]:
        raise DimensionMismatch(f"trajectory matrix has {a.shape[1]} columns, Laplacian has {lap.shape[0]}")
    return np.asarray(lap @ a.T)


def sequence_axis_matrix(seq: MeshSequence, axis) -> np.ndarray:
    """``k x n`` matrix of one coordinate (``'x'``, ``'y'``, ``'z'`` or 0..2)."""
    if isinstance(axis, str):
        axis = AXES[axis]
    return np.ascontiguousarray(seq.frames[:, :, axis])


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)
    connectivity: Connectivity | None = None

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "ok" if self.ok else "; ".join(self.issues)


def validate_sequence(seq: MeshSequence) -> ValidationReport:
    """Collect every problem that would make ``seq`` unencodable."""
    report = ValidationReport()
    if seq.k < 1:
        report.issues.append("sequence has no frames")
    if seq.n < 1:
        report.issues.append("frames have no vertices")
    if not np.isfinite(seq.frames).all():
        bad = np.argwhere(~np.isfinite(seq.frames))
        frames = sorted(set(bad[:, 0].tolist()))
        report.issues.append(f"non-finite coordinates in frames {frames[:10]}")
    try:
        conn = build_connectivity(seq.faces, seq.n)
    except (IndexOutOfRange, DegenerateFace, DimensionMismatch) as exc:
        report.issues.append(str(exc))
        return report
    ncomp, _ = connected_components(conn.adjacency(), directed=False)
    if ncomp != 1:
        report.issues.append(f"graph not connected ({ncomp} components)")
    report.connectivity = conn
    return report
