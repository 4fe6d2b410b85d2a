"""Rate accounting and distortion measures."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DimensionMismatch
from .mesh import MeshSequence, build_connectivity, build_laplacian


@dataclass(frozen=True)
class RateReport:
    """Bits per vertex per frame, split by payload."""

    q: float
    q_a: float
    q_d: float
    q_s: float
    mode: str
    auxiliary: float = 0.0

    def as_dict(self) -> dict:
        return {"q": self.q, "q_a": self.q_a, "q_d": self.q_d, "aux": self.auxiliary, "q_s": self.q_s}


def rate_paper_formula(n, k, n_b, k_f, n_c, bits, bits_a=16, bits_d=16) -> RateReport:
    """Analytic rates with one average coefficient bit cost ``bits`` per vertex and frame.

    The dictionary term charges ``bits_d * n_b**2 * k_f**2`` bits, i.e. a
    single ``k x k`` matrix whenever ``n_b * k_f == k``.
    """
    if min(n, k, n_b, k_f) <= 0:
        raise ValueError("n, k, n_b and k_f must be positive")
    nk = n * k
    q = bits * n * k / nk
    q_a = bits_a * n_c * k / nk
    q_d = bits_d * n_b ** 2 * k_f * k_f / nk
    return RateReport(q, q_a, q_d, q + q_a + q_d, "paper_formula")


def rate_exact(c, sizes: dict | None = None) -> RateReport:
    """Account for every byte of the serialised stream of ``c``."""
    from .bitstream import ANCHORS, COEFFICIENTS, DICTIONARY, serialize

    if sizes is None:
        sizes = {}
        serialize(c, sizes)
    nk = c.n * c.k
    q = 8 * sizes.get(COEFFICIENTS, 0) / nk
    q_a = 8 * sizes.get(ANCHORS, 0) / nk
    q_d = 8 * sizes.get(DICTIONARY, 0) / nk
    other = sum(v for key, v in sizes.items() if key not in (COEFFICIENTS, ANCHORS, DICTIONARY))
    aux = 8 * other / nk
    total = 8 * sum(sizes.values()) / nk
    return RateReport(q, q_a, q_d, total, "exact_bits", aux)


def _check_pair(orig: MeshSequence, recon: MeshSequence):
    if orig.frames.shape != recon.frames.shape:
        raise DimensionMismatch(f"sequences differ in shape: {orig.frames.shape} vs {recon.frames.shape}")


def frame_rms(orig: MeshSequence, recon: MeshSequence) -> np.ndarray:
    """Per-frame root mean squared vertex distance."""
    _check_pair(orig, recon)
    d2 = np.sum((orig.frames - recon.frames) ** 2, axis=2)
    return np.sqrt(d2.mean(axis=1))


def sequence_rms(orig: MeshSequence, recon: MeshSequence) -> float:
    _check_pair(orig, recon)
    return float(np.sqrt(np.mean(np.sum((orig.frames - recon.frames) ** 2, axis=2))))


def nmsve(orig: MeshSequence, recon: MeshSequence, lap=None) -> np.ndarray:
    """Per-frame mean of positional and mean-curvature-style errors.

    For each frame ``(1 / 2n) * sum_i (|v_i - w_i| + |GL(v)_i - GL(w)_i|)``
    where ``GL`` subtracts from each vertex the average of its neighbours.
    ``lap`` may be any Laplacian of the shared connectivity; it is rescaled
    row-wise to the neighbour-average form.
    """
    _check_pair(orig, recon)
    if lap is None:
        lap = build_laplacian(build_connectivity(orig.faces, orig.n), normalized=True)
    else:
        if lap.shape != (orig.n, orig.n):
            raise DimensionMismatch(f"Laplacian is {lap.shape}, sequence has {orig.n} vertices")
        diag = lap.diagonal().astype(np.float64)
        lap = sparse.diags(1.0 / np.where(diag == 0, 1.0, diag)) @ lap
    diff = orig.frames - recon.frames
    pos = np.linalg.norm(diff, axis=2).sum(axis=1)
    geo = np.array([np.linalg.norm(lap @ d, axis=1).sum() for d in diff])
    return (pos + geo) / (2 * orig.n)


def per_vertex_error(orig: MeshSequence, recon: MeshSequence) -> np.ndarray:
    """Mean over frames of each vertex's Euclidean error."""
    _check_pair(orig, recon)
    return np.linalg.norm(orig.frames - recon.frames, axis=2).mean(axis=0)


@dataclass
class DistortionReport:
    rms: np.ndarray
    nmsve: np.ndarray
    vertex_error: np.ndarray

    @property
    def mean_rms(self) -> float:
        return float(self.rms.mean())

    @property
    def mean_nmsve(self) -> float:
        return float(self.nmsve.mean())


def distortion(orig: MeshSequence, recon: MeshSequence) -> DistortionReport:
    return DistortionReport(frame_rms(orig, recon), nmsve(orig, recon), per_vertex_error(orig, recon))


def write_frame_csv(report: DistortionReport, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["frame", "rms", "nmsve"])
    for f, (r, e) in enumerate(zip(report.rms, report.nmsve)):
        w.writerow([f, repr(float(r)), repr(float(e))])


def write_vertex_csv(report: DistortionReport, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["vertex", "mean_error"])
    for i, e in enumerate(report.vertex_error):
        w.writerow([i, repr(float(e))])
