"""Procedural deforming meshes for tests and benchmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import MeshSequence


@dataclass(frozen=True)
class Mode:
    """One sinusoidal deformation: ``kind`` is ``'bend'`` or ``'twist'``.

    ``frequency`` counts full periods over the whole sequence.
    """

    kind: str = "bend"
    amplitude: float = 0.3
    frequency: float = 1.0


DEFAULT_MODES = (Mode("bend", 0.35, 1.0), Mode("twist", 0.6, 0.5))


@dataclass(frozen=True)
class SynthesisParams:
    shape: str = "cylinder"
    n_target: int = 500
    k: int = 32
    modes: tuple = field(default=DEFAULT_MODES)
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_target < 4:
            raise ValueError("n_target must be at least 4")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.shape not in ("cylinder", "sphere-grid"):
            raise ValueError(f"unknown shape {self.shape!r}")
        for m in self.modes:
            if m.kind not in ("bend", "twist") or not math.isfinite(m.amplitude) or not math.isfinite(m.frequency):
                raise ValueError(f"invalid mode {m}")


def _ring_faces(rings, segs, offset=0):
    i, j = np.meshgrid(np.arange(rings - 1), np.arange(segs), indexing="ij")
    a = offset + i * segs + j
    b = offset + i * segs + (j + 1) % segs
    c = a + segs
    d = b + segs
    return np.concatenate([np.stack([a, b, d], -1).reshape(-1, 3), np.stack([a, d, c], -1).reshape(-1, 3)])


def cylinder(n_target: int, radius: float = 0.5, height: float = 2.0):
    segs = max(3, int(round(math.sqrt(n_target * math.pi / 2))))
    rings = max(2, int(round(n_target / segs)))
    z = np.linspace(0.0, height, rings)
    th = 2 * np.pi * np.arange(segs) / segs
    zz, tt = np.meshgrid(z, th, indexing="ij")
    verts = np.stack([radius * np.cos(tt), radius * np.sin(tt), zz], -1).reshape(-1, 3)
    return verts, _ring_faces(rings, segs)


def sphere_grid(n_target: int, radius: float = 1.0):
    segs = max(3, int(round(math.sqrt(2 * n_target))))
    rings = max(1, int(round((n_target - 2) / segs)))
    phi = np.linspace(0, np.pi, rings + 2)[1:-1]
    th = 2 * np.pi * np.arange(segs) / segs
    pp, tt = np.meshgrid(phi, th, indexing="ij")
    body = np.stack([np.sin(pp) * np.cos(tt), np.sin(pp) * np.sin(tt), -np.cos(pp)], -1).reshape(-1, 3)
    verts = radius * np.vstack([[0, 0, -1], body, [0, 0, 1]])
    top = len(verts) - 1
    j = np.arange(segs)
    bottom_cap = np.stack([np.zeros(segs, int), 1 + (j + 1) % segs, 1 + j], -1)
    last = 1 + (rings - 1) * segs
    top_cap = np.stack([last + j, last + (j + 1) % segs, np.full(segs, top)], -1)
    faces = [bottom_cap, top_cap]
    if rings > 1:
        faces.insert(1, _ring_faces(rings, segs, offset=1))
    return verts, np.concatenate(faces)


def synth_sequence(p: SynthesisParams | None = None, **kw) -> MeshSequence:
    """Deterministic animation of a bending/twisting tube or sphere."""
    p = p or SynthesisParams(**kw)
    base, faces = cylinder(p.n_target) if p.shape == "cylinder" else sphere_grid(p.n_target)
    rng = np.random.default_rng(p.seed)
    phases = rng.uniform(0, 2 * np.pi, len(p.modes))
    if p.noise:
        base = base + p.noise * rng.standard_normal(base.shape)
    z = base[:, 2]
    h = (z - z.min()) / max(np.ptp(z), 1e-12)
    t = np.arange(p.k) / max(p.k, 1)
    frames = np.repeat(base[None], p.k, axis=0)
    for mode, ph in zip(p.modes, phases):
        s = mode.amplitude * np.sin(2 * np.pi * mode.frequency * t + ph)
        if mode.amplitude == 0:
            continue
        if mode.kind == "bend":
            frames[:, :, 0] += s[:, None] * h[None] ** 2
        else:
            ang = s[:, None] * h[None]
            x, y = frames[:, :, 0].copy(), frames[:, :, 1].copy()
            frames[:, :, 0] = np.cos(ang) * x - np.sin(ang) * y
            frames[:, :, 1] = np.sin(ang) * x + np.cos(ang) * y
    return MeshSequence(faces, frames)
