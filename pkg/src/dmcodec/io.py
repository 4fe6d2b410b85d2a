"""OFF/OBJ frame files, frame-list manifests and atomic writes."""

from __future__ import annotations

import glob
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConnectivityMismatch, ParseError, VertexCountMismatch
from .mesh import MeshSequence

FORMATS = ("off", "obj")


@dataclass(frozen=True)
class SequenceManifest:
    paths: tuple
    format: str | None = None

    def fmt_for(self, path) -> str:
        if self.format:
            return self.format
        ext = Path(path).suffix.lower().lstrip(".")
        if ext not in FORMATS:
            raise ParseError(f"cannot infer mesh format from extension {ext!r}", path)
        return ext


def _tokens(path):
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def read_off(path):
    """Vertices ``(n, 3)`` and triangles ``(F, 3)`` from an OFF file."""
    it = _tokens(path)
    try:
        lineno, tok = next(it)
        if not tok[0].upper().endswith("OFF"):
            raise ParseError("missing OFF header", path, lineno)
        tok = tok[1:]
        if not tok:
            lineno, tok = next(it)
        nv, nf = int(tok[0]), int(tok[1])
        verts = np.empty((nv, 3))
        for i in range(nv):
            lineno, tok = next(it)
            verts[i] = [float(t) for t in tok[:3]]
        faces = []
        for _ in range(nf):
            lineno, tok = next(it)
            cnt = int(tok[0])
            if cnt != 3:
                raise ParseError(f"only triangles are supported, got a {cnt}-gon", path, lineno)
            faces.append([int(t) for t in tok[1:4]])
    except StopIteration:
        raise ParseError("unexpected end of file", path) from None
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed record ({exc})", path, lineno) from None
    return verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3)


def read_obj(path):
    """Positions and triangles from ``v``/``f`` records; everything else is skipped."""
    verts, faces = [], []
    lineno = 0
    try:
        for lineno, tok in _tokens(path):
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) for t in tok[1:]]
                if len(idx) != 3:
                    raise ParseError(f"only triangles are supported, got a {len(idx)}-gon", path, lineno)
                if min(idx) < 1:
                    raise ParseError("negative or zero face indices are not supported", path, lineno)
                faces.append([i - 1 for i in idx])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed record ({exc})", path, lineno) from None
    return np.asarray(verts, dtype=np.float64).reshape(-1, 3), np.asarray(faces, dtype=np.int64).reshape(-1, 3)


def read_mesh(path, fmt=None):
    fmt = fmt or SequenceManifest(()).fmt_for(path)
    return read_off(path) if fmt == "off" else read_obj(path)


def _fmt_float(x) -> str:
    return repr(float(x))


def format_off(verts, faces) -> str:
    lines = ["OFF", f"{len(verts)} {len(faces)} 0"]
    lines += [" ".join(_fmt_float(c) for c in v) for v in verts]
    lines += [f"3 {a} {b} {c}" for a, b, c in faces]
    return "\n".join(lines) + "\n"


def format_obj(verts, faces) -> str:
    lines = ["v " + " ".join(_fmt_float(c) for c in v) for v in verts]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces]
    return "\n".join(lines) + "\n"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def resolve_inputs(spec, fmt=None) -> SequenceManifest:
    """Frame list from a JSON/text manifest, a printf pattern or a glob.

    Globs are ordered lexicographically.  A printf pattern (``%04d``) is
    expanded from frame 0 until the first missing file.
    """
    spec = str(spec)
    p = Path(spec)
    if p.is_file() and p.suffix.lower() == ".json":
        doc = json.loads(p.read_text())
        paths = [str((p.parent / q) if not Path(q).is_absolute() else q) for q in doc["frames"]]
        return SequenceManifest(tuple(paths), doc.get("format", fmt))
    if p.is_file() and p.suffix.lower() in (".txt", ".lst"):
        paths = [ln.strip() for ln in p.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
        paths = [str(p.parent / q) if not Path(q).is_absolute() else q for q in paths]
        return SequenceManifest(tuple(paths), fmt)
    if "%" in spec:
        paths, f = [], 0
        while os.path.exists(spec % f):
            paths.append(spec % f)
            f += 1
        if not paths:
            raise ParseError(f"no files match pattern {spec!r}")
        return SequenceManifest(tuple(paths), fmt)
    paths = sorted(glob.glob(spec))
    if not paths:
        raise ParseError(f"no files match {spec!r}")
    return SequenceManifest(tuple(paths), fmt)


def load_sequence(m, fmt=None, workers: int = 4) -> MeshSequence:
    """Load every frame of a manifest; all frames must share one triangle list."""
    if not isinstance(m, SequenceManifest):
        m = resolve_inputs(m, fmt)
    if not m.paths:
        raise ParseError("manifest lists no frames")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        meshes = list(pool.map(lambda p: read_mesh(p, m.fmt_for(p)), m.paths))
    v0, f0 = meshes[0]
    frames = [v0]
    for i, (v, f) in enumerate(meshes[1:], start=2):
        if len(v) != len(v0):
            raise VertexCountMismatch(f"frame {i} ({m.paths[i - 1]}) has {len(v)} vertices, frame 1 has {len(v0)}",
                                      frame=i)
        if not np.array_equal(f, f0):
            raise ConnectivityMismatch(f"frame {i} ({m.paths[i - 1]}) has a different face list", frame=i)
        frames.append(v)
    return MeshSequence(f0, np.stack(frames))


def frame_paths(pattern: str, k: int) -> list[str]:
    if "%" in pattern:
        return [pattern % f for f in range(k)]
    if k == 1:
        return [pattern]
    stem, ext = os.path.splitext(pattern)
    return [f"{stem}_{f:04d}{ext}" for f in range(k)]


def save_sequence(seq: MeshSequence, pattern: str, fmt: str | None = None) -> list[str]:
    """Write one mesh file per frame; nothing is left behind if any write fails."""
    paths = frame_paths(pattern, seq.k)
    fmt = fmt or SequenceManifest(()).fmt_for(paths[0])
    render = format_off if fmt == "off" else format_obj
    staged = []
    try:
        for path, verts in zip(paths, seq.frames):
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            staged.append((tmp, path))
            with os.fdopen(fd, "w") as fh:
                fh.write(render(verts, seq.faces))
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
    return [str(p) for p in paths]
