"""Triangle mesh container, OBJ I/O and elementary per-face geometry.

Per-face quantities (areas, normals, graph distances) are returned as plain
numpy arrays aligned with ``Mesh.faces``; per-vertex quantities align with
``Mesh.vertices``.
"""

from __future__ import annotations

from collections import deque
from pathlib import Path

import numpy as np

AREA_EPSILON = 1e-12


class MeshError(ValueError):
    """Raised for invalid mesh data or unparseable mesh files."""


class Mesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : (n, 3) array_like
        Vertex positions, model units.
    faces : (m, 3) array_like
        Vertex indices per triangle, counter-clockwise orientation.
    id : str
        Opaque label used for operator caching.

    All faces must reference three distinct in-range vertices, have area
    above ``AREA_EPSILON`` and form a single vertex-connected component.
    """

    def __init__(self, vertices, faces, id="mesh"):
        v = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be (m, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        if f.size == 0:
            raise MeshError("mesh has no faces")
        same = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if np.any(same):
            raise MeshError(f"degenerate face (repeated index) at row {int(np.flatnonzero(same)[0])}")
        self.vertices = v
        self.faces = f
        self.id = str(id)
        areas = _face_areas(v, f)
        bad = areas <= AREA_EPSILON
        if np.any(bad):
            raise MeshError(f"zero-area face at row {int(np.flatnonzero(bad)[0])}")
        if not _is_connected(len(v), f):
            raise MeshError("mesh is not a single connected component")
        v.setflags(write=False)
        f.setflags(write=False)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def with_vertices(self, vertices, id=None):
        """New mesh with the same connectivity and replaced positions."""
        return Mesh(vertices, self.faces, id=self.id if id is None else id)

    def vertex_hash(self):
        """Hash of the raw vertex/face bytes, used for cache invalidation."""
        import hashlib

        h = hashlib.sha1()
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        return h.hexdigest()

    def __repr__(self):
        return f"Mesh(id={self.id!r}, n={self.n_vertices}, m={self.n_faces})"


def _face_areas(vertices, faces):
    e1 = vertices[faces[:, 1]] - vertices[faces[:, 0]]
    e2 = vertices[faces[:, 2]] - vertices[faces[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def _is_connected(n_vertices, faces):
    adj = [[] for _ in range(n_vertices)]
    for a, b, c in faces:
        adj[a].extend((b, c))
        adj[b].extend((a, c))
        adj[c].extend((a, b))
    seen = np.zeros(n_vertices, dtype=bool)
    queue = deque([int(faces[0, 0])])
    seen[faces[0, 0]] = True
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                queue.append(w)
    return bool(seen.all())


def face_areas(mesh):
    """Triangle areas, half the cross-product norm of the edge pair."""
    return _face_areas(mesh.vertices, mesh.faces)


def face_normals(mesh):
    """Unit normals of the counter-clockwise oriented faces."""
    v, f = mesh.vertices, mesh.faces
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def vertex_normals(mesh):
    """Area-weighted vertex normals (normalized accumulation of face crosses)."""
    v, f = mesh.vertices, mesh.faces
    cr = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    out = np.zeros_like(v)
    for k in range(3):
        np.add.at(out, f[:, k], cr)
    norms = np.linalg.norm(out, axis=1)
    degenerate = norms < 1e-12
    norms[degenerate] = 1.0
    out = out / norms[:, None]
    out[degenerate] = (0.0, 0.0, 1.0)
    return out


def load_mesh(path):
    """Read a triangular OBJ file (``v`` and ``f`` records; ``f`` entries may
    carry ``/`` attribute suffixes, which are ignored)."""
    path = Path(path)
    if not path.exists():
        raise MeshError(f"no such file: {path}")
    verts = []
    faces = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshError(f"{path}:{lineno}: malformed vertex record")
            try:
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise MeshError(f"{path}:{lineno}: bad vertex coordinate") from exc
        elif tag == "f":
            entries = parts[1:]
            if len(entries) != 3:
                raise MeshError(f"{path}:{lineno}: non-triangular face ({len(entries)} vertices)")
            idx = []
            for entry in entries:
                head = entry.split("/")[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: bad face index {entry!r}") from exc
                if i <= 0:
                    raise MeshError(f"{path}:{lineno}: face indices must be positive, got {i}")
                idx.append(i - 1)
            faces.append(idx)
    if not verts:
        raise MeshError(f"{path}: no vertices found")
    try:
        return Mesh(verts, faces, id=path.stem)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc


def save_mesh(mesh, path):
    """Write an OBJ file; floats use shortest round-trip formatting so a
    load/save cycle is bit-exact."""
    path = Path(path)
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {float(x)!r} {float(y)!r} {float(z)!r}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    path.write_text("\n".join(lines) + "\n")


def procrustes_align(moving, fixed):
    """Rigidly align ``moving`` onto ``fixed`` (rotation + translation, no
    scaling), minimizing the sum of squared vertex distances.

    Requires equal vertex counts with point-wise correspondence.
    """
    if moving.n_vertices != fixed.n_vertices:
        raise MeshError(
            f"vertex count mismatch: {moving.n_vertices} vs {fixed.n_vertices}"
        )
    p = moving.vertices
    q = fixed.vertices
    pc = p.mean(axis=0)
    qc = q.mean(axis=0)
    h = (p - pc).T @ (q - qc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    aligned = (p - pc) @ r.T + qc
    return moving.with_vertices(aligned, id=f"{moving.id}@aligned")


def face_adjacency(mesh):
    """List of edge-sharing neighbour face indices per face."""
    edge_to_faces = {}
    for t, (a, b, c) in enumerate(mesh.faces):
        for u, w in ((a, b), (b, c), (c, a)):
            key = (u, w) if u < w else (w, u)
            edge_to_faces.setdefault(key, []).append(t)
    neighbours = [[] for _ in range(mesh.n_faces)]
    for members in edge_to_faces.values():
        for t in members:
            for s in members:
                if s != t:
                    neighbours[t].append(s)
    return neighbours


def face_graph_distance(mesh, seed_faces):
    """Hop distance from a seed face set over shared-edge adjacency.

    Seed faces map to 0; faces unreachable from the seeds map to ``inf``.
    """
    seeds = np.atleast_1d(np.asarray(list(seed_faces), dtype=np.int64))
    if seeds.size == 0:
        raise MeshError("seed face set is empty")
    if seeds.min() < 0 or seeds.max() >= mesh.n_faces:
        raise MeshError("seed face index out of range")
    neighbours = face_adjacency(mesh)
    dist = np.full(mesh.n_faces, np.inf)
    queue = deque()
    for s in seeds:
        if dist[s] != 0.0:
            dist[s] = 0.0
            queue.append(int(s))
    while queue:
        t = queue.popleft()
        for s in neighbours[t]:
            if dist[s] == np.inf:
                dist[s] = dist[t] + 1.0
                queue.append(s)
    return dist
