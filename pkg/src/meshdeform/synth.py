"""Synthetic registered pose families on bar and sheet templates.

Each family applies a closed-form smooth map to a regular triangulated
template, so generated poses share the template's connectivity exactly and
every pose is reproducible from (kind, count, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import Mesh, load_mesh, save_mesh

BAR_LENGTH = 4.0
BAR_WIDTH = 1.0
SHEET_SIDE = 2.0
KINDS = ("bend-bar", "twist-bar", "bump-sheet")


@dataclass
class PoseDataset:
    """A neutral mesh plus registered poses of it, with a train/test split.

    Every pose shares the neutral's face matrix object, so connectivity is
    identical by construction.
    """

    neutral: Mesh
    poses: list
    params: list
    kind: str
    train_indices: list = field(default_factory=list)
    test_indices: list = field(default_factory=list)

    def split(self, name):
        idx = self.train_indices if name == "train" else self.test_indices
        return [self.poses[i] for i in idx]


def _grid_mesh(length, width, target_vertices, id):
    ny = max(2, int(round(np.sqrt(target_vertices * width / length))))
    nx = max(2, int(round(target_vertices / ny)))
    xs = np.linspace(0.0, length, nx)
    ys = np.linspace(-width / 2.0, width / 2.0, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([gx.reshape(-1), gy.reshape(-1), np.zeros(nx * ny)], axis=1)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            c = (i + 1) * ny + j + 1
            d = i * ny + j + 1
            faces.append((a, b, c))
            faces.append((a, c, d))
    return Mesh(verts, np.array(faces), id=id)


def bar_template(target_vertices=600, id="bar-neutral"):
    """Flat rectangular strip along +x, triangulated as a regular grid."""
    return _grid_mesh(BAR_LENGTH, BAR_WIDTH, target_vertices, id)


def sheet_template(target_vertices=600, id="sheet-neutral"):
    return _grid_mesh(SHEET_SIDE, SHEET_SIDE, target_vertices, id)


TUBE_SIDE = 0.5
TUBE_PERIMETER_POINTS = 12


def tube_template(target_vertices=600, length=BAR_LENGTH, side=TUBE_SIDE,
                  id="tube-neutral"):
    """Closed bar: a square tube with capped ends, outward orientation.

    Being boundary-free keeps every per-face Jacobian coupled to the
    reconstruction, which the bend/twist pose families rely on.
    """
    p = TUBE_PERIMETER_POINTS
    nx = max(2, int((target_vertices - 2) // p))
    xs = np.linspace(0.0, length, nx)
    c = side / 2.0
    # perimeter walked clockwise when viewed from +x, so tube quads wind outward
    corners = [(c, c), (c, -c), (-c, -c), (-c, c)]
    per_side = p // 4
    ring = []
    for k in range(4):
        a = np.array(corners[k], dtype=float)
        b = np.array(corners[(k + 1) % 4], dtype=float)
        for i in range(per_side):
            ring.append(a + (b - a) * (i / per_side))
    ring = np.array(ring)
    verts = np.zeros((nx * p + 2, 3))
    for i, x in enumerate(xs):
        verts[i * p:(i + 1) * p, 0] = x
        verts[i * p:(i + 1) * p, 1:] = ring
    base_center = nx * p
    tip_center = nx * p + 1
    verts[base_center] = (0.0, 0.0, 0.0)
    verts[tip_center] = (length, 0.0, 0.0)
    faces = []
    for i in range(nx - 1):
        for j in range(p):
            a = i * p + j
            b = (i + 1) * p + j
            cc = (i + 1) * p + (j + 1) % p
            d = i * p + (j + 1) % p
            faces.append((a, b, cc))
            faces.append((a, cc, d))
    for j in range(p):
        faces.append((base_center, j, (j + 1) % p))
        faces.append((tip_center, (nx - 1) * p + (j + 1) % p, (nx - 1) * p + j))
    return Mesh(verts, np.array(faces), id=id)


def bend_map(points, angle, length=BAR_LENGTH):
    """Bend a bar into a circular arc of total angle ``angle``: the axis
    keeps its arc length, off-axis fibers bend with radius ``R - z``, and y
    is untouched. Angle 0 is the identity; z = 0 reduces to the plain arc
    map (R sin(phi), y, R (1 - cos(phi)))."""
    p = np.asarray(points, dtype=np.float64)
    if abs(angle) < 1e-12:
        return p.copy()
    radius = length / angle
    phi = angle * p[:, 0] / length
    out = p.copy()
    out[:, 0] = (radius - p[:, 2]) * np.sin(phi)
    out[:, 2] = radius - (radius - p[:, 2]) * np.cos(phi)
    return out


def twist_map(points, twist, length=BAR_LENGTH):
    """Rotate cross-sections about the x axis by an angle growing linearly
    from 0 at x=0 to ``twist`` at x=length."""
    p = np.asarray(points, dtype=np.float64)
    phi = twist * p[:, 0] / length
    out = p.copy()
    out[:, 1] = p[:, 1] * np.cos(phi) - p[:, 2] * np.sin(phi)
    out[:, 2] = p[:, 1] * np.sin(phi) + p[:, 2] * np.cos(phi)
    return out


def bump_map(points, height, sigma=0.35, center=(SHEET_SIDE / 2.0, 0.0)):
    """Raise a Gaussian bump of the given height out of the sheet plane."""
    p = np.asarray(points, dtype=np.float64)
    d2 = (p[:, 0] - center[0]) ** 2 + (p[:, 1] - center[1]) ** 2
    out = p.copy()
    out[:, 2] = p[:, 2] + height * np.exp(-d2 / (2.0 * sigma**2))
    return out


_FAMILIES = {
    "bend-bar": (bar_template, bend_map, (0.25, 1.5)),
    "twist-bar": (bar_template, twist_map, (0.3, 1.8)),
    "bump-sheet": (sheet_template, bump_map, (0.2, 0.8)),
}


def align_to_neutral(vertices, neutral):
    """Translate a pose so its displacement from the neutral has area-weighted
    zero mean, the same translation convention the displacement
    reconstruction uses. Mirrors the rigid pre-alignment of training data."""
    from .operators import mesh_operators

    ops = mesh_operators(neutral)
    shift = ops.mass_diag @ (vertices - neutral.vertices) / ops.total_area
    return vertices - shift


def pose_from_param(template, kind, value, id=None, align=True):
    _, mapper, _ = _FAMILIES[kind]
    verts = mapper(template.vertices, value)
    if align:
        verts = align_to_neutral(verts, template)
    return Mesh(verts, template.faces, id=id or f"{kind}-{value:.4f}")


def synth_dataset(kind, count, seed, target_vertices=600):
    """Generate ``count`` registered poses (the first is always the neutral
    itself, parameter 0) with a deterministic interior held-out split."""
    if kind not in _FAMILIES:
        raise ValueError(f"unknown kind {kind!r}, expected one of {KINDS}")
    if count < 2:
        raise ValueError("count must be >= 2")
    template_fn, mapper, (lo, hi) = _FAMILIES[kind]
    neutral = template_fn(target_vertices, id=f"{kind}-neutral")
    rng = np.random.default_rng(seed)
    values = [0.0] + sorted(rng.uniform(lo, hi, size=count - 1).tolist())
    poses = []
    for i, value in enumerate(values):
        verts = align_to_neutral(mapper(neutral.vertices, value), neutral)
        poses.append(Mesh(verts, neutral.faces, id=f"{kind}-{i:03d}"))
    n_test = max(1, count // 4)
    candidates = np.arange(1, count)  # neutral always trains
    picks = np.linspace(0, candidates.size - 1, n_test + 2)[1:-1]
    test = sorted({int(candidates[int(round(p))]) for p in picks})
    train = [i for i in range(count) if i not in test]
    return PoseDataset(neutral=neutral, poses=poses, params=values, kind=kind,
                       train_indices=train, test_indices=test)


def estimate_bend_angle(deformed, neutral, length=BAR_LENGTH):
    """Recover the bend parameter from the base-to-tip chord, which is
    translation-invariant: the arc map sends it to
    (R sin(a), 0, R (1 - cos(a))), so a = 2 atan2(chord_z, chord_x)."""
    tip = np.isclose(neutral.vertices[:, 0], length)
    base = np.isclose(neutral.vertices[:, 0], 0.0)
    chord = deformed.vertices[tip].mean(axis=0) - deformed.vertices[base].mean(axis=0)
    return 2.0 * np.arctan2(chord[2], chord[0])


def save_dataset(dataset, out_dir):
    """Write the neutral, all poses and a JSON manifest into a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_mesh(dataset.neutral, out / "neutral.obj")
    entries = []
    for i, (pose, value) in enumerate(zip(dataset.poses, dataset.params)):
        name = f"pose_{i:03d}.obj"
        save_mesh(pose, out / name)
        entries.append({"id": pose.id, "file": name, "param": value})
    manifest = {
        "kind": dataset.kind,
        "neutral": "neutral.obj",
        "poses": entries,
        "train": dataset.train_indices,
        "test": dataset.test_indices,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(data_dir):
    data = Path(data_dir)
    manifest_path = data / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {data}")
    manifest = json.loads(manifest_path.read_text())
    neutral = load_mesh(data / manifest["neutral"])
    neutral = Mesh(neutral.vertices, neutral.faces, id="neutral")
    poses, params = [], []
    for entry in manifest["poses"]:
        m = load_mesh(data / entry["file"])
        if not np.array_equal(m.faces, neutral.faces):
            raise ValueError(f"pose {entry['id']} is not registered to the neutral mesh")
        poses.append(Mesh(m.vertices, neutral.faces, id=entry["id"]))
        params.append(float(entry["param"]))
    return PoseDataset(neutral=neutral, poses=poses, params=params,
                       kind=manifest.get("kind", "unknown"),
                       train_indices=list(manifest["train"]),
                       test_indices=list(manifest["test"]))
