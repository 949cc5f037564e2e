"""Feature-field manipulations on a trained model: interpolation, masked
partial deformation, pose mixing, latent statistics, motion transfer, and
the locality diagnostic that buckets deformation-gradient magnitudes by
graph distance from a mask.

All operations act on the global code part of the per-face feature field;
the local part is left untouched, which is what confines edits to the
masked faces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import Mesh, face_graph_distance
from .model import (FeatureField, LatentCode, assemble, encode_deformation,
                    extract_features, generate)
from .operators import jacobians_from_displacement, mesh_operators


@dataclass
class Mask:
    """Per-face weights in [0, 1]; the canonical masks are binary."""

    weights: np.ndarray
    name: str = "mask"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if self.weights.size and (self.weights.min() < 0 or self.weights.max() > 1):
            raise ValueError("mask weights must lie in [0, 1]")

    @classmethod
    def from_face_indices(cls, n_faces, indices, name="mask"):
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n_faces):
            raise IndexError("mask face index out of range")
        w = np.zeros(n_faces)
        w[idx] = 1.0
        return cls(w, name=name)

    @classmethod
    def full(cls, n_faces, name="full"):
        return cls(np.ones(n_faces), name=name)

    def face_indices(self):
        return np.flatnonzero(self.weights > 0.0)

    def to_json(self, path=None):
        payload = {"name": self.name, "faceIndices": self.face_indices().tolist()}
        text = json.dumps(payload)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source, n_faces):
        text = Path(source).read_text() if isinstance(source, (str, Path)) and \
            Path(source).exists() else source
        payload = json.loads(text)
        return cls.from_face_indices(n_faces, payload["faceIndices"],
                                     name=payload.get("name", "mask"))

    @classmethod
    def from_column_text(cls, path, name=None):
        """One 0/1 weight per line, aligned with the face order."""
        values = [float(line) for line in Path(path).read_text().split()]
        return cls(np.array(values), name=name or Path(path).stem)


@dataclass
class PoseBank:
    """Precomputed deformation codes of a pose collection against one
    neutral mesh, plus that mesh's cached local features."""

    neutral_id: str
    local: FeatureField
    entries: dict = field(default_factory=dict)
    meshes: dict = field(default_factory=dict)

    def code(self, pose_id):
        if pose_id not in self.entries:
            raise KeyError(pose_id)
        return self.entries[pose_id]

    def ids(self):
        return list(self.entries.keys())


def build_pose_bank(source, poses, params):
    bank = PoseBank(neutral_id=source.id, local=extract_features(source, params))
    for pose in poses:
        bank.entries[pose.id] = encode_deformation(source, pose, params)
        bank.meshes[pose.id] = pose
    return bank


def _as_code(entry, source, params):
    if isinstance(entry, LatentCode):
        return entry
    if isinstance(entry, Mesh):
        return encode_deformation(source, entry, params)
    return LatentCode(np.asarray(entry, dtype=np.float64))


def decode_codes(source, local, parts, params, alpha=1.0):
    """Shared decode path: per-face code = sum over parts of mask * code,
    scaled by alpha, appended to the local features and run through the
    generator. Returns (mesh, restricted Jacobians, displacement)."""
    m = source.n_faces
    r = params.config.code_dim
    codes = np.zeros((m, r))
    for code, mask in parts:
        scaled = alpha * code.z
        if mask is None:
            codes = codes + scaled[None, :]
        else:
            if mask.weights.shape[0] != m:
                raise ValueError("mask length does not match face count")
            codes = codes + mask.weights[:, None] * scaled[None, :]
    field_ = FeatureField(mesh_id=local.mesh_id, local=local.local,
                          assembled=np.concatenate([local.local, codes], axis=1))
    deformed, jac = generate(source, field_, params)
    return deformed, jac, deformed.vertices - source.vertices


def interpolate(source, target, params, alpha):
    """Decode the feature field with the code scaled by alpha; alpha=0 is
    the zero-code decode and alpha=1 reproduces predict(source, target)."""
    z = encode_deformation(source, target, params)
    local = extract_features(source, params)
    field_ = assemble(local, z, alpha=alpha)
    deformed, _ = generate(source, field_, params)
    return deformed


def interpolation_sequence(source, target, params, steps):
    if steps < 2:
        raise ValueError("steps must be >= 2")
    return [interpolate(source, target, params, k / (steps - 1)) for k in range(steps)]


def partial_deform(source, target, mask, params, alpha=1.0):
    """Deform only the masked faces: the code is zeroed elsewhere."""
    z = encode_deformation(source, target, params)
    local = extract_features(source, params)
    field_ = assemble(local, z, mask=mask.weights, alpha=alpha)
    deformed, _ = generate(source, field_, params)
    return deformed


def mix(source, parts, params, alpha=1.0):
    """Blend several pose codes with per-part masks; overlapping masks add
    their codes. Each part is (Mesh | LatentCode, Mask | None)."""
    local = extract_features(source, params)
    resolved = [(_as_code(entry, source, params), mask) for entry, mask in parts]
    deformed, _, _ = decode_codes(source, local, resolved, params, alpha=alpha)
    return deformed


def mean_pose(source, targets, params, mask=None):
    """Decode the Euclidean mean of the targets' deformation codes."""
    if not targets:
        raise ValueError("mean_pose needs at least one target")
    codes = [_as_code(t, source, params).z for t in targets]
    zbar = LatentCode(np.mean(codes, axis=0) if len(codes) > 1 else codes[0])
    local = extract_features(source, params)
    deformed, _, _ = decode_codes(source, local, [(zbar, mask)], params, alpha=1.0)
    return deformed


def pca_poses(source, targets, params, components):
    """Principal directions of the centered code matrix, unit-norm, ordered
    by descending variance (sample covariance, divisor J-1)."""
    if len(targets) < components:
        raise ValueError("need at least as many targets as components")
    codes = np.stack([_as_code(t, source, params).z for t in targets])
    centered = codes - codes.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    variances = svals**2 / max(len(targets) - 1, 1)
    out = []
    for k in range(components):
        direction = vt[k]
        peak = np.argmax(np.abs(direction))
        if direction[peak] < 0:
            direction = -direction
        out.append((float(variances[k]), LatentCode(direction)))
    return out


def transfer(source_a, neutral_b, pose_b, params, mask=None, alpha=1.0):
    """Apply the pose of identity B onto identity A: encode B's deformation,
    decode it over A's local features (optionally masked)."""
    if not np.array_equal(source_a.faces, neutral_b.faces):
        raise ValueError("transfer requires identical connectivity")
    z = encode_deformation(neutral_b, pose_b, params)
    local = extract_features(source_a, params)
    deformed, _, _ = decode_codes(source_a, local, [(z, mask)], params, alpha=alpha)
    return deformed


@dataclass
class LocalityProfile:
    """Mean deformation-gradient deviation per graph-distance bucket, for
    the raw predicted Jacobians and for the post-Poisson gradient field."""

    distances: np.ndarray
    raw_means: np.ndarray
    field_means: np.ndarray
    counts: np.ndarray

    def to_dict(self):
        return {
            "distances": self.distances.tolist(),
            "raw_means": self.raw_means.tolist(),
            "field_means": self.field_means.tolist(),
            "counts": self.counts.tolist(),
        }


def locality_profile(source, target, mask, params, alpha=1.0):
    """Bucket the per-face deviation from the identity map by hop distance
    from the mask. Distance 0 is the masked region itself."""
    z = encode_deformation(source, target, params)
    local = extract_features(source, params)
    deformed, jac, displacement = decode_codes(
        source, local, [(z, mask)], params, alpha=alpha)
    ops = mesh_operators(source)
    raw_dev = np.linalg.norm(jac.matrices - ops.projectors, axis=(1, 2))
    grads = jacobians_from_displacement(source, displacement)
    field_dev = np.linalg.norm(grads, axis=(1, 2))
    seed = mask.face_indices()
    if seed.size == 0:
        dist = np.zeros(source.n_faces)  # empty mask: one bucket over all faces
    else:
        dist = face_graph_distance(source, seed)
    finite = np.unique(dist[np.isfinite(dist)]).astype(np.int64)
    raw_means, field_means, counts = [], [], []
    for d in finite:
        sel = dist == d
        raw_means.append(raw_dev[sel].mean())
        field_means.append(field_dev[sel].mean())
        counts.append(int(sel.sum()))
    return LocalityProfile(distances=finite,
                           raw_means=np.array(raw_means),
                           field_means=np.array(field_means),
                           counts=np.array(counts))
