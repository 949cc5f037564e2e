"""Discrete differential operators on triangle meshes.

Cotangent Laplacian, barycentric lumped mass, per-face gradient, the
generalized eigenbasis of the (L, M) pencil, tangent-plane restriction of
per-face 3x3 matrices, and the Poisson solve that reconstructs a vertex
displacement field from a prescribed per-face Jacobian field.

Jacobian convention: a per-face matrix ``J[t]`` maps tangent directions
(column index) to displacement derivatives (row index), so the gradient of a
vertex field ``v`` on face ``t`` is ``J[t] = (G v)[3t:3t+3].T`` with ``G``
the stacked gradient operator. The identity map's Jacobian is the in-plane
projector of each face.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, face_areas, face_normals, vertex_normals

DENSE_EIGEN_LIMIT = 600
ZERO_DROP = 1e-300


class SolverError(RuntimeError):
    """Raised when a sparse solve or eigendecomposition fails."""


class SparseOperator:
    """Immutable sparse matrix with deduplicated, sorted COO entries.

    Thin wrapper over a scipy CSR matrix; ``triples()`` exposes the
    coordinate list for inspection and debug dumps.
    """

    def __init__(self, matrix):
        m = sp.coo_matrix(matrix)
        m.sum_duplicates()
        m.data[np.abs(m.data) < ZERO_DROP] = 0.0
        m = m.tocsr()
        m.eliminate_zeros()
        m.sort_indices()
        self.matrix = m
        self.shape = m.shape

    def triples(self):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return list(zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist()))

    def __matmul__(self, other):
        return self.matrix @ other

    @property
    def T(self):
        return self.matrix.T

    def toarray(self):
        return self.matrix.toarray()

    def dump(self, path):
        """Write the operator as one ``row col value`` line per entry."""
        with open(path, "w") as fh:
            fh.write(f"# {self.shape[0]} {self.shape[1]}\n")
            for r, c, v in self.triples():
                fh.write(f"{r} {c} {float(v)!r}\n")


def cotangent_laplacian(mesh):
    """Cotangent Laplacian, symmetric positive semi-definite (x' L x >= 0),
    zero row sums."""
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    for corner in range(3):
        i = f[:, corner]
        j = f[:, (corner + 1) % 3]
        k = f[:, (corner + 2) % 3]
        e1 = v[j] - v[i]
        e2 = v[k] - v[i]
        cot = 0.5 * np.einsum("ij,ij->i", e1, e2) / np.linalg.norm(np.cross(e1, e2), axis=1)
        rows.extend((j, k, j, k))
        cols.extend((k, j, j, k))
        vals.extend((-cot, -cot, cot, cot))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return SparseOperator(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def lumped_mass(mesh):
    """Diagonal barycentric mass matrix; each vertex receives one third of
    its incident face areas, so the trace equals the total surface area."""
    areas = face_areas(mesh)
    diag = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(diag, mesh.faces[:, k], areas / 3.0)
    n = mesh.n_vertices
    return SparseOperator(sp.coo_matrix((diag, (np.arange(n), np.arange(n))), shape=(n, n)))


def face_gradient(mesh):
    """Sparse (3m, n) operator mapping a per-vertex scalar field to the 3D
    gradient of its piecewise-linear interpolant on each face.

    Rows ``3t..3t+2`` hold the gradient components on face ``t``; the
    gradient of a constant field is exactly zero and every gradient lies in
    its face plane.
    """
    v, f = mesh.vertices, mesh.faces
    m = mesh.n_faces
    areas = face_areas(mesh)
    normals = face_normals(mesh)
    rows, cols, vals = [], [], []
    base = 3 * np.arange(m)
    for corner in range(3):
        i = f[:, corner]
        j = f[:, (corner + 1) % 3]
        k = f[:, (corner + 2) % 3]
        opp = v[k] - v[j]
        grad = np.cross(normals, opp) / (2.0 * areas)[:, None]
        for axis in range(3):
            rows.append(base + axis)
            cols.append(i)
            vals.append(grad[:, axis])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return SparseOperator(sp.coo_matrix((vals, (rows, cols)), shape=(3 * m, mesh.n_vertices)))


def tangent_projectors(mesh):
    """(m, 3, 3) orthogonal projectors onto each face's tangent plane."""
    n = face_normals(mesh)
    return np.eye(3)[None, :, :] - n[:, :, None] * n[:, None, :]


def restrict_jacobian(mesh, raw):
    """Project per-face 3x3 matrices onto their face tangent planes
    (right-multiplication by the in-plane projector); idempotent."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (mesh.n_faces, 3, 3):
        raise ValueError(f"expected ({mesh.n_faces}, 3, 3) matrices, got {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("non-finite Jacobian entries")
    return JacobianField(raw @ tangent_projectors(mesh))


@dataclass
class JacobianField:
    """One candidate 3x3 deformation differential per face."""

    matrices: np.ndarray

    def __post_init__(self):
        self.matrices = np.ascontiguousarray(np.asarray(self.matrices, dtype=np.float64))
        if self.matrices.ndim != 3 or self.matrices.shape[1:] != (3, 3):
            raise ValueError(f"expected (m, 3, 3), got {self.matrices.shape}")
        if not np.all(np.isfinite(self.matrices)):
            raise ValueError("non-finite Jacobian entries")


@dataclass
class EigenBasis:
    """First K eigenpairs of the generalized problem ``L e = lambda M e``.

    ``vectors`` are per-vertex with the kernel column scaled to constant 1
    (so mass-weighted face averages of the first column are plain means);
    ``orthonormal`` rescales the kernel column so that all columns are
    M-orthonormal; ``face_vectors`` restricts each column to faces by
    averaging the three incident vertex values.
    """

    values: np.ndarray
    vectors: np.ndarray
    face_vectors: np.ndarray
    orthonormal: np.ndarray = field(repr=False)

    @property
    def count(self):
        return int(self.values.shape[0])


def _eigen_pairs(L, M, K, n):
    if n <= DENSE_EIGEN_LIMIT:
        vals, vecs = scipy.linalg.eigh(L.toarray(), M.toarray())
        return vals[:K], vecs[:, :K]
    v0 = np.ones(n) / np.sqrt(n)
    sigma = -1e-2
    try:
        vals, vecs = spla.eigsh(L.tocsc(), k=K, M=M.tocsc(), sigma=sigma, which="LM", v0=v0)
    except Exception as exc:  # ArpackNoConvergence and friends
        raise SolverError(f"eigensolver failed to converge: {exc}") from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def eigenbasis(mesh, K, _ops=None):
    """Lowest-K generalized eigenbasis of the cotangent Laplacian.

    Deterministic: the dense path is used up to ``DENSE_EIGEN_LIMIT``
    vertices, the shift-inverted iterative path above it uses a fixed
    starting vector; each column is sign-fixed so its largest-magnitude
    entry is positive.
    """
    n = mesh.n_vertices
    if K < 1 or K > n:
        raise ValueError(f"K must be in [1, {n}], got {K}")
    ops = _ops if _ops is not None else mesh_operators(mesh)
    L = ops.laplacian.matrix
    M = ops.mass.matrix
    vals, vecs = _eigen_pairs(L, M, K, n)
    vals = np.array(vals, dtype=np.float64)
    vecs = np.array(vecs, dtype=np.float64)
    if vals[0] > 1e-10:
        raise SolverError(f"kernel eigenvalue {vals[0]:.3e} exceeds tolerance (disconnected mesh?)")
    vals[0] = 0.0
    vals[vals < 0] = 0.0
    # Kernel column: exact constant 1; remaining columns sign-fixed.
    vecs[:, 0] = 1.0
    for k in range(1, vecs.shape[1]):
        col = vecs[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            vecs[:, k] = -col
    Lnorm = spla.norm(L, np.inf)
    resid = np.max(np.abs(L @ vecs - (M @ vecs) * vals[None, :]))
    if resid > 1e-8 * Lnorm:
        raise SolverError(f"eigen residual {resid:.3e} exceeds 1e-8 * |L|_inf = {1e-8 * Lnorm:.3e}")
    ortho = vecs.copy()
    ortho[:, 0] = 1.0 / np.sqrt(ops.total_area)
    face_vectors = ops.face_average @ vecs
    face_vectors[:, 0] = 1.0
    return EigenBasis(values=vals, vectors=vecs, face_vectors=face_vectors, orthonormal=ortho)


class PoissonSystem:
    """Least-squares reconstruction of a displacement field from per-face
    Jacobian targets.

    Solves ``argmin_v sum_t Area(t) ||grad_t v - J_t||_F^2`` via the normal
    equations ``L v = G' A J`` with the constant nullspace removed by an
    area-weighted zero-mean gauge. The factorization of the reduced system
    is computed once per mesh and reused across solves.
    """

    def __init__(self, ops):
        self._G = ops.gradient.matrix
        self._Gt = self._G.T.tocsr()
        self._area3 = np.repeat(ops.areas, 3)
        self._mass = ops.mass_diag
        self._total = ops.total_area
        L = ops.laplacian.matrix.tocsc()
        reduced = L[1:, :][:, 1:].tocsc()
        try:
            self._lu = spla.splu(reduced)
        except RuntimeError as exc:
            raise SolverError(f"Poisson factorization failed: {exc}") from exc
        self._n = L.shape[0]

    def _gauge(self, w):
        return w - np.outer(np.ones(self._n), self._mass @ w / self._total)

    def _solve_reduced(self, rhs):
        w = np.zeros((self._n, rhs.shape[1]))
        sol = self._lu.solve(rhs[1:])
        if not np.all(np.isfinite(sol)):
            raise SolverError("Poisson solve produced non-finite values (singular system?)")
        w[1:] = sol
        return w

    def solve(self, jacobians):
        """Displacement field (n, 3) whose per-face gradients best match the
        given (m, 3, 3) Jacobian targets, area-weighted zero mean."""
        J = np.asarray(jacobians, dtype=np.float64)
        stacked = J.transpose(0, 2, 1).reshape(-1, 3)
        rhs = self._Gt @ (self._area3[:, None] * stacked)
        return self._gauge(self._solve_reduced(rhs))

    def adjoint(self, vbar):
        """Pull an adjoint on the displacement back to the Jacobian targets:
        gauge-project, solve the (symmetric) system again, then apply A G."""
        u = vbar - np.outer(self._mass, vbar.sum(axis=0) / self._total)
        w = self._solve_reduced(u)
        stacked = self._area3[:, None] * (self._G @ w)
        return stacked.reshape(-1, 3, 3).transpose(0, 2, 1)


def poisson_solve(mesh, jacobians):
    """One-shot Poisson reconstruction; see :class:`PoissonSystem`."""
    J = jacobians.matrices if isinstance(jacobians, JacobianField) else jacobians
    return mesh_operators(mesh).poisson.solve(J)


def jacobians_from_displacement(mesh, displacement):
    """Per-face (m, 3, 3) Jacobians of a vertex displacement field."""
    G = mesh_operators(mesh).gradient.matrix
    return (G @ np.asarray(displacement, dtype=np.float64)).reshape(-1, 3, 3).transpose(0, 2, 1)


class MeshOperators:
    """Lazily built, immutable bundle of per-mesh operators.

    Safe for concurrent reads once built; construction is serialized by the
    module-level cache.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self.areas = face_areas(mesh)
        self.normals = face_normals(mesh)
        self.vertex_normals = vertex_normals(mesh)
        self.total_area = float(self.areas.sum())
        self._lock = threading.Lock()
        self._laplacian = None
        self._mass = None
        self._gradient = None
        self._projectors = None
        self._face_average = None
        self._poisson = None
        self._bases = {}

    @property
    def laplacian(self):
        if self._laplacian is None:
            self._laplacian = cotangent_laplacian(self.mesh)
        return self._laplacian

    @property
    def mass(self):
        if self._mass is None:
            self._mass = lumped_mass(self.mesh)
        return self._mass

    @property
    def mass_diag(self):
        return self.mass.matrix.diagonal()

    @property
    def gradient(self):
        if self._gradient is None:
            self._gradient = face_gradient(self.mesh)
        return self._gradient

    @property
    def projectors(self):
        if self._projectors is None:
            self._projectors = tangent_projectors(self.mesh)
        return self._projectors

    @property
    def face_average(self):
        """(m, n) sparse incident-vertex averaging operator."""
        if self._face_average is None:
            m, n = self.mesh.n_faces, self.mesh.n_vertices
            rows = np.repeat(np.arange(m), 3)
            cols = self.mesh.faces.reshape(-1)
            vals = np.full(3 * m, 1.0 / 3.0)
            self._face_average = sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsr()
        return self._face_average

    @property
    def poisson(self):
        if self._poisson is None:
            self._poisson = PoissonSystem(self)
        return self._poisson

    @property
    def edge_vectors(self):
        """Counter-clockwise edge pair (E1, E2) of every face."""
        v, f = self.mesh.vertices, self.mesh.faces
        return v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]

    @property
    def mean_edge_length(self):
        v, f = self.mesh.vertices, self.mesh.faces
        e = np.concatenate([
            v[f[:, 1]] - v[f[:, 0]],
            v[f[:, 2]] - v[f[:, 1]],
            v[f[:, 0]] - v[f[:, 2]],
        ])
        return float(np.linalg.norm(e, axis=1).mean())

    def basis(self, K):
        with self._lock:
            if K not in self._bases:
                self._bases[K] = eigenbasis(self.mesh, K, _ops=self)
            return self._bases[K]


_CACHE = {}
_CACHE_LOCK = threading.Lock()


def mesh_operators(mesh):
    """Operator bundle for a mesh, cached by mesh id and invalidated when
    the underlying vertex data changes."""
    key = mesh.id
    vhash = mesh.vertex_hash()
    with _CACHE_LOCK:
        hit = _CACHE.get(key)
        if hit is not None and hit[0] == vhash:
            return hit[1]
        ops = MeshOperators(mesh)
        _CACHE[key] = (vhash, ops)
        return ops
