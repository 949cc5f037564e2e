import numpy as np
import pytest

from meshdeform import (Mesh, MeshError, face_areas, face_graph_distance,
                        face_normals, load_mesh, procrustes_align, save_mesh)
from meshdeform.mesh import face_adjacency, vertex_normals
from meshdeform.synth import bar_template


def unit_right_triangle():
    return Mesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)], id="tri")


def two_triangle_square():
    return Mesh([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)],
                [(0, 1, 2), (0, 2, 3)], id="square")


class TestLoadSave:
    def test_smallest_valid_mesh(self, tmp_path):
        p = tmp_path / "tri.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        mesh = load_mesh(p)
        assert mesh.n_vertices == 3
        assert mesh.n_faces == 1

    def test_quad_face_rejected(self, tmp_path):
        p = tmp_path / "quad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(MeshError, match="non-triangular"):
            load_mesh(p)

    def test_round_trip_bit_identical(self, tmp_path):
        bar = bar_template(150)
        p = tmp_path / "bar.obj"
        save_mesh(bar, p)
        again = load_mesh(p)
        assert np.array_equal(again.vertices, bar.vertices)
        assert np.array_equal(again.faces, bar.faces)

    def test_slash_suffixes_ignored(self, tmp_path):
        p = tmp_path / "tri.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3//1\n")
        mesh = load_mesh(p)
        assert np.array_equal(mesh.faces, [[0, 1, 2]])

    def test_vertex_and_face_order_preserved(self, tmp_path):
        p = tmp_path / "square.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n")
        mesh = load_mesh(p)
        assert np.array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])

    def test_missing_file(self, tmp_path):
        with pytest.raises(MeshError, match="no such file"):
            load_mesh(tmp_path / "absent.obj")

    def test_negative_face_index_rejected(self, tmp_path):
        p = tmp_path / "neg.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -1 2 3\n")
        with pytest.raises(MeshError, match="positive"):
            load_mesh(p)

    def test_degenerate_face_rejected(self):
        with pytest.raises(MeshError, match="repeated index"):
            Mesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 1)])

    def test_zero_area_face_rejected(self):
        with pytest.raises(MeshError, match="zero-area"):
            Mesh([(0, 0, 0), (1, 0, 0), (2, 0, 0)], [(0, 1, 2)])

    def test_disconnected_rejected(self):
        verts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (5, 5, 0), (6, 5, 0), (5, 6, 0)]
        with pytest.raises(MeshError, match="connected"):
            Mesh(verts, [(0, 1, 2), (3, 4, 5)])


class TestFaceGeometry:
    def test_unit_right_triangle_area(self):
        assert face_areas(unit_right_triangle()) == pytest.approx(0.5, abs=1e-15)

    def test_equilateral_area(self):
        mesh = Mesh([(0, 0, 0), (1, 0, 0), (0.5, np.sqrt(3) / 2, 0)], [(0, 1, 2)])
        assert face_areas(mesh)[0] == pytest.approx(np.sqrt(3) / 4, abs=1e-12)

    def test_square_total_area(self):
        assert face_areas(two_triangle_square()).sum() == pytest.approx(1.0, abs=1e-14)

    def test_planar_ccw_normal(self):
        n = face_normals(unit_right_triangle())
        assert np.allclose(n, [[0, 0, 1]], atol=1e-15)

    def test_orientation_flip(self):
        mesh = Mesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 2, 1)])
        assert np.allclose(face_normals(mesh), [[0, 0, -1]], atol=1e-15)

    def test_bent_bar_normals_match_recompute(self):
        from meshdeform.synth import bend_map

        bar = bar_template(80)
        bent = Mesh(bend_map(bar.vertices, 0.9), bar.faces, id="bent")
        got = face_normals(bent)
        v, f = bent.vertices, bent.faces
        expect = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        expect /= np.linalg.norm(expect, axis=1, keepdims=True)
        assert np.allclose(got, expect, atol=1e-14)
        assert np.allclose(np.linalg.norm(got, axis=1), 1.0, atol=1e-12)

    def test_permutation_equivariance(self):
        bar = bar_template(60)
        rng = np.random.default_rng(2)
        perm = rng.permutation(bar.n_faces)
        permuted = Mesh(bar.vertices, bar.faces[perm], id="perm")
        assert np.allclose(face_areas(permuted), face_areas(bar)[perm], atol=1e-15)
        assert np.allclose(face_normals(permuted), face_normals(bar)[perm], atol=1e-15)

    def test_rigid_motion_preserves_areas(self):
        bar = bar_template(60)
        theta = 0.7
        rot = np.array([[np.cos(theta), -np.sin(theta), 0],
                        [np.sin(theta), np.cos(theta), 0],
                        [0, 0, 1.0]])
        moved = Mesh(bar.vertices @ rot.T + [0.3, -1.2, 2.0], bar.faces, id="moved")
        a0, a1 = face_areas(bar), face_areas(moved)
        assert np.max(np.abs(a1 - a0) / a0) < 1e-10

    def test_vertex_normals_flat(self):
        assert np.allclose(vertex_normals(two_triangle_square()), [[0, 0, 1]] * 4)


class TestProcrustes:
    def test_identity(self):
        bar = bar_template(50)
        aligned = procrustes_align(bar, bar)
        assert np.allclose(aligned.vertices, bar.vertices, atol=1e-12)

    def test_exact_rigid_recovery(self):
        bar = bar_template(50)
        rot = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
        moved = Mesh(bar.vertices @ rot.T + [1, 2, 3], bar.faces, id="m")
        aligned = procrustes_align(moved, bar)
        rms = np.sqrt(np.mean((aligned.vertices - bar.vertices) ** 2))
        assert rms < 1e-8

    def test_matches_orthogonal_procrustes_oracle(self):
        from scipy.linalg import orthogonal_procrustes

        bar = bar_template(50)
        rng = np.random.default_rng(4)
        rot = np.array([[0.36, 0.48, -0.8], [-0.8, 0.6, 0.0], [0.48, 0.64, 0.6]])
        noisy = bar.vertices @ rot.T + [0.5, 0, -1] + 0.01 * rng.standard_normal(bar.vertices.shape)
        moving = Mesh(noisy, bar.faces, id="noisy")
        aligned = procrustes_align(moving, bar)
        got = np.sum((aligned.vertices - bar.vertices) ** 2)
        # independent oracle: orthogonal Procrustes on centered clouds
        p = noisy - noisy.mean(axis=0)
        q = bar.vertices - bar.vertices.mean(axis=0)
        r, _ = orthogonal_procrustes(p, q)
        if np.linalg.det(r) < 0:  # restrict to proper rotations
            u, s, vt = np.linalg.svd(p.T @ q)
            r = (u * [1, 1, -1]) @ vt
        expect = np.sum((p @ r - q) ** 2)
        assert abs(got - expect) < 1e-8 * max(1.0, expect)

    def test_idempotent(self):
        bar = bar_template(50)
        rng = np.random.default_rng(5)
        moved = Mesh(bar.vertices + 0.05 * rng.standard_normal(bar.vertices.shape),
                     bar.faces, id="j")
        once = procrustes_align(moved, bar)
        twice = procrustes_align(once, bar)
        rms = np.sqrt(np.mean((twice.vertices - once.vertices) ** 2))
        assert rms < 1e-10

    def test_vertex_count_mismatch(self):
        with pytest.raises(MeshError, match="mismatch"):
            procrustes_align(unit_right_triangle(), two_triangle_square())


class TestFaceGraphDistance:
    def test_all_seeds(self):
        sq = two_triangle_square()
        assert np.array_equal(face_graph_distance(sq, [0, 1]), [0.0, 0.0])

    def test_two_triangle_square(self):
        sq = two_triangle_square()
        assert np.array_equal(face_graph_distance(sq, [0]), [0.0, 1.0])

    def test_matches_networkx_bfs_oracle(self):
        import networkx as nx

        bar = bar_template(60)
        graph = nx.Graph()
        graph.add_nodes_from(range(bar.n_faces))
        for t, neighbours in enumerate(face_adjacency(bar)):
            for s in neighbours:
                graph.add_edge(t, s)
        seeds = [0, 7, 31]
        got = face_graph_distance(bar, seeds)
        for t in range(bar.n_faces):
            expect = min(nx.shortest_path_length(graph, s, t) for s in seeds)
            assert got[t] == expect

    def test_out_of_range_seed(self):
        with pytest.raises(MeshError, match="out of range"):
            face_graph_distance(two_triangle_square(), [5])

    def test_empty_seed(self):
        with pytest.raises(MeshError, match="empty"):
            face_graph_distance(two_triangle_square(), [])
