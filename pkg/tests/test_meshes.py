import numpy as np
import pytest

from derender3d.meshes import (
    Mesh,
    load_mesh_library,
    load_obj,
    save_mesh_library,
    save_obj,
)
from derender3d.shapes import build_default_library


class TestMeshValidation:
    def test_empty_triangles_rejected(self):
        with pytest.raises(ValueError):
            Mesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=int))

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            Mesh(np.eye(3), np.array([[0, 1, 3]]))

    def test_flat_bbox_rejects_deformation(self):
        from derender3d.ffd import FFDLattice, ffd_apply

        v = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
        mesh = Mesh(v, np.array([[0, 1, 2]]))  # renderable, but not deformable
        with pytest.raises(ValueError, match="positive extent"):
            ffd_apply(mesh, FFDLattice.identity())


class TestObjIO:
    def test_minimal_obj(self, tmp_path):
        p = tmp_path / "tri.obj"
        p.write_text("# comment\nv 0 0 0\nv 1 0 1\nv 0 1 2\nf 1 2 3\n")
        mesh = load_obj(p)
        assert mesh.vertices.shape == (3, 3)
        np.testing.assert_array_equal(mesh.triangles, [[0, 1, 2]])

    def test_unknown_directive_warns_once(self, tmp_path, caplog):
        p = tmp_path / "extra.obj"
        p.write_text("v 0 0 0\nv 1 0 1\nv 0 1 2\nvn 1 0 0\nvn 0 1 0\nf 1 2 3\n")
        with caplog.at_level("WARNING"):
            mesh = load_obj(p)
        assert mesh.vertices.shape == (3, 3)
        assert sum("vn" in rec.message for rec in caplog.records) == 1

    def test_slash_face_indices(self, tmp_path):
        p = tmp_path / "tex.obj"
        p.write_text("v 0 0 0\nv 1 0 1\nv 0 1 2\nf 1/1 2/2 3/3\n")
        np.testing.assert_array_equal(load_obj(p).triangles, [[0, 1, 2]])

    def test_non_triangle_rejected(self, tmp_path):
        p = tmp_path / "quad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 1\nv 0 1 1\nf 1 2 3 4\n")
        with pytest.raises(ValueError, match="triangle"):
            load_obj(p)

    def test_save_load_round_trip(self, tmp_path, rng):
        v = rng.normal(size=(12, 3))
        t = np.array([[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]])
        mesh = Mesh(v, t)
        save_obj(mesh, tmp_path / "m.obj")
        back = load_obj(tmp_path / "m.obj")
        np.testing.assert_array_equal(back.vertices, mesh.vertices)
        np.testing.assert_array_equal(back.triangles, mesh.triangles)


class TestLibrary:
    def test_builtin_has_eight_distinct_meshes(self, library):
        assert len(library) == 8
        assert len(set(library.names)) == 8
        for mesh in library.meshes:
            ext = mesh.bbox_max - mesh.bbox_min
            assert abs(ext.max() - 1.0) < 1e-9  # unit canonical frame
            assert np.all(ext > 0)

    def test_builtin_matches_generator(self, library):
        rebuilt = build_default_library()
        assert rebuilt.names == library.names
        for a, b in zip(rebuilt.meshes, library.meshes):
            np.testing.assert_allclose(a.vertices, b.vertices, atol=1e-15)
            np.testing.assert_array_equal(a.triangles, b.triangles)

    def test_save_load_round_trip(self, tmp_path, library):
        save_mesh_library(library, tmp_path / "lib")
        back = load_mesh_library(tmp_path / "lib")
        assert back.names == library.names
        for a, b in zip(back.meshes, library.meshes):
            np.testing.assert_array_equal(a.vertices, b.vertices)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_mesh_library(tmp_path)
