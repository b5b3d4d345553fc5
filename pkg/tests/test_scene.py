import json
import math

import numpy as np
import pytest

from derender3d.ffd import FFDLattice
from derender3d.geometry import Camera, ObjectState, YawAngle, pose_mesh
from derender3d.raster import SoftRasterConfig, binarize, render_silhouette_soft
from derender3d.scene import (
    EditOp,
    Scene,
    SceneFormatError,
    apply_edit,
    invert_edit,
    load_edit_script,
    load_scene,
    occlusion_mask,
    occlusion_masks,
    render_scene,
    save_edit_script,
    save_scene,
    scene_from_dict,
    scene_to_dict,
)

CAM = Camera(80.0, 80.0, 32.0, 32.0, 64, 64, 0.5)


def make_object(center, distance, yaw=0.4, mesh_index=0, scale=(2.0, 2.0, 2.0)):
    return ObjectState(mesh_index, FFDLattice.identity(), scale, YawAngle(yaw),
                       center, distance, (center[0], center[1], 10.0, 6.0))


@pytest.fixture()
def scene(library) -> Scene:
    objects = (
        (1, make_object((32.0, 32.0), 10.0, yaw=0.3, mesh_index=1)),
        (2, make_object((20.0, 30.0), 14.0, yaw=2.0, mesh_index=4)),
    )
    return Scene(CAM, objects, library)


class TestSceneValidation:
    def test_duplicate_ids_rejected(self, library):
        obj = make_object((32.0, 32.0), 10.0)
        with pytest.raises(ValueError):
            Scene(CAM, ((1, obj), (1, obj)), library)

    def test_nonpositive_id_rejected(self, library):
        with pytest.raises(ValueError):
            Scene(CAM, ((0, make_object((32.0, 32.0), 10.0)),), library)

    def test_mesh_index_range(self, library):
        with pytest.raises(ValueError):
            Scene(CAM, ((1, make_object((32.0, 32.0), 10.0, mesh_index=8)),), library)


class TestApplyEdit:
    def test_identity_edit_is_noop(self, scene):
        st = scene.get(1)
        op = EditOp(1, src_center=st.center_2d, tgt_center=st.center_2d,
                    zoom_rho=1.0, delta_ry=0.0, kind="move")
        out = apply_edit(scene, op)
        assert out.object_ids() == scene.object_ids()
        new = out.get(1)
        assert new.center_2d == st.center_2d
        assert new.ray_distance == st.ray_distance
        assert new.yaw.theta == st.yaw.theta
        assert out.get(2) is scene.get(2)

    def test_zoom_halves_distance_and_grows_silhouette(self, scene):
        st = scene.get(1)
        op = EditOp(1, st.center_2d, st.center_2d, zoom_rho=2.0, kind="move")
        out = apply_edit(scene, op)
        assert abs(out.get(1).ray_distance - st.ray_distance / 2.0) < 1e-12
        cfg = SoftRasterConfig(tail_sigmas=8.0)
        before = binarize(render_silhouette_soft(
            pose_mesh(scene.mesh_lib[st.mesh_index], st, CAM), CAM, cfg), cfg)
        after_state = out.get(1)
        after = binarize(render_silhouette_soft(
            pose_mesh(scene.mesh_lib[st.mesh_index], after_state, CAM), CAM, cfg), cfg)
        assert after.values.sum() > before.values.sum()

    def test_yaw_involution(self, scene):
        st = scene.get(1)
        op = EditOp(1, st.center_2d, st.center_2d, 1.0, math.pi, "move")
        twice = apply_edit(apply_edit(scene, op), op)
        dyaw = abs((twice.get(1).yaw.theta - st.yaw.theta + math.pi)
                   % (2 * math.pi) - math.pi)
        assert dyaw < 1e-12

    def test_edit_locality(self, scene):
        st = scene.get(1)
        op = EditOp(1, st.center_2d, (40.0, 28.0), 1.3, 0.7, "move")
        out = apply_edit(scene, op)
        new = out.get(1)
        assert new.mesh_index == st.mesh_index
        assert new.scale == st.scale
        assert new.bbox == st.bbox
        np.testing.assert_array_equal(new.ffd.offsets, st.ffd.offsets)
        assert out.get(2) is scene.get(2)
        assert out.camera is scene.camera

    def test_delete(self, scene):
        out = apply_edit(scene, EditOp(2, kind="delete"))
        assert out.object_ids() == [1]

    def test_duplicate_gets_fresh_id_and_move(self, scene):
        st = scene.get(1)
        op = EditOp(1, st.center_2d, (40.0, 20.0), 2.0, 0.5, "duplicate")
        out = apply_edit(scene, op)
        assert out.object_ids() == [1, 2, 3]
        copy = out.get(3)
        assert copy.center_2d == (40.0, 20.0)
        assert abs(copy.ray_distance - st.ray_distance / 2.0) < 1e-12
        assert out.get(1) is st  # original untouched

    def test_unknown_object(self, scene):
        with pytest.raises(KeyError):
            apply_edit(scene, EditOp(99, kind="delete"))

    def test_near_plane_guard(self, scene):
        st = scene.get(1)
        op = EditOp(1, st.center_2d, st.center_2d, zoom_rho=100.0, kind="move")
        with pytest.raises(ValueError, match="near plane"):
            apply_edit(scene, op)

    def test_zoom_validation(self):
        with pytest.raises(ValueError):
            EditOp(1, (0, 0), (0, 0), zoom_rho=0.0)
        with pytest.raises(ValueError):
            EditOp(1, kind="teleport")


class TestInvertEdit:
    def test_identity_op(self):
        op = EditOp(1, (5.0, 5.0), (5.0, 5.0), 1.0, 0.0, "move")
        inv = invert_edit(op)
        assert inv.tgt_center == op.src_center
        assert inv.zoom_rho == 1.0
        assert inv.delta_ry == 0.0

    def test_rho_inverts(self):
        assert invert_edit(EditOp(1, (0, 0), (1, 1), 2.0, 0.1)).zoom_rho == 0.5

    def test_round_trip_restores_state(self, scene, rng):
        for _ in range(100):
            st = scene.get(1)
            op = EditOp(
                1,
                src_center=st.center_2d,
                tgt_center=(float(rng.uniform(5, 59)), float(rng.uniform(5, 59))),
                zoom_rho=float(rng.uniform(0.5, 1.8)),
                delta_ry=float(rng.uniform(-math.pi, math.pi)),
                kind="move",
            )
            there = apply_edit(scene, op)
            back = apply_edit(there, invert_edit(op))
            orig, rest = scene.get(1), back.get(1)
            assert abs(rest.center_2d[0] - orig.center_2d[0]) < 1e-9
            assert abs(rest.center_2d[1] - orig.center_2d[1]) < 1e-9
            assert abs(rest.ray_distance - orig.ray_distance) < 1e-9
            dyaw = abs((rest.yaw.theta - orig.yaw.theta + math.pi)
                       % (2 * math.pi) - math.pi)
            assert dyaw < 1e-9

    def test_non_move_not_invertible(self):
        with pytest.raises(ValueError):
            invert_edit(EditOp(1, kind="delete"))


class TestRenderScene:
    def test_empty_scene_is_background(self, library):
        empty = Scene(CAM, (), library)
        layers, sils = render_scene(empty)
        assert sils == {}
        assert (layers.instance == 0).all()
        assert np.isinf(layers.depth).all()
        assert (layers.pose_bins == -1).all()

    def test_occluder_owns_overlap(self, library):
        near = (1, make_object((32.0, 32.0), 6.0))
        far = (2, make_object((32.0, 32.0), 16.0))
        layers, _ = render_scene(Scene(CAM, (near, far), library))
        # object 2 is the same shape directly behind object 1: invisible
        assert set(np.unique(layers.instance)) == {0, 1}

    def test_matches_joint_zbuffer_oracle(self, scene):
        from test_raster import edge_distances_2d, hard_raster_oracle

        triple = Scene(
            scene.camera,
            scene.objects + ((3, make_object((45.0, 25.0), 8.0, yaw=1.0, mesh_index=6)),),
            scene.mesh_lib,
        )
        layers, _ = render_scene(triple)
        posed = [
            (oid, pose_mesh(triple.mesh_lib[st.mesh_index], st, CAM))
            for oid, st in triple.objects
        ]
        oracle_inst, _ = hard_raster_oracle(posed, CAM)
        safe = np.ones((64, 64), dtype=bool)
        for _, mesh in posed:
            safe &= edge_distances_2d(mesh, CAM) > 0.01
        assert (layers.instance[safe] == oracle_inst[safe]).all()

    def test_determinism_bytes(self, scene):
        a, sa = render_scene(scene)
        b, sb = render_scene(scene)
        assert a.instance.tobytes() == b.instance.tobytes()
        assert a.depth.tobytes() == b.depth.tobytes()
        assert a.normal.tobytes() == b.normal.tobytes()
        for oid in sa:
            assert sa[oid].values.tobytes() == sb[oid].values.tobytes()


class TestOcclusionMask:
    def test_single_object_all_true(self, library):
        s = Scene(CAM, ((1, make_object((32.0, 32.0), 10.0)),), library)
        assert occlusion_mask(s, 1).all()

    def test_fully_occluded(self, library):
        near = (1, make_object((32.0, 32.0), 6.0, scale=(3.0, 3.0, 3.0)))
        far = (2, make_object((32.0, 32.0), 16.0, scale=(1.5, 1.5, 1.5)))
        s = Scene(CAM, (near, far), library)
        layers, _ = render_scene(s)
        masks = occlusion_masks(s)
        footprint = layers.instance == 1
        assert not masks[2][footprint].any()

    def test_matches_depth_comparison_oracle(self, scene):
        from derender3d.scene import object_depths

        depths = object_depths(scene)
        masks = occlusion_masks(scene)
        for oid in scene.object_ids():
            own = depths[oid]
            for iy in range(0, 64, 3):
                for ix in range(0, 64, 3):
                    occluded = any(
                        depths[o][iy, ix] < own[iy, ix]
                        for o in scene.object_ids() if o != oid
                    )
                    assert masks[oid][iy, ix] == (not occluded)

    def test_unknown_object(self, scene):
        with pytest.raises(KeyError):
            occlusion_mask(scene, 42)


class TestSerialization:
    def test_round_trip(self, scene, tmp_path):
        st = scene.get(1).replace(ffd=FFDLattice(np.full((4, 4, 4, 3), 0.01)))
        scene = scene.with_objects([(1, st), (2, scene.get(2))])
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        back = load_scene(path, scene.mesh_lib)
        assert back.object_ids() == scene.object_ids()
        for oid in scene.object_ids():
            a, b = scene.get(oid), back.get(oid)
            assert a.center_2d == b.center_2d
            assert a.ray_distance == b.ray_distance
            assert a.scale == b.scale
            assert a.yaw.theta == b.yaw.theta
            assert a.bbox == b.bbox
            np.testing.assert_array_equal(a.ffd.offsets, b.ffd.offsets)

    def test_identity_ffd_omitted(self, scene):
        doc = scene_to_dict(scene)
        assert "ffd" not in doc["objects"][0]
        assert doc["version"] == "d3sdn-scene/1"
        back = scene_from_dict(doc, scene.mesh_lib)
        assert back.get(1).ffd.is_identity()

    def test_version_checked(self, scene):
        doc = scene_to_dict(scene)
        doc["version"] = "bogus/9"
        with pytest.raises(SceneFormatError, match="version"):
            scene_from_dict(doc, scene.mesh_lib)

    def test_missing_field_names_path(self, scene):
        doc = scene_to_dict(scene)
        del doc["objects"][1]["ray_distance"]
        with pytest.raises(SceneFormatError, match=r"objects\[1\]"):
            scene_from_dict(doc, scene.mesh_lib)

    def test_edit_script_round_trip(self, tmp_path):
        ops = [
            EditOp(1, (1.0, 2.0), (3.0, 4.0), 1.5, 0.3, "move"),
            EditOp(2, kind="delete"),
            EditOp(1, (1.0, 2.0), (5.0, 6.0), 2.0, -0.4, "duplicate"),
        ]
        path = tmp_path / "script.json"
        save_edit_script(ops, path)
        back = load_edit_script(path)
        assert back == ops
        raw = json.loads(path.read_text())
        assert set(raw[0]) == {"object_id", "src_center", "tgt_center",
                               "zoom_rho", "delta_ry", "kind"}
