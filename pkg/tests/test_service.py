import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from derender3d import formats
from derender3d.ffd import FFDLattice
from derender3d.geometry import Camera, ObjectState, YawAngle
from derender3d.scene import Scene, scene_to_dict
from derender3d.service import create_app

CAM = Camera(80.0, 80.0, 32.0, 32.0, 64, 64, 0.5)


@pytest.fixture()
def scene_doc(library):
    state = ObjectState(1, FFDLattice.identity(), (2.2, 2.2, 2.2), YawAngle(0.7),
                        (32.0, 32.0), 9.0, (32.0, 32.0, 20.0, 10.0))
    other = ObjectState(4, FFDLattice.identity(), (2.0, 2.0, 2.0), YawAngle(2.4),
                        (16.0, 28.0), 12.0, (16.0, 28.0, 14.0, 8.0))
    return scene_to_dict(Scene(CAM, ((1, state), (7, other)), library))


@pytest.fixture()
def client():
    return TestClient(create_app())


def load(client, doc):
    resp = client.post("/api/scene", json=doc)
    assert resp.status_code == 200
    return resp.json()["session_id"]


def identity_op(doc, oid=1):
    obj = next(o for o in doc["objects"] if o["id"] == oid)
    return {
        "object_id": oid,
        "src_center": obj["center_2d"],
        "tgt_center": obj["center_2d"],
        "zoom_rho": 1.0,
        "delta_ry": 0.0,
        "kind": "move",
    }


class TestLoadScene:
    def test_valid_scene(self, client, scene_doc):
        resp = client.post("/api/scene", json=scene_doc)
        assert resp.status_code == 200
        body = resp.json()
        assert body["revision"] == 0
        assert body["session_id"]

    def test_malformed_json(self, client):
        resp = client.post("/api/scene", content=b"{nope",
                           headers={"content-type": "application/json"})
        assert resp.status_code == 400

    def test_schema_violation_names_field(self, client, scene_doc):
        bad = dict(scene_doc)
        bad = {**scene_doc, "camera": {k: v for k, v in scene_doc["camera"].items()
                                       if k != "fx"}}
        resp = client.post("/api/scene", json=bad)
        assert resp.status_code == 400
        assert "camera.fx" in resp.json()["field"]

    def test_two_loads_distinct_sessions(self, client, scene_doc):
        a = load(client, scene_doc)
        b = load(client, scene_doc)
        assert a != b


class TestEdit:
    def test_identity_edit_bumps_revision_only(self, client, scene_doc):
        sid = load(client, scene_doc)
        before = client.get(f"/api/scene/{sid}").json()
        resp = client.post(f"/api/scene/{sid}/edit", json=identity_op(scene_doc))
        assert resp.status_code == 200
        assert resp.json() == {"revision": 1, "changed_object": 1}
        after = client.get(f"/api/scene/{sid}").json()
        assert after["revision"] == 1
        before.pop("revision")
        after.pop("revision")
        assert before == after

    def test_unknown_session_404(self, client, scene_doc):
        resp = client.post("/api/scene/nope/edit", json=identity_op(scene_doc))
        assert resp.status_code == 404

    def test_invalid_op_422(self, client, scene_doc):
        sid = load(client, scene_doc)
        op = identity_op(scene_doc)
        op["object_id"] = 99
        assert client.post(f"/api/scene/{sid}/edit", json=op).status_code == 422

    def test_behind_near_plane_422(self, client, scene_doc):
        sid = load(client, scene_doc)
        op = identity_op(scene_doc)
        op["zoom_rho"] = 1e6
        resp = client.post(f"/api/scene/{sid}/edit", json=op)
        assert resp.status_code == 422
        assert "near plane" in resp.json()["error"]

    def test_duplicate_reports_new_id(self, client, scene_doc):
        sid = load(client, scene_doc)
        op = identity_op(scene_doc)
        op["kind"] = "duplicate"
        resp = client.post(f"/api/scene/{sid}/edit", json=op)
        assert resp.status_code == 200
        assert resp.json()["changed_object"] == 8  # max(1, 7) + 1


class TestUndo:
    def test_edit_then_undo_restores(self, client, scene_doc):
        sid = load(client, scene_doc)
        initial = client.get(f"/api/scene/{sid}").json()
        op = identity_op(scene_doc)
        op["tgt_center"] = [40.0, 30.0]
        op["zoom_rho"] = 1.4
        op["delta_ry"] = 0.8
        assert client.post(f"/api/scene/{sid}/edit", json=op).status_code == 200
        resp = client.post(f"/api/scene/{sid}/undo")
        assert resp.status_code == 200
        assert resp.json()["revision"] == 2
        restored = client.get(f"/api/scene/{sid}").json()
        for a, b in zip(initial["objects"], restored["objects"]):
            assert a["id"] == b["id"]
            assert abs(a["ray_distance"] - b["ray_distance"]) < 1e-9
            assert abs(a["center_2d"][0] - b["center_2d"][0]) < 1e-9
            dy = abs((a["yaw"] - b["yaw"] + math.pi) % (2 * math.pi) - math.pi)
            assert dy < 1e-9

    def test_empty_stack_409(self, client, scene_doc):
        sid = load(client, scene_doc)
        assert client.post(f"/api/scene/{sid}/undo").status_code == 409

    def test_n_edits_n_undos(self, client, scene_doc):
        sid = load(client, scene_doc)
        initial = client.get(f"/api/scene/{sid}").json()
        ops = [
            {**identity_op(scene_doc), "tgt_center": [30.0 + i, 30.0], "zoom_rho": 1.1,
             "delta_ry": 0.2 * i}
            for i in range(1, 4)
        ]
        # chain edits: each op's src is the previous target
        for op in ops:
            assert client.post(f"/api/scene/{sid}/edit", json=op).status_code == 200
        delete_op = {"object_id": 7, "kind": "delete"}
        assert client.post(f"/api/scene/{sid}/edit", json=delete_op).status_code == 200
        for _ in range(4):
            assert client.post(f"/api/scene/{sid}/undo").status_code == 200
        final = client.get(f"/api/scene/{sid}").json()
        assert final["revision"] == 8
        assert [o["id"] for o in final["objects"]] == [o["id"] for o in initial["objects"]]
        for a, b in zip(initial["objects"], final["objects"]):
            assert abs(a["ray_distance"] - b["ray_distance"]) < 1e-9
            assert abs(a["center_2d"][0] - b["center_2d"][0]) < 1e-9
            assert abs(a["center_2d"][1] - b["center_2d"][1]) < 1e-9


class TestRender:
    def test_single_layer_png(self, client, scene_doc):
        sid = load(client, scene_doc)
        resp = client.get(f"/api/scene/{sid}/render", params={"layers": "instance"})
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        assert resp.headers["x-scene-revision"] == "0"
        img = formats.read_png(resp.content)
        grays = set(np.unique(img)) - {0}
        assert grays == {10, 70}  # ids 1 and 7, step 10

    def test_render_purity(self, client, scene_doc):
        sid = load(client, scene_doc)
        client.get(f"/api/scene/{sid}/render", params={"layers": "instance"})
        assert client.get(f"/api/scene/{sid}").json()["revision"] == 0

    def test_same_revision_identical_bytes(self, client, scene_doc):
        sid = load(client, scene_doc)
        a = client.get(f"/api/scene/{sid}/render", params={"layers": "normal"})
        b = client.get(f"/api/scene/{sid}/render", params={"layers": "normal"})
        assert a.content == b.content

    def test_unknown_layer_400(self, client, scene_doc):
        sid = load(client, scene_doc)
        assert client.get(f"/api/scene/{sid}/render",
                          params={"layers": "bogus"}).status_code == 400

    def test_multi_layer_json(self, client, scene_doc):
        sid = load(client, scene_doc)
        resp = client.get(f"/api/scene/{sid}/render",
                          params={"layers": "instance,pose"})
        assert resp.status_code == 200
        body = resp.json()
        assert set(body["layers"]) == {"instance", "pose"}
        assert body["revision"] == 0

    def test_pgm_format(self, client, scene_doc):
        sid = load(client, scene_doc)
        resp = client.get(f"/api/scene/{sid}/render",
                          params={"layers": "silhouette", "format": "pgm"})
        assert resp.status_code == 200
        img = formats.read_pgm(resp.content)
        assert img.shape == (64, 64)

    def test_unknown_session_404(self, client):
        assert client.get("/api/scene/zzz/render").status_code == 404


class TestLinearizability:
    def test_concurrent_edits_gapless_revisions(self, client, scene_doc):
        import threading

        sid = load(client, scene_doc)
        op = identity_op(scene_doc)
        revisions = []
        lock = threading.Lock()

        def hit():
            resp = client.post(f"/api/scene/{sid}/edit", json=op)
            assert resp.status_code == 200
            with lock:
                revisions.append(resp.json()["revision"])

        threads = [threading.Thread(target=hit) for _ in range(12)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(revisions) == list(range(1, 13))
        assert client.get(f"/api/scene/{sid}").json()["revision"] == 12
