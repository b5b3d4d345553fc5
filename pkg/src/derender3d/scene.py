"""Whole-scene representation, 3D edit operations, and joint rendering.

Scene files are JSON tagged "d3sdn-scene/1". Edits are parametrized the same
way as the editing benchmark: an image-plane source/target position for the
object's 3D center, a zoom factor rho (> 1 moves the object closer along its
viewing ray), and a yaw increment about the camera y axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .ffd import FFDLattice
from .geometry import Camera, ObjectState, YawAngle, pose_mesh
from .meshes import MeshLibrary, load_mesh_library
from .raster import (
    RenderLayers,
    SoftRasterConfig,
    render_hard,
    render_silhouette_soft,
)

SCENE_FORMAT = "d3sdn-scene/1"

EDIT_KINDS = ("move", "delete", "duplicate")


@dataclass(frozen=True)
class Scene:
    camera: Camera
    objects: tuple[tuple[int, ObjectState], ...]
    mesh_lib: MeshLibrary
    mesh_lib_ref: str = "builtin"

    def __post_init__(self):
        ids = [oid for oid, _ in self.objects]
        if any(i <= 0 for i in ids):
            raise ValueError("object ids must be positive")
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        for oid, state in self.objects:
            if not (0 <= state.mesh_index < len(self.mesh_lib)):
                raise ValueError(f"object {oid}: mesh index {state.mesh_index} out of range")

    def object_ids(self) -> list[int]:
        return [oid for oid, _ in self.objects]

    def get(self, object_id: int) -> ObjectState:
        for oid, state in self.objects:
            if oid == object_id:
                return state
        raise KeyError(f"unknown object id {object_id}")

    def with_objects(self, objects) -> "Scene":
        return replace(self, objects=tuple(objects))


@dataclass(frozen=True)
class EditOp:
    object_id: int
    src_center: tuple[float, float] = (0.0, 0.0)
    tgt_center: tuple[float, float] = (0.0, 0.0)
    zoom_rho: float = 1.0
    delta_ry: float = 0.0
    kind: str = "move"

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise ValueError(f"unknown edit kind {self.kind!r}")
        if self.zoom_rho <= 0:
            raise ValueError("zoom_rho must be positive")

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "src_center": list(self.src_center),
            "tgt_center": list(self.tgt_center),
            "zoom_rho": self.zoom_rho,
            "delta_ry": self.delta_ry,
            "kind": self.kind,
        }

    @staticmethod
    def from_dict(d: dict) -> "EditOp":
        return EditOp(
            object_id=int(d["object_id"]),
            src_center=tuple(d.get("src_center", (0.0, 0.0))),
            tgt_center=tuple(d.get("tgt_center", (0.0, 0.0))),
            zoom_rho=float(d.get("zoom_rho", 1.0)),
            delta_ry=float(d.get("delta_ry", 0.0)),
            kind=str(d.get("kind", "move")),
        )


def _moved_state(state: ObjectState, op: EditOp, camera: Camera) -> ObjectState:
    new_distance = state.ray_distance / op.zoom_rho
    if new_distance <= camera.near_plane:
        raise ValueError(
            f"edit would move object {op.object_id} to ray distance "
            f"{new_distance:.6g}, at or behind the near plane"
        )
    return state.replace(
        center_2d=(float(op.tgt_center[0]), float(op.tgt_center[1])),
        ray_distance=new_distance,
        yaw=state.yaw.add(op.delta_ry),
    )


def apply_edit(scene: Scene, op: EditOp) -> Scene:
    """Apply one edit, returning a new scene.

    move: retarget the object's image-plane center, divide its ray distance
    by rho, and add delta_ry to its yaw; shape parameters are untouched.
    delete: remove the object. duplicate: insert a copy under a fresh id and
    apply the move rule to the copy.
    """
    ids = scene.object_ids()
    if op.object_id not in ids:
        raise KeyError(f"unknown object id {op.object_id}")
    if op.kind == "move":
        objects = [
            (oid, _moved_state(st, op, scene.camera) if oid == op.object_id else st)
            for oid, st in scene.objects
        ]
        return scene.with_objects(objects)
    if op.kind == "delete":
        return scene.with_objects(
            [(oid, st) for oid, st in scene.objects if oid != op.object_id]
        )
    # duplicate
    new_id = max(ids) + 1
    copy = _moved_state(scene.get(op.object_id), op, scene.camera)
    return scene.with_objects(list(scene.objects) + [(new_id, copy)])


def invert_edit(op: EditOp) -> EditOp:
    """Inverse of a move edit; other kinds are not invertible from the op alone."""
    if op.kind != "move":
        raise ValueError(f"cannot invert a {op.kind!r} edit without a scene snapshot")
    return EditOp(
        object_id=op.object_id,
        src_center=op.tgt_center,
        tgt_center=op.src_center,
        zoom_rho=1.0 / op.zoom_rho,
        delta_ry=-op.delta_ry,
        kind="move",
    )


def posed_meshes(scene: Scene):
    """(object_id, posed mesh, yaw) triples, with failures naming the object."""
    out = []
    for oid, state in scene.objects:
        try:
            out.append((oid, pose_mesh(scene.mesh_lib[state.mesh_index], state, scene.camera), state.yaw))
        except ValueError as exc:
            raise ValueError(f"object {oid}: {exc}") from exc
    return out


def _background_layers(camera: Camera) -> RenderLayers:
    h, w = camera.height, camera.width
    return RenderLayers(
        instance=np.zeros((h, w), dtype=np.int32),
        depth=np.full((h, w), np.inf),
        normal=np.zeros((h, w, 3)),
        pose_bins=np.full((h, w), -1, dtype=np.int32),
    )


def render_scene(scene: Scene, cfg: SoftRasterConfig = SoftRasterConfig()):
    """Joint hard layers plus each object's independent soft silhouette."""
    if not scene.objects:
        return _background_layers(scene.camera), {}
    posed = posed_meshes(scene)
    layers = render_hard(posed, scene.camera)
    silhouettes = {}
    for oid, mesh, _ in posed:
        try:
            silhouettes[oid] = render_silhouette_soft(mesh, scene.camera, cfg)
        except ValueError as exc:
            raise ValueError(f"object {oid}: {exc}") from exc
    return layers, silhouettes


def object_depths(scene: Scene) -> dict[int, np.ndarray]:
    """Each object's individual hard depth map (inf where it is absent)."""
    depths = {}
    for oid, mesh, yaw in posed_meshes(scene):
        depths[oid] = render_hard([(oid, mesh, yaw)], scene.camera).depth
    return depths


def occlusion_masks(scene: Scene, depths: dict[int, np.ndarray] | None = None) -> dict[int, np.ndarray]:
    """Per-object supervision masks: false where another object is strictly
    nearer than the object's own surface (or covers background it does not
    reach)."""
    if depths is None:
        depths = object_depths(scene)
    masks = {}
    for oid in scene.object_ids():
        own = depths[oid]
        occluded = np.zeros(own.shape, dtype=bool)
        for other_id, other in depths.items():
            if other_id != oid:
                occluded |= other < own
        masks[oid] = ~occluded
    return masks


def occlusion_mask(scene: Scene, object_id: int) -> np.ndarray:
    if object_id not in scene.object_ids():
        raise KeyError(f"unknown object id {object_id}")
    return occlusion_masks(scene)[object_id]


def scene_to_dict(scene: Scene) -> dict:
    cam = scene.camera
    objects = []
    for oid, st in scene.objects:
        rec = {
            "id": oid,
            "mesh_index": st.mesh_index,
            "scale": list(st.scale),
            "yaw": st.yaw.theta,
            "center_2d": list(st.center_2d),
            "ray_distance": st.ray_distance,
            "bbox": list(st.bbox),
        }
        if not st.ffd.is_identity():
            rec["ffd"] = st.ffd.to_flat().tolist()
        objects.append(rec)
    return {
        "version": SCENE_FORMAT,
        "camera": {
            "fx": cam.focal_x,
            "fy": cam.focal_y,
            "cx": cam.principal_x,
            "cy": cam.principal_y,
            "width": cam.width,
            "height": cam.height,
            "near": cam.near_plane,
        },
        "mesh_lib": scene.mesh_lib_ref,
        "objects": objects,
    }


class SceneFormatError(ValueError):
    """Scene JSON failed validation; `path` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise SceneFormatError(f"{where}.{key}", "missing required field")
    return d[key]


def scene_from_dict(data: dict, mesh_lib: MeshLibrary | None = None) -> Scene:
    if not isinstance(data, dict):
        raise SceneFormatError("$", "scene document must be a JSON object")
    version = _require(data, "version", "$")
    if version != SCENE_FORMAT:
        raise SceneFormatError("$.version", f"unsupported format {version!r}")
    cam_d = _require(data, "camera", "$")
    try:
        camera = Camera(
            focal_x=float(_require(cam_d, "fx", "$.camera")),
            focal_y=float(_require(cam_d, "fy", "$.camera")),
            principal_x=float(_require(cam_d, "cx", "$.camera")),
            principal_y=float(_require(cam_d, "cy", "$.camera")),
            width=int(_require(cam_d, "width", "$.camera")),
            height=int(_require(cam_d, "height", "$.camera")),
            near_plane=float(cam_d.get("near", 0.1)),
        )
    except SceneFormatError:
        raise
    except ValueError as exc:
        raise SceneFormatError("$.camera", str(exc)) from exc
    lib_ref = str(data.get("mesh_lib", "builtin"))
    if mesh_lib is None:
        mesh_lib = load_mesh_library(lib_ref)
    objects = []
    for i, rec in enumerate(_require(data, "objects", "$")):
        where = f"$.objects[{i}]"
        try:
            ffd = FFDLattice.from_flat(rec["ffd"]) if "ffd" in rec else FFDLattice.identity()
            state = ObjectState(
                mesh_index=int(_require(rec, "mesh_index", where)),
                ffd=ffd,
                scale=tuple(float(x) for x in _require(rec, "scale", where)),
                yaw=YawAngle(float(_require(rec, "yaw", where))),
                center_2d=tuple(float(x) for x in _require(rec, "center_2d", where)),
                ray_distance=float(_require(rec, "ray_distance", where)),
                bbox=tuple(float(x) for x in _require(rec, "bbox", where)),
            )
        except SceneFormatError:
            raise
        except (TypeError, ValueError) as exc:
            raise SceneFormatError(where, str(exc)) from exc
        objects.append((int(_require(rec, "id", where)), state))
    try:
        return Scene(camera, tuple(objects), mesh_lib, lib_ref)
    except ValueError as exc:
        raise SceneFormatError("$.objects", str(exc)) from exc


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(
        json.dumps(scene_to_dict(scene), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_scene(path, mesh_lib: MeshLibrary | None = None) -> Scene:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return scene_from_dict(data, mesh_lib)


def load_edit_script(path) -> list[EditOp]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError("edit script must be a JSON array of edit records")
    return [EditOp.from_dict(d) for d in data]


def save_edit_script(ops: list[EditOp], path) -> None:
    Path(path).write_text(
        json.dumps([op.to_dict() for op in ops], indent=2) + "\n", encoding="utf-8"
    )
