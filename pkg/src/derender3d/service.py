"""HTTP facade for interactive scene editing.

Sessions are in-memory and ephemeral. Mutations within a session are
serialized by a per-session lock; revision numbers are gapless and increase
on every mutation (edits and undos). Rendering reads the committed scene and
never mutates it.
"""

from __future__ import annotations

import base64
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import formats
from .raster import SoftRasterConfig
from .scene import (
    EditOp,
    Scene,
    SceneFormatError,
    apply_edit,
    invert_edit,
    render_scene,
    scene_from_dict,
    scene_to_dict,
)

DEFAULT_PORT = 8723
RENDER_LAYERS = ("silhouette", "instance", "normal", "pose")


@dataclass
class Session:
    scene: Scene
    initial: Scene
    revision: int = 0
    # Undo entries are either ("op", inverse EditOp) for moves or
    # ("scene", snapshot) for destructive kinds.
    undo_stack: list[tuple[str, object]] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _render_layer(scene: Scene, layer: str) -> np.ndarray:
    hard, silhouettes = render_scene(scene, SoftRasterConfig(tail_sigmas=8.0))
    if layer == "silhouette":
        union = np.ones((scene.camera.height, scene.camera.width))
        for sil in silhouettes.values():
            union *= 1.0 - sil.values
        return formats.silhouette_to_u8(1.0 - union)
    if layer == "instance":
        return formats.instance_to_u8(hard.instance)
    if layer == "normal":
        return formats.normal_to_u8(hard.normal)
    if layer == "pose":
        return formats.pose_to_u8(hard.pose_bins)
    raise KeyError(layer)


def create_app() -> FastAPI:
    app = FastAPI(title="derender3d edit service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def get_session(session_id: str) -> Session | None:
        with registry_lock:
            return sessions.get(session_id)

    @app.post("/api/scene")
    async def load_scene(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "body is not valid JSON"}, status_code=400)
        try:
            scene = scene_from_dict(body)
        except SceneFormatError as exc:
            return JSONResponse({"error": str(exc), "field": exc.path}, status_code=400)
        session_id = uuid.uuid4().hex
        with registry_lock:
            sessions[session_id] = Session(scene=scene, initial=scene)
        return {"session_id": session_id, "revision": 0}

    @app.get("/api/scene/{session_id}")
    def get_scene(session_id: str):
        session = get_session(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with session.lock:
            doc = scene_to_dict(session.scene)
            doc["revision"] = session.revision
        return doc

    @app.post("/api/scene/{session_id}/edit")
    async def edit_scene(session_id: str, request: Request):
        session = get_session(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        try:
            body = await request.json()
            op = EditOp.from_dict(body)
        except Exception as exc:
            return JSONResponse({"error": f"invalid edit: {exc}"}, status_code=422)
        with session.lock:
            try:
                new_scene = apply_edit(session.scene, op)
            except (KeyError, ValueError) as exc:
                return JSONResponse({"error": str(exc)}, status_code=422)
            if op.kind == "move":
                undo_entry = ("op", invert_edit(op))
                changed = op.object_id
            else:
                undo_entry = ("scene", session.scene)
                if op.kind == "duplicate":
                    changed = max(new_scene.object_ids())
                else:
                    changed = op.object_id
            session.scene = new_scene
            session.undo_stack.append(undo_entry)
            session.revision += 1
            return {"revision": session.revision, "changed_object": changed}

    @app.post("/api/scene/{session_id}/undo")
    def undo(session_id: str):
        session = get_session(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with session.lock:
            if not session.undo_stack:
                return JSONResponse({"error": "nothing to undo"}, status_code=409)
            kind, payload = session.undo_stack.pop()
            if kind == "op":
                session.scene = apply_edit(session.scene, payload)
            else:
                session.scene = payload
            session.revision += 1
            return {"revision": session.revision}

    @app.get("/api/scene/{session_id}/render")
    def render(session_id: str, layers: str = "instance", format: str = "png"):
        session = get_session(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        names = [l.strip() for l in layers.split(",") if l.strip()]
        bad = [l for l in names if l not in RENDER_LAYERS]
        if bad or not names:
            return JSONResponse(
                {"error": f"unknown layers {bad}; choose from {RENDER_LAYERS}"},
                status_code=400,
            )
        if format not in ("png", "pgm"):
            return JSONResponse({"error": f"unknown format {format!r}"}, status_code=400)
        with session.lock:
            scene = session.scene
            revision = session.revision
        encode = formats.png_bytes if format == "png" else formats.pgm_bytes
        media = "image/png" if format == "png" else "image/x-portable-graymap"
        if len(names) == 1:
            arr = _render_layer(scene, names[0])
            if format == "pgm" and arr.ndim == 3:
                arr = arr[:, :, 0]
            return Response(content=encode(arr), media_type=media,
                            headers={"X-Scene-Revision": str(revision)})
        payload = {}
        for name in names:
            arr = _render_layer(scene, name)
            if format == "pgm" and arr.ndim == 3:
                arr = arr[:, :, 0]
            payload[name] = base64.b64encode(encode(arr)).decode("ascii")
        return JSONResponse({"revision": revision, "layers": payload},
                            headers={"X-Scene-Revision": str(revision)})

    return app
