"""Triangle meshes, minimal OBJ I/O, and the indexed mesh library."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh with rest-pose vertices in a canonical unit frame.

    bbox_min/bbox_max describe the rest bounding box used to anchor the FFD
    lattice; deformed copies keep the rest box of the mesh they came from.
    Deformation requires strictly positive extent on every axis (enforced at
    lattice evaluation); rendering accepts flat meshes.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    bbox_min: np.ndarray = field(default=None)  # type: ignore[assignment]
    bbox_max: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles, dtype=np.int64)
        if t.ndim != 2 or t.shape[1] != 3 or t.shape[0] == 0:
            raise ValueError("triangle list must be non-empty with 3 indices each")
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be an (n, 3) array")
        if t.min() < 0 or t.max() >= v.shape[0]:
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.bbox_min is None or self.bbox_max is None:
            object.__setattr__(self, "bbox_min", v.min(axis=0))
            object.__setattr__(self, "bbox_max", v.max(axis=0))
        else:
            object.__setattr__(self, "bbox_min", np.asarray(self.bbox_min, dtype=np.float64))
            object.__setattr__(self, "bbox_max", np.asarray(self.bbox_max, dtype=np.float64))

    @property
    def bbox_rest(self) -> tuple[np.ndarray, np.ndarray]:
        return self.bbox_min, self.bbox_max

    def with_vertices(self, vertices: np.ndarray, keep_rest_bbox: bool = False) -> "Mesh":
        if keep_rest_bbox:
            return Mesh(vertices, self.triangles, self.bbox_min, self.bbox_max)
        return Mesh(vertices, self.triangles)

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def load_obj(path) -> Mesh:
    """Parse the minimal OBJ subset: `v x y z` and `f i j k` (1-based triangles).

    Unknown directives are skipped; each distinct one logs a warning once.
    """
    vertices: list[list[float]] = []
    triangles: list[list[int]] = []
    warned: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: vertex needs 3 coordinates")
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif tag == "f":
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: only triangle faces are supported")
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:4]]
                triangles.append(idx)
            else:
                if tag not in warned:
                    warned.add(tag)
                    log.warning("%s: ignoring unsupported OBJ directive %r", path, tag)
    return Mesh(np.asarray(vertices), np.asarray(triangles))


def save_obj(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


MANIFEST_NAME = "manifest.txt"


@dataclass(frozen=True)
class MeshLibrary:
    """Ordered set of candidate meshes; index order comes from the manifest."""

    names: tuple[str, ...]
    meshes: tuple[Mesh, ...]

    def __len__(self) -> int:
        return len(self.meshes)

    def __getitem__(self, index: int) -> Mesh:
        return self.meshes[index]


def load_mesh_library(directory) -> MeshLibrary:
    """Load `<name>.obj` files in the order listed by manifest.txt."""
    directory = resolve_library_path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.exists():
        raise FileNotFoundError(f"mesh library manifest not found: {manifest}")
    names = [ln.strip() for ln in manifest.read_text(encoding="utf-8").splitlines() if ln.strip()]
    meshes = [load_obj(directory / f"{name}.obj") for name in names]
    if not meshes:
        raise ValueError(f"mesh library at {directory} is empty")
    return MeshLibrary(tuple(names), tuple(meshes))


def save_mesh_library(library: MeshLibrary, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, mesh in zip(library.names, library.meshes):
        save_obj(mesh, directory / f"{name}.obj")
    (directory / MANIFEST_NAME).write_text("\n".join(library.names) + "\n", encoding="utf-8")


def builtin_library_path() -> Path:
    return Path(__file__).resolve().parent / "data" / "meshlib"


def resolve_library_path(path) -> Path:
    """Resolve a scene file's mesh_lib reference; "builtin" names the packaged set."""
    if str(path) == "builtin":
        return builtin_library_path()
    return Path(path)
