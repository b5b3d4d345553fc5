"""Procedural low-poly vehicle meshes for the default eight-entry library.

Each shape is an extruded side profile: a flat underside plus a polyline of
roof heights over length stations, mirrored across the width axis. Canonical
frame: +z along the vehicle length (facing +z at yaw 0), -y up (camera frame
has +y down), +x across the width. Meshes are normalized so the longest
bounding-box axis spans exactly 1 and the box is centered at the origin.
"""

from __future__ import annotations

import sys

import numpy as np

from .meshes import Mesh, MeshLibrary, save_mesh_library

# name -> (length m, width m, stations): stations are (fraction along length,
# roof height m). Proportions are loosely based on common vehicle classes and
# chosen so the eight silhouettes are mutually distinctive.
_PROFILES: dict[str, tuple[float, float, list[tuple[float, float]]]] = {
    "sedan": (4.6, 1.82, [(0.0, 0.55), (0.08, 0.62), (0.30, 0.68), (0.42, 1.05),
                          (0.52, 1.16), (0.72, 1.14), (0.86, 0.72), (1.0, 0.60)]),
    "hatchback": (3.9, 1.74, [(0.0, 0.55), (0.10, 0.66), (0.32, 0.74), (0.46, 1.18),
                              (0.62, 1.24), (0.88, 1.10), (1.0, 0.62)]),
    "van": (5.0, 1.95, [(0.0, 0.70), (0.06, 1.10), (0.16, 1.86), (0.88, 1.90),
                        (1.0, 1.78)]),
    "bus": (10.5, 2.50, [(0.0, 2.70), (0.04, 2.95), (0.50, 2.98), (0.96, 2.95),
                         (1.0, 2.60)]),
    "pickup": (5.3, 1.90, [(0.0, 0.60), (0.10, 0.78), (0.30, 0.84), (0.38, 1.30),
                           (0.54, 1.32), (0.56, 0.78), (0.98, 0.76), (1.0, 0.72)]),
    "sports": (4.4, 1.85, [(0.0, 0.30), (0.20, 0.52), (0.40, 0.56), (0.52, 0.92),
                           (0.70, 0.96), (0.92, 0.66), (1.0, 0.52)]),
    "suv": (4.7, 1.90, [(0.0, 0.68), (0.10, 0.82), (0.26, 0.92), (0.38, 1.42),
                        (0.90, 1.46), (1.0, 1.10)]),
    "jeep": (3.6, 1.75, [(0.0, 0.80), (0.28, 0.86), (0.34, 1.50), (0.94, 1.52),
                         (1.0, 1.12)]),
}

DEFAULT_NAMES = tuple(_PROFILES)


def _extrude_profile(length: float, width: float,
                     stations: list[tuple[float, float]]) -> Mesh:
    n = len(stations)
    ls = np.array([s[0] for s in stations]) * length
    hs = np.array([s[1] for s in stations])
    hw = width / 2.0

    verts = []
    for x in (hw, -hw):
        for li in ls:  # bottom ring
            verts.append((x, 0.0, li))
        for li, hi in zip(ls, hs):  # roof ring
            verts.append((x, -hi, li))
    verts = np.array(verts, dtype=np.float64)

    def bot(side: int, i: int) -> int:
        return side * 2 * n + i

    def top(side: int, i: int) -> int:
        return side * 2 * n + n + i

    tris: list[tuple[int, int, int]] = []
    for side in (0, 1):  # side caps as vertical trapezoid strips
        for i in range(n - 1):
            tris.append((bot(side, i), bot(side, i + 1), top(side, i + 1)))
            tris.append((bot(side, i), top(side, i + 1), top(side, i)))
    for i in range(n - 1):  # underside and roof
        tris.append((bot(0, i), bot(1, i), bot(1, i + 1)))
        tris.append((bot(0, i), bot(1, i + 1), bot(0, i + 1)))
        tris.append((top(0, i), top(1, i), top(1, i + 1)))
        tris.append((top(0, i), top(1, i + 1), top(0, i + 1)))
    for i in (0, n - 1):  # front and rear walls
        tris.append((bot(0, i), bot(1, i), top(1, i)))
        tris.append((bot(0, i), top(1, i), top(0, i)))

    lo, hi_ = verts.min(axis=0), verts.max(axis=0)
    verts = (verts - (lo + hi_) / 2.0) / (hi_ - lo).max()
    return Mesh(verts, np.array(tris, dtype=np.int64))


def build_default_library() -> MeshLibrary:
    """The packaged eight-candidate mesh set, built in manifest order."""
    meshes = tuple(_extrude_profile(*_PROFILES[name]) for name in DEFAULT_NAMES)
    return MeshLibrary(DEFAULT_NAMES, meshes)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m derender3d.shapes <output-directory>", file=sys.stderr)
        return 2
    save_mesh_library(build_default_library(), argv[0])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
