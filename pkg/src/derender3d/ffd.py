"""Free-form deformation on a 4x4x4 trilinear Bernstein lattice.

The lattice is anchored to the rest bounding box of the undeformed mesh and
stores displacement offsets from the regular rest grid, so the all-zero
lattice is exactly the identity. Grid entries are indexed (i, j, k) with
i along x, j along y, k along z; the flat order puts i fastest:
flat = i + 4*j + 16*k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRID = 4
_COORD_TOL = 1e-9


@dataclass(frozen=True)
class FFDLattice:
    """Offsets of the 4x4x4 control grid, shape (4, 4, 4, 3), axes (i, j, k)."""

    offsets: np.ndarray = field(default_factory=lambda: np.zeros((GRID, GRID, GRID, 3)))

    def __post_init__(self):
        arr = np.asarray(self.offsets, dtype=np.float64)
        if arr.shape != (GRID, GRID, GRID, 3):
            raise ValueError(f"offsets must have shape (4, 4, 4, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("offsets must be finite")
        object.__setattr__(self, "offsets", arr)

    @staticmethod
    def identity() -> "FFDLattice":
        return FFDLattice(np.zeros((GRID, GRID, GRID, 3)))

    def is_identity(self) -> bool:
        return bool(np.all(self.offsets == 0.0))

    def to_flat(self) -> np.ndarray:
        """Flatten with i fastest, then j, then k; 3 floats (x, y, z) per entry."""
        return self.offsets.transpose(2, 1, 0, 3).reshape(-1)

    @staticmethod
    def from_flat(flat) -> "FFDLattice":
        arr = np.asarray(flat, dtype=np.float64)
        if arr.size != GRID**3 * 3:
            raise ValueError(f"expected {GRID ** 3 * 3} values, got {arr.size}")
        return FFDLattice(arr.reshape(GRID, GRID, GRID, 3).transpose(2, 1, 0, 3))


def bernstein3(u: np.ndarray) -> np.ndarray:
    """Degree-3 Bernstein basis, shape (..., 4). Partition of unity by construction."""
    u = np.asarray(u, dtype=np.float64)
    v = 1.0 - u
    return np.stack([v**3, 3.0 * u * v**2, 3.0 * u**2 * v, u**3], axis=-1)


def lattice_weights(vertices: np.ndarray, bbox_min: np.ndarray, bbox_max: np.ndarray) -> np.ndarray:
    """Per-vertex basis weights over the rest lattice, shape (n, 4, 4, 4).

    Vertices must lie inside the rest bounding box up to a 1e-9 tolerance on
    the normalized coordinates; the lattice covers that box exactly.
    """
    extent = bbox_max - bbox_min
    if np.any(extent <= 0):
        raise ValueError("rest bounding box must have positive extent on each axis")
    uvw = (np.asarray(vertices, dtype=np.float64) - bbox_min) / extent
    if np.any(uvw < -_COORD_TOL) or np.any(uvw > 1.0 + _COORD_TOL):
        bad = int(np.nonzero((uvw < -_COORD_TOL) | (uvw > 1.0 + _COORD_TOL))[0][0])
        raise ValueError(f"vertex {bad} lies outside the rest lattice")
    uvw = np.clip(uvw, 0.0, 1.0)
    bu = bernstein3(uvw[:, 0])
    bv = bernstein3(uvw[:, 1])
    bw = bernstein3(uvw[:, 2])
    return np.einsum("ni,nj,nk->nijk", bu, bv, bw)


def ffd_apply(mesh, lattice: FFDLattice):
    """Deform a mesh by the lattice; topology is unchanged.

    By linear precision of the Bernstein basis the rest grid reproduces each
    vertex exactly, so the deformation reduces to adding the weighted offsets.
    """
    w = lattice_weights(mesh.vertices, mesh.bbox_min, mesh.bbox_max)
    displaced = mesh.vertices + np.einsum("nijk,ijkc->nc", w, lattice.offsets)
    return mesh.with_vertices(displaced, keep_rest_bbox=True)
