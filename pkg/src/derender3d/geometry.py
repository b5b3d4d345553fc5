"""Rotation, camera, and translation-reparametrization primitives.

Conventions used throughout the package:

* Camera frame: +x right, +y down (image convention), +z forward.
  The camera sits at the origin looking along +z.
* Yaw is a right-handed rotation about the camera +y axis.
* All geometry is float64.
* "Ray distance" t is the Euclidean distance from the camera origin to the
  object's 3D center, measured along the viewing ray through the center's
  image-plane projection (not optical-axis depth).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

_UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion (w, x, y, z). Normalized on construction."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if n < 1e-12:
            raise ValueError("cannot normalize a near-zero quaternion")
        object.__setattr__(self, "w", self.w / n)
        object.__setattr__(self, "x", self.x / n)
        object.__setattr__(self, "y", self.y / n)
        object.__setattr__(self, "z", self.z / n)

    @property
    def components(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    def norm(self) -> float:
        return float(np.linalg.norm(self.components))

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def compose(self, other: "Quaternion") -> "Quaternion":
        """Hamilton product self * other (apply `other` first)."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def dot(self, other: "Quaternion") -> float:
        return float(np.dot(self.components, other.components))

    def same_rotation(self, other: "Quaternion", tol: float = 1e-9) -> bool:
        """Equality respecting the q / -q double cover."""
        return bool(min(np.linalg.norm(self.components - other.components),
                        np.linalg.norm(self.components + other.components)) < tol)


@dataclass(frozen=True)
class YawAngle:
    """Single rotational degree of freedom about the camera +y axis.

    Wraps modulo 2*pi into [0, 2*pi).
    """

    theta: float

    def __post_init__(self):
        t = self.theta % TWO_PI
        if t >= TWO_PI:  # guard against float wrap at exactly 2*pi
            t = 0.0
        object.__setattr__(self, "theta", t)

    def to_quaternion(self) -> Quaternion:
        return yaw_to_quaternion(self)

    @staticmethod
    def from_quaternion(q: Quaternion) -> "YawAngle":
        """Inverse of yaw_to_quaternion for rotations about +y."""
        return YawAngle(2.0 * math.atan2(q.y, q.w))

    def add(self, delta: float) -> "YawAngle":
        return YawAngle(self.theta + delta)


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics. Pixel (r, c) has its center at (c + 0.5, r + 0.5)."""

    focal_x: float
    focal_y: float
    principal_x: float
    principal_y: float
    width: int
    height: int
    near_plane: float = 0.1

    def __post_init__(self):
        if self.focal_x <= 0 or self.focal_y <= 0:
            raise ValueError("focal lengths must be positive")
        if self.near_plane <= 0:
            raise ValueError("near_plane must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    def ray_direction(self, pixel_x: float, pixel_y: float) -> np.ndarray:
        """Unit direction of the viewing ray through an image point."""
        r = np.array(
            [
                (pixel_x - self.principal_x) / self.focal_x,
                (pixel_y - self.principal_y) / self.focal_y,
                1.0,
            ],
            dtype=np.float64,
        )
        d = r / np.linalg.norm(r)
        if d[2] <= 0.0:
            raise ValueError("pixel maps to a ray with non-positive z")
        return d


# Presets matching the package's default processing resolutions.
CAMERA_PRESETS = {
    "624x192": Camera(360.0, 360.0, 312.0, 96.0, 624, 192, 0.5),
    "512x256": Camera(560.0, 560.0, 256.0, 128.0, 512, 256, 0.5),
}


def yaw_to_quaternion(yaw: YawAngle) -> Quaternion:
    """Rotation about the camera +y axis by yaw.theta (right-handed)."""
    half = 0.5 * yaw.theta
    return Quaternion(math.cos(half), 0.0, math.sin(half), 0.0)


def rotate_point(q: Quaternion, p) -> np.ndarray:
    """Rotate a 3-vector by a unit quaternion via q * (0, p) * conj(q)."""
    if abs(q.norm() - 1.0) > _UNIT_NORM_TOL:
        raise ValueError("rotate_point requires a unit quaternion")
    p = np.asarray(p, dtype=np.float64)
    w, x, y, z = q.w, q.x, q.y, q.z
    # (0, p) promoted to a quaternion; two Hamilton products, vector part out.
    uw = -x * p[0] - y * p[1] - z * p[2]
    ux = w * p[0] + y * p[2] - z * p[1]
    uy = w * p[1] - x * p[2] + z * p[0]
    uz = w * p[2] + x * p[1] - y * p[0]
    return np.array(
        [
            -uw * x + ux * w - uy * z + uz * y,
            -uw * y + ux * z + uy * w - uz * x,
            -uw * z - ux * y + uy * x + uz * w,
        ],
        dtype=np.float64,
    )


def quaternion_to_matrix(q: Quaternion) -> np.ndarray:
    """Standard 3x3 rotation matrix of a unit quaternion."""
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def yaw_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]], dtype=np.float64)


def yaw_matrix_derivative(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]], dtype=np.float64)


def quaternion_matrix_derivatives(q: Quaternion) -> np.ndarray:
    """d(rotation matrix)/d(w, x, y, z) at a unit quaternion, shape (4, 3, 3).

    Derivatives of the unnormalized matrix form; callers renormalize the
    quaternion after each optimizer step instead of projecting the gradient.
    """
    w, x, y, z = q.w, q.x, q.y, q.z
    d = np.zeros((4, 3, 3), dtype=np.float64)
    d[0] = 2 * np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]], dtype=np.float64)
    d[1] = 2 * np.array([[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]], dtype=np.float64)
    d[2] = 2 * np.array([[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]], dtype=np.float64)
    d[3] = 2 * np.array([[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]], dtype=np.float64)
    return d


@dataclass(frozen=True)
class ReparamCode:
    """Box-relative center offset and log normalized distance."""

    offset_e: tuple[float, float]
    log_tau: float

    def __post_init__(self):
        if not (math.isfinite(self.offset_e[0]) and math.isfinite(self.offset_e[1])
                and math.isfinite(self.log_tau)):
            raise ValueError("reparametrization code must be finite")


@dataclass(frozen=True)
class ObjectState:
    """Full geometric code of one object.

    bbox is the detection box (center_x, center_y, w, h) in pixels; it is used
    only to convert between (center_2d, ray_distance) and ReparamCode.
    """

    mesh_index: int
    ffd: "FFDLattice"
    scale: tuple[float, float, float]
    yaw: YawAngle
    center_2d: tuple[float, float]
    ray_distance: float
    bbox: tuple[float, float, float, float]

    def __post_init__(self):
        if self.ray_distance <= 0:
            raise ValueError("ray_distance must be positive")
        if any(s <= 0 for s in self.scale):
            raise ValueError("scale components must be positive")
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValueError("bbox width and height must be positive")

    def replace(self, **kw) -> "ObjectState":
        from dataclasses import replace

        return replace(self, **kw)


def reparam_encode(state: ObjectState) -> ReparamCode:
    """(center_2d, ray_distance) -> (offset e, log normalized distance)."""
    bx, by, w, h = state.bbox
    ex = (state.center_2d[0] - bx) / w
    ey = (state.center_2d[1] - by) / h
    log_tau = math.log(state.ray_distance * math.sqrt(w * h))
    return ReparamCode((ex, ey), log_tau)


def reparam_decode(code: ReparamCode, bbox) -> tuple[tuple[float, float], float]:
    """Exact algebraic inverse of reparam_encode."""
    bx, by, w, h = bbox
    if w <= 0 or h <= 0:
        raise ValueError("bbox width and height must be positive")
    center = (bx + code.offset_e[0] * w, by + code.offset_e[1] * h)
    ray_distance = math.exp(code.log_tau) / math.sqrt(w * h)
    return center, ray_distance


def translation_vector(state: ObjectState, camera: Camera) -> np.ndarray:
    """3D center position: ray_distance along the viewing ray through center_2d."""
    if state.ray_distance <= 0:
        raise ValueError("ray_distance must be positive")
    d = camera.ray_direction(state.center_2d[0], state.center_2d[1])
    return state.ray_distance * d


def project_points(points, camera: Camera) -> np.ndarray:
    """Pinhole projection of camera-frame points to pixel coordinates.

    Raises ValueError naming the first offending index if any z <= near_plane.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    bad = np.nonzero(pts[:, 2] <= camera.near_plane)[0]
    if bad.size:
        raise ValueError(f"point {int(bad[0])} is at or behind the near plane")
    out = np.empty((pts.shape[0], 2), dtype=np.float64)
    out[:, 0] = camera.focal_x * pts[:, 0] / pts[:, 2] + camera.principal_x
    out[:, 1] = camera.focal_y * pts[:, 1] / pts[:, 2] + camera.principal_y
    return out


def pose_mesh(mesh, state: ObjectState, camera: Camera):
    """FFD -> per-axis scale -> yaw rotation -> translation, into camera frame."""
    from .ffd import ffd_apply

    deformed = ffd_apply(mesh, state.ffd)
    v = deformed.vertices * np.asarray(state.scale, dtype=np.float64)
    r = yaw_matrix(state.yaw.theta)
    v = v @ r.T
    v = v + translation_vector(state, camera)
    return deformed.with_vertices(v)
