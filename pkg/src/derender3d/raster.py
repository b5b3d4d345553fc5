"""Soft differentiable silhouette rendering and hard multi-layer rasterization.

The soft rasterizer aggregates per-triangle occupancy probabilities:

    coverage(p) = 1 - prod_T (1 - sigmoid(d_T(p) / gamma))

where d_T(p) is the signed 2D distance (pixels, positive inside) from the
pixel center to the projected triangle boundary. Coverage is continuous and
differentiable in every vertex position, and the gradient here is analytic,
not an approximation. Terms farther than tail_sigmas * gamma outside a
triangle are truncated to zero occupancy.

Triangles with any vertex at or behind the near plane are dropped rather than
clipped; objects in this domain sit wholly in front of the camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import Camera, YawAngle
from .meshes import Mesh

POSE_BINS = 24


class BehindCameraError(ValueError):
    """No renderable triangle is in front of the near plane."""


@dataclass(frozen=True)
class SilhouetteImage:
    """Per-pixel coverage in [0, 1], row-major (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("silhouette values must be a 2D array")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RenderLayers:
    """Joint hard rasterization output.

    instance: object id per pixel, 0 at background.
    depth: ray distance per pixel, +inf at background.
    normal: camera-facing unit face normal, zero at background.
    pose_bins: yaw quantized into 24 bins, -1 at background.
    """

    instance: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    pose_bins: np.ndarray


@dataclass(frozen=True)
class SoftRasterConfig:
    """Softness length scale (pixels), binarization cutoff, and the distance
    (in units of gamma) beyond which coverage terms are truncated to zero."""

    sharpness_gamma: float = 1.0
    hard_threshold: float = 0.5
    tail_sigmas: float = 34.0

    def __post_init__(self):
        if self.sharpness_gamma <= 0:
            raise ValueError("sharpness_gamma must be positive")
        if self.tail_sigmas <= 0:
            raise ValueError("tail_sigmas must be positive")


@njit(cache=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _edge_distance2(p0x, p0y, p1x, p1y, px, py):
    """Squared point-segment distance plus the clamped parameter and offset."""
    ex = p1x - p0x
    ey = p1y - p0y
    wx = px - p0x
    wy = py - p0y
    ee = ex * ex + ey * ey
    if ee > 0.0:
        s = (wx * ex + wy * ey) / ee
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
    else:
        s = 0.0
    ox = wx - s * ex
    oy = wy - s * ey
    return ox * ox + oy * oy, s, ox, oy


@njit(cache=True)
def _signed_distance(ax, ay, bx, by, cx, cy, px, py):
    """Signed distance to the triangle boundary (positive inside) plus the
    nearest edge index, its parameter, and the offset to the closest point."""
    d0, s0, ox0, oy0 = _edge_distance2(ax, ay, bx, by, px, py)
    d1, s1, ox1, oy1 = _edge_distance2(bx, by, cx, cy, px, py)
    d2, s2, ox2, oy2 = _edge_distance2(cx, cy, ax, ay, px, py)
    if d0 <= d1 and d0 <= d2:
        edge, dd, s, ox, oy = 0, d0, s0, ox0, oy0
    elif d1 <= d2:
        edge, dd, s, ox, oy = 1, d1, s1, ox1, oy1
    else:
        edge, dd, s, ox, oy = 2, d2, s2, ox2, oy2
    c0 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    c1 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    c2 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    inside = (c0 >= 0.0 and c1 >= 0.0 and c2 >= 0.0) or (
        c0 <= 0.0 and c1 <= 0.0 and c2 <= 0.0
    )
    dist = math.sqrt(dd)
    if inside:
        return dist, edge, s, ox, oy
    return -dist, edge, s, ox, oy


@njit(cache=True)
def _tri_window(tri2d, t, margin, x0, y0, w, h):
    lox = tri2d[t, 0, 0]
    hix = lox
    loy = tri2d[t, 0, 1]
    hiy = loy
    for k in range(1, 3):
        if tri2d[t, k, 0] < lox:
            lox = tri2d[t, k, 0]
        if tri2d[t, k, 0] > hix:
            hix = tri2d[t, k, 0]
        if tri2d[t, k, 1] < loy:
            loy = tri2d[t, k, 1]
        if tri2d[t, k, 1] > hiy:
            hiy = tri2d[t, k, 1]
    ix0 = int(math.floor(lox - margin - 0.5)) - x0
    ix1 = int(math.ceil(hix + margin - 0.5)) - x0
    iy0 = int(math.floor(loy - margin - 0.5)) - y0
    iy1 = int(math.ceil(hiy + margin - 0.5)) - y0
    if ix0 < 0:
        ix0 = 0
    if iy0 < 0:
        iy0 = 0
    if ix1 > w - 1:
        ix1 = w - 1
    if iy1 > h - 1:
        iy1 = h - 1
    return ix0, ix1, iy0, iy1


@njit(cache=True)
def _forward_kernel(tri2d, gamma, margin, x0, y0, prod, prod_nz, zero_count):
    h, w = prod.shape
    for t in range(tri2d.shape[0]):
        ix0, ix1, iy0, iy1 = _tri_window(tri2d, t, margin, x0, y0, w, h)
        for iy in range(iy0, iy1 + 1):
            py = y0 + iy + 0.5
            for ix in range(ix0, ix1 + 1):
                px = x0 + ix + 0.5
                d, _, _, _, _ = _signed_distance(
                    tri2d[t, 0, 0], tri2d[t, 0, 1], tri2d[t, 1, 0], tri2d[t, 1, 1],
                    tri2d[t, 2, 0], tri2d[t, 2, 1], px, py,
                )
                if d <= -margin:
                    continue
                om = 1.0 - _sigmoid(d / gamma)
                prod[iy, ix] *= om
                if om == 0.0:
                    zero_count[iy, ix] += 1
                else:
                    prod_nz[iy, ix] *= om


@njit(cache=True)
def _backward_kernel(tri2d, tris, gamma, margin, x0, y0, prod_nz, zero_count,
                     d_loss, grad2d):
    h, w = d_loss.shape
    for t in range(tri2d.shape[0]):
        ix0, ix1, iy0, iy1 = _tri_window(tri2d, t, margin, x0, y0, w, h)
        for iy in range(iy0, iy1 + 1):
            py = y0 + iy + 0.5
            for ix in range(ix0, ix1 + 1):
                dl = d_loss[iy, ix]
                if dl == 0.0:
                    continue
                px = x0 + ix + 0.5
                d, edge, s, ox, oy = _signed_distance(
                    tri2d[t, 0, 0], tri2d[t, 0, 1], tri2d[t, 1, 0], tri2d[t, 1, 1],
                    tri2d[t, 2, 0], tri2d[t, 2, 1], px, py,
                )
                if d <= -margin:
                    continue
                sg = _sigmoid(d / gamma)
                om = 1.0 - sg
                zc = zero_count[iy, ix]
                if om == 0.0:
                    q = prod_nz[iy, ix] if zc == 1 else 0.0
                else:
                    q = prod_nz[iy, ix] / om if zc == 0 else 0.0
                if q == 0.0:
                    continue
                dist = abs(d)
                if dist <= 1e-12:
                    continue
                # dC/dd = sigma (1 - sigma) prod_{T' != T}(1 - sigma') / gamma;
                # d dist/dP0 = -(1-s) u, d dist/dP1 = -s u with u the unit
                # offset from the closest boundary point (envelope theorem).
                coef = dl * sg * om * q / gamma
                sign = 1.0 if d > 0.0 else -1.0
                wgt = sign * coef
                ux = ox / dist
                uy = oy / dist
                i0 = tris[t, edge]
                i1 = tris[t, (edge + 1) % 3]
                grad2d[i0, 0] -= wgt * (1.0 - s) * ux
                grad2d[i0, 1] -= wgt * (1.0 - s) * uy
                grad2d[i1, 0] -= wgt * s * ux
                grad2d[i1, 1] -= wgt * s * uy


def _project_mesh(mesh: Mesh, camera: Camera):
    """Project vertices and keep triangles wholly in front of the near plane."""
    v = mesh.vertices
    in_front = v[:, 2] > camera.near_plane
    keep = in_front[mesh.triangles].all(axis=1)
    tris = np.ascontiguousarray(mesh.triangles[keep])
    if tris.shape[0] == 0:
        raise BehindCameraError("object behind camera")
    proj = np.zeros((v.shape[0], 2))
    z = v[in_front, 2]
    proj[in_front, 0] = camera.focal_x * v[in_front, 0] / z + camera.principal_x
    proj[in_front, 1] = camera.focal_y * v[in_front, 1] / z + camera.principal_y
    return proj, tris, in_front


class _SoftTerms:
    """Shared forward state for coverage and its gradient."""

    def __init__(self, mesh: Mesh, camera: Camera, cfg: SoftRasterConfig):
        self.camera = camera
        self.cfg = cfg
        self.proj, self.tris, _ = _project_mesh(mesh, camera)
        self.verts3d = mesh.vertices
        self.n_verts = mesh.vertices.shape[0]
        self.margin = cfg.sharpness_gamma * cfg.tail_sigmas
        used = np.unique(self.tris)
        lo = self.proj[used].min(axis=0) - self.margin
        hi = self.proj[used].max(axis=0) + self.margin
        self.x0 = max(0, int(math.floor(lo[0] - 0.5)))
        self.y0 = max(0, int(math.floor(lo[1] - 0.5)))
        x1 = min(camera.width, int(math.ceil(hi[0] - 0.5)) + 1)
        y1 = min(camera.height, int(math.ceil(hi[1] - 0.5)) + 1)
        self.w = x1 - self.x0
        self.h = y1 - self.y0
        self.empty = self.w <= 0 or self.h <= 0
        if self.empty:
            return
        self.tri2d = np.ascontiguousarray(self.proj[self.tris])
        self.prod = np.ones((self.h, self.w))
        self.prod_nz = np.ones((self.h, self.w))
        self.zero_count = np.zeros((self.h, self.w), dtype=np.int64)
        _forward_kernel(self.tri2d, cfg.sharpness_gamma, self.margin,
                        self.x0, self.y0, self.prod, self.prod_nz, self.zero_count)

    def coverage_image(self) -> np.ndarray:
        out = np.zeros((self.camera.height, self.camera.width))
        if not self.empty:
            out[self.y0:self.y0 + self.h, self.x0:self.x0 + self.w] = 1.0 - self.prod
        return out

    def backward(self, d_loss_roi: np.ndarray) -> np.ndarray:
        """Per-vertex 3D gradient given dL/dcoverage over the ROI window."""
        grad3d = np.zeros((self.n_verts, 3))
        if self.empty:
            return grad3d
        grad2d = np.zeros((self.n_verts, 2))
        _backward_kernel(self.tri2d, self.tris, self.cfg.sharpness_gamma,
                         self.margin, self.x0, self.y0, self.prod_nz,
                         self.zero_count, np.ascontiguousarray(d_loss_roi), grad2d)
        v = self.verts3d
        touched = np.unique(self.tris)
        z = v[touched, 2]
        fx, fy = self.camera.focal_x, self.camera.focal_y
        grad3d[touched, 0] = grad2d[touched, 0] * fx / z
        grad3d[touched, 1] = grad2d[touched, 1] * fy / z
        grad3d[touched, 2] = -(
            grad2d[touched, 0] * fx * v[touched, 0]
            + grad2d[touched, 1] * fy * v[touched, 1]
        ) / (z * z)
        return grad3d


def render_silhouette_soft(mesh: Mesh, camera: Camera,
                           cfg: SoftRasterConfig = SoftRasterConfig()) -> SilhouetteImage:
    """Soft, differentiable coverage of the posed mesh."""
    return SilhouetteImage(_SoftTerms(mesh, camera, cfg).coverage_image())


def masked_l1(rendered: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    n = int(mask.sum())
    if n == 0:
        return 0.0
    return float(np.abs(rendered - target)[mask].sum() / n)


def silhouette_loss_and_gradient(
    mesh: Mesh,
    camera: Camera,
    cfg: SoftRasterConfig,
    target: SilhouetteImage,
    valid_mask: np.ndarray,
):
    """Masked mean-absolute silhouette loss and its per-vertex 3D gradient.

    Returns (loss, gradient (n_verts, 3), coverage image).
    """
    tgt = target.values
    if tgt.shape != (camera.height, camera.width):
        raise ValueError("target dimensions do not match the camera")
    mask = np.asarray(valid_mask, dtype=bool)
    if mask.shape != tgt.shape:
        raise ValueError("mask dimensions do not match the target")

    terms = _SoftTerms(mesh, camera, cfg)
    cov_img = terms.coverage_image()
    if int(mask.sum()) == 0:
        return 0.0, np.zeros((terms.n_verts, 3)), cov_img

    loss = masked_l1(cov_img, tgt, mask)
    if terms.empty:
        return loss, np.zeros((terms.n_verts, 3)), cov_img

    roi = np.s_[terms.y0:terms.y0 + terms.h, terms.x0:terms.x0 + terms.w]
    diff = cov_img[roi] - tgt[roi]
    n_valid = int(mask.sum())
    d_loss = np.sign(diff) * mask[roi] / n_valid
    return loss, terms.backward(d_loss), cov_img


def silhouette_gradient(
    mesh: Mesh,
    camera: Camera,
    cfg: SoftRasterConfig,
    target: SilhouetteImage,
    valid_mask: np.ndarray,
) -> np.ndarray:
    """Gradient of the masked reprojection loss w.r.t. every vertex coordinate."""
    _, grad, _ = silhouette_loss_and_gradient(mesh, camera, cfg, target, valid_mask)
    return grad


def binarize(soft: SilhouetteImage,
             cfg: SoftRasterConfig = SoftRasterConfig()) -> SilhouetteImage:
    """Threshold coverage at cfg.hard_threshold."""
    return SilhouetteImage((soft.values >= cfg.hard_threshold).astype(np.float64))


def yaw_bin(yaw: YawAngle) -> int:
    return min(int(yaw.theta // (2.0 * math.pi / POSE_BINS)), POSE_BINS - 1)


@njit(cache=True)
def _hard_kernel(verts, tris, ok_tris, fx, fy, cx, cy, near, object_id, pbin,
                 instance, depth, normal, pose):
    h, w = depth.shape
    for t in range(tris.shape[0]):
        if not ok_tris[t]:
            continue
        a = verts[tris[t, 0]]
        b = verts[tris[t, 1]]
        c = verts[tris[t, 2]]
        pax = fx * a[0] / a[2] + cx
        pay = fy * a[1] / a[2] + cy
        pbx = fx * b[0] / b[2] + cx
        pby = fy * b[1] / b[2] + cy
        pcx = fx * c[0] / c[2] + cx
        pcy = fy * c[1] / c[2] + cy
        area = (pbx - pax) * (pcy - pay) - (pby - pay) * (pcx - pax)
        if area == 0.0:
            continue
        n0 = (b[1] - a[1]) * (c[2] - a[2]) - (b[2] - a[2]) * (c[1] - a[1])
        n1 = (b[2] - a[2]) * (c[0] - a[0]) - (b[0] - a[0]) * (c[2] - a[2])
        n2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        nlen = math.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
        if nlen == 0.0:
            continue
        na = n0 * a[0] + n1 * a[1] + n2 * a[2]
        lox = min(pax, min(pbx, pcx))
        hix = max(pax, max(pbx, pcx))
        loy = min(pay, min(pby, pcy))
        hiy = max(pay, max(pby, pcy))
        x0 = max(0, int(math.ceil(lox - 0.5)))
        x1 = min(w - 1, int(math.floor(hix - 0.5)))
        y0 = max(0, int(math.ceil(loy - 0.5)))
        y1 = min(h - 1, int(math.floor(hiy - 0.5)))
        for iy in range(y0, y1 + 1):
            py = iy + 0.5
            for ix in range(x0, x1 + 1):
                px = ix + 0.5
                w0 = (pcx - pbx) * (py - pby) - (pcy - pby) * (px - pbx)
                w1 = (pax - pcx) * (py - pcy) - (pay - pcy) * (px - pcx)
                w2 = (pbx - pax) * (py - pay) - (pby - pay) * (px - pax)
                if area > 0.0:
                    if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                        continue
                else:
                    if w0 > 0.0 or w1 > 0.0 or w2 > 0.0:
                        continue
                rx = (px - cx) / fx
                ry = (py - cy) / fy
                denom = n0 * rx + n1 * ry + n2
                if denom == 0.0:
                    continue
                lam = na / denom
                if lam <= near:
                    continue
                dist = lam * math.sqrt(rx * rx + ry * ry + 1.0)
                if dist < depth[iy, ix]:
                    depth[iy, ix] = dist
                    instance[iy, ix] = object_id
                    pose[iy, ix] = pbin
                    if n0 * rx + n1 * ry + n2 > 0.0:
                        normal[iy, ix, 0] = -n0 / nlen
                        normal[iy, ix, 1] = -n1 / nlen
                        normal[iy, ix, 2] = -n2 / nlen
                    else:
                        normal[iy, ix, 0] = n0 / nlen
                        normal[iy, ix, 1] = n1 / nlen
                        normal[iy, ix, 2] = n2 / nlen


def render_hard(scene_meshes, camera: Camera) -> RenderLayers:
    """Z-buffered joint rasterization of (object_id, posed mesh, yaw) triples.

    Nearest triangle (by ray distance) wins per pixel; degenerate projected
    triangles are skipped silently.
    """
    if not scene_meshes:
        raise ValueError("render_hard requires a non-empty object list")
    h, w = camera.height, camera.width
    instance = np.zeros((h, w), dtype=np.int32)
    depth = np.full((h, w), np.inf)
    normal = np.zeros((h, w, 3))
    pose = np.full((h, w), -1, dtype=np.int32)
    for object_id, mesh, yaw in scene_meshes:
        v = np.ascontiguousarray(mesh.vertices)
        in_front = v[:, 2] > camera.near_plane
        ok = in_front[mesh.triangles].all(axis=1)
        _hard_kernel(v, np.ascontiguousarray(mesh.triangles), ok,
                     camera.focal_x, camera.focal_y,
                     camera.principal_x, camera.principal_y, camera.near_plane,
                     int(object_id), yaw_bin(yaw), instance, depth, normal, pose)
    return RenderLayers(instance, depth, normal, pose)
