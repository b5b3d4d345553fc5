"""Raster file formats: 8-bit PGM/PNG and the float-plane binary container.

Float layers (depth, normals) use a 16-byte header (magic "D3DR", then
little-endian u32 width, height, channels) followed by planar (channel-major)
little-endian float32 data.

Encodings for 8-bit layers:
* silhouette: coverage scaled to 0..255.
* instance: gray = 10 * object id (0 background), distinct for ids <= 25.
* pose: gray = 10 * (bin + 1), so 0 is background and bins step by 10.
* normal: RGB tone-mapped as n * 0.5 + 0.5.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np
from PIL import Image

D3DR_MAGIC = b"D3DR"

INSTANCE_GRAY_STEP = 10
POSE_GRAY_STEP = 10


def silhouette_to_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)


def instance_to_u8(instance: np.ndarray) -> np.ndarray:
    return np.clip(instance.astype(np.int64) * INSTANCE_GRAY_STEP, 0, 255).astype(np.uint8)


def pose_to_u8(pose_bins: np.ndarray) -> np.ndarray:
    return np.clip((pose_bins.astype(np.int64) + 1) * POSE_GRAY_STEP, 0, 255).astype(np.uint8)


def normal_to_u8(normal: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((normal * 0.5 + 0.5) * 255.0), 0, 255).astype(np.uint8)


def png_bytes(array: np.ndarray) -> bytes:
    """Encode a uint8 grayscale (H, W) or RGB (H, W, 3) array as PNG."""
    if array.dtype != np.uint8:
        raise ValueError("png_bytes expects a uint8 array")
    mode = "L" if array.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(array, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def read_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img)


def write_png(array: np.ndarray, path) -> None:
    Path(path).write_bytes(png_bytes(array))


def pgm_bytes(array: np.ndarray) -> bytes:
    if array.dtype != np.uint8 or array.ndim != 2:
        raise ValueError("pgm_bytes expects a uint8 grayscale array")
    h, w = array.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + array.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    if not data.startswith(b"P5"):
        raise ValueError("not a binary PGM file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return pixels.reshape(h, w).copy()


def write_pgm(array: np.ndarray, path) -> None:
    Path(path).write_bytes(pgm_bytes(array))


def float_plane_bytes(planes: np.ndarray) -> bytes:
    """Serialize (H, W) or (H, W, C) float data as the D3DR container."""
    arr = np.asarray(planes, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("expected (H, W) or (H, W, C) data")
    h, w, c = arr.shape
    header = D3DR_MAGIC + struct.pack("<III", w, h, c)
    planar = arr.transpose(2, 0, 1).astype("<f4").tobytes()
    return header + planar


def read_float_plane(data: bytes) -> np.ndarray:
    """Parse a D3DR container back into an (H, W, C) float64 array."""
    if data[:4] != D3DR_MAGIC:
        raise ValueError("bad magic; not a D3DR float-plane file")
    w, h, c = struct.unpack("<III", data[4:16])
    count = w * h * c
    planes = np.frombuffer(data, dtype="<f4", count=count, offset=16)
    return planes.reshape(c, h, w).transpose(1, 2, 0).astype(np.float64)


def write_float_plane(planes: np.ndarray, path) -> None:
    Path(path).write_bytes(float_plane_bytes(planes))


def load_mask(path) -> np.ndarray:
    """Read a binary supervision mask from PNG or PGM; nonzero means covered."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".pgm" or data.startswith(b"P5"):
        arr = read_pgm(data)
    else:
        arr = read_png(data)
        if arr.ndim == 3:
            arr = arr[:, :, 0]
    return (arr > 127).astype(np.float64)
