"""File formats: PNG, binary PGM, PLY point clouds, JSON helpers.

PNG handles 8-bit color (and grayscale) through Pillow. PGM is written by
hand as binary P5 — 8-bit for maxval 255, 16-bit big-endian for larger
values, per the netpbm convention — because depth and thermal rasters
need 16 bits and PNG libraries disagree about them.

Point clouds go to PLY with this exact layout, ascii or little-endian
binary:

    element vertex <n>
    property float x          meters, rgb camera frame
    property float y
    property float z
    property uchar red        fused display color
    property uchar green
    property uchar blue
    property ushort thermal   raw aligned intensities
    property ushort uv

Binary vertices pack to 19 bytes in field order. The source pixel of
each point is not stored; clouds read back carry (-1, -1) there.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionMismatch
from .fuse import MultispectralPointCloud

__all__ = [
    "read_calibration",
    "read_json",
    "read_pgm",
    "read_ply",
    "read_png",
    "write_calibration",
    "write_json",
    "write_pgm",
    "write_ply",
    "write_png",
]

_PLY_VERTEX = np.dtype([
    ("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
    ("red", "u1"), ("green", "u1"), ("blue", "u1"),
    ("thermal", "<u2"), ("uv", "<u2"),
])


def write_png(path, array) -> None:
    """Write an 8-bit grayscale or RGB raster."""
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise ValueError(f"png output is 8-bit, got {arr.dtype}")
    Image.fromarray(arr).save(Path(path), format="PNG")


def read_png(path) -> np.ndarray:
    with Image.open(Path(path)) as img:
        return np.asarray(img)


def write_pgm(path, array) -> None:
    """Write a single-channel raster as binary P5, 8 or 16 bit."""
    arr = np.asarray(array)
    if arr.ndim != 2:
        raise DimensionMismatch("pgm rasters are single-channel")
    if arr.dtype == np.uint8:
        maxval, payload = 255, arr.tobytes()
    elif arr.dtype == np.uint16:
        maxval, payload = 65535, arr.astype(">u2").tobytes()
    else:
        raise ValueError(f"pgm output is uint8 or uint16, got {arr.dtype}")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n"
    Path(path).write_bytes(header.encode("ascii") + payload)


def read_pgm(path) -> np.ndarray:
    """Read binary P5, returning uint8 or uint16 to match its maxval."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary pgm file")
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = tokens
    if maxval <= 255:
        raster = np.frombuffer(data, dtype=np.uint8, count=width * height,
                               offset=pos)
    else:
        raster = np.frombuffer(data, dtype=">u2", count=width * height,
                               offset=pos).astype(np.uint16)
    return raster.reshape(height, width)


def write_ply(path, cloud: MultispectralPointCloud,
              binary: bool = False) -> None:
    """Write a point cloud, ascii by default or binary little-endian."""
    n = len(cloud)
    fmt = "binary_little_endian" if binary else "ascii"
    header = "\n".join([
        "ply",
        f"format {fmt} 1.0",
        "comment multispectral point cloud",
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property ushort thermal",
        "property ushort uv",
        "end_header",
    ]) + "\n"

    rows = np.empty(n, dtype=_PLY_VERTEX)
    pts = np.asarray(cloud.points, dtype=np.float32).reshape(n, 3)
    colors = np.asarray(cloud.colors).reshape(n, 3)
    for i, axis in enumerate(("x", "y", "z")):
        rows[axis] = pts[:, i]
    for i, channel in enumerate(("red", "green", "blue")):
        rows[channel] = colors[:, i]
    rows["thermal"] = cloud.thermal
    rows["uv"] = cloud.uv

    with open(Path(path), "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(rows.tobytes())
        else:
            for r in rows:
                f.write((f"{r['x']:.9g} {r['y']:.9g} {r['z']:.9g} "
                         f"{r['red']} {r['green']} {r['blue']} "
                         f"{r['thermal']} {r['uv']}\n").encode("ascii"))


def read_ply(path) -> MultispectralPointCloud:
    """Read a point cloud written by ``write_ply`` (either format)."""
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    if header[0] != "ply":
        raise ValueError(f"{path}: not a ply file")
    fmt = next(line.split()[1] for line in header if line.startswith("format"))
    n = int(next(line.split()[2] for line in header
                 if line.startswith("element vertex")))
    props = [line.split()[2] for line in header if line.startswith("property")]
    if props != list(_PLY_VERTEX.names):
        raise ValueError(f"{path}: unexpected vertex layout {props}")

    if fmt == "binary_little_endian":
        rows = np.frombuffer(data, dtype=_PLY_VERTEX, count=n, offset=end)
    elif fmt == "ascii":
        text = data[end:].decode("ascii").split()
        flat = np.array(text, dtype=object).reshape(n, 8) if n else \
            np.empty((0, 8), dtype=object)
        rows = np.empty(n, dtype=_PLY_VERTEX)
        for i, name in enumerate(_PLY_VERTEX.names):
            rows[name] = flat[:, i].astype(_PLY_VERTEX[name])
    else:
        raise ValueError(f"{path}: unsupported ply format {fmt!r}")

    points = np.stack([rows["x"], rows["y"], rows["z"]], axis=-1) \
        .astype(np.float64) if n else np.empty((0, 3))
    colors = np.stack([rows["red"], rows["green"], rows["blue"]], axis=-1) \
        if n else np.empty((0, 3), dtype=np.uint8)
    return MultispectralPointCloud(
        points=points, colors=colors.astype(np.uint8),
        thermal=rows["thermal"].astype(np.uint16),
        uv=rows["uv"].astype(np.uint16),
        source_pixels=np.full((n, 2), -1, dtype=np.int32))


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True)
                          + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_calibration(path, result) -> None:
    write_json(path, result.to_dict())


def read_calibration(path):
    from .calibrate import CalibrationResult
    return CalibrationResult.from_dict(read_json(path))
