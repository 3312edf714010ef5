"""Interchange formats: PGM/PPM for integer images, PFM for float grids,
ASCII PLY for labeled point clouds, JSON for structured metadata.

PFM follows the usual convention: little-endian float32 (negative scale
header), rows stored bottom-to-top.  16-bit PGM is big-endian per the
Netpbm spec.
"""

from __future__ import annotations

import json
import re

import numpy as np

from .scaling import LabeledPointCloud


def _read_pnm_header(f, magic: bytes, n_fields: int) -> list[int]:
    if f.read(2) != magic:
        raise ValueError(f"not a {magic.decode()} file")
    fields = []
    while len(fields) < n_fields:
        line = f.readline()
        if not line:
            raise ValueError("truncated header")
        line = line.split(b"#", 1)[0]
        fields.extend(int(tok) for tok in line.split())
    return fields


def write_pgm8(path, a: np.ndarray) -> None:
    a = np.asarray(a)
    if a.dtype != np.uint8 or a.ndim != 2:
        raise ValueError("8-bit PGM needs a (H, W) uint8 array")
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        f.write(a.tobytes())


def write_pgm16(path, a: np.ndarray) -> None:
    a = np.asarray(a)
    if a.dtype != np.uint16 or a.ndim != 2:
        raise ValueError("16-bit PGM needs a (H, W) uint16 array")
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n65535\n" % (a.shape[1], a.shape[0]))
        f.write(a.astype(">u2").tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        w, h, maxval = _read_pnm_header(f, b"P5", 3)
        if maxval == 255:
            data = np.frombuffer(f.read(w * h), dtype=np.uint8)
        elif maxval == 65535:
            data = np.frombuffer(f.read(2 * w * h), dtype=">u2").astype(np.uint16)
        else:
            raise ValueError(f"unsupported PGM maxval {maxval}")
    return data.reshape(h, w)


def write_ppm(path, a: np.ndarray) -> None:
    a = np.asarray(a)
    if a.dtype != np.uint8 or a.ndim != 3 or a.shape[2] != 3:
        raise ValueError("PPM needs a (H, W, 3) uint8 array")
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        f.write(a.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        w, h, maxval = _read_pnm_header(f, b"P6", 3)
        if maxval != 255:
            raise ValueError(f"unsupported PPM maxval {maxval}")
        data = np.frombuffer(f.read(3 * w * h), dtype=np.uint8)
    return data.reshape(h, w, 3)


def write_pfm(path, a: np.ndarray) -> None:
    a = np.asarray(a, dtype=np.float32)
    if a.ndim == 2:
        magic = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError("PFM holds (H, W) or (H, W, 3) float grids")
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n-1.0\n" % (a.shape[1], a.shape[0]))
        f.write(np.flipud(a).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic not in (b"Pf", b"PF"):
            raise ValueError("not a PFM file")
        channels = 3 if magic == b"PF" else 1
        tokens = []
        while len(tokens) < 3:
            line = f.readline()
            if not line:
                raise ValueError("truncated PFM header")
            tokens.extend(line.split())
        w, h, scale = int(tokens[0]), int(tokens[1]), float(tokens[2])
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(4 * w * h * channels), dtype=dtype)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return np.flipud(data.reshape(shape)).astype(np.float64)


def write_ply(
    path,
    cloud: LabeledPointCloud,
    scale_factor: float | None = None,
    camera_height_m: float | None = None,
) -> None:
    """ASCII PLY with x/y/z floats and ushort class and instance ids."""
    lines = ["ply", "format ascii 1.0"]
    if camera_height_m is not None:
        lines.append(f"comment camera_height_m {camera_height_m!r}")
    if scale_factor is not None:
        lines.append(f"comment scale_factor {scale_factor!r}")
    lines += [
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property ushort class_id",
        "property ushort instance_id",
        "end_header",
    ]
    body = [
        "%.8g %.8g %.8g %d %d" % (x, y, z, c, i)
        for (x, y, z), c, i in zip(cloud.xyz, cloud.class_ids, cloud.instance_ids)
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines + body) + "\n")


def read_ply(path) -> tuple[LabeledPointCloud, dict]:
    """Read the ASCII PLY written by write_ply; returns (cloud, comments)."""
    comments = {}
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise ValueError("not a PLY file")
        n = None
        for line in f:
            line = line.strip()
            if line == "end_header":
                break
            m = re.match(r"comment (\S+) (\S+)", line)
            if m:
                comments[m.group(1)] = float(m.group(2))
            m = re.match(r"element vertex (\d+)", line)
            if m:
                n = int(m.group(1))
        if n is None:
            raise ValueError("PLY header missing vertex count")
        rows = [f.readline().split() for _ in range(n)]
    xyz = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows]).reshape(-1, 3)
    cls = np.array([int(r[3]) for r in rows], dtype=np.uint16)
    inst = np.array([int(r[4]) for r in rows], dtype=np.uint16)
    return LabeledPointCloud(xyz, cls, inst), comments


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)
