"""Pinhole camera model, rigid transforms and view-synthesis warping.

Conventions (used consistently across the package):

  * Camera frame: x right, y down, z forward.  The optical axis is +z and
    the ideal ground normal seen from a vehicle-mounted camera is (0, 1, 0).
  * Pixel (u, v) = (col, row) is the exact point (u, v); no half-pixel
    offset.  Projection: u = fx * x / z + cx, v = fy * y / z + cy.
  * Out-of-bounds samples are invalidated via masks, never clamped; masks
    are what keeps invalid projections out of the photometric loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BOUNDARY_TOL, as_grid, as_mask, pixel_coords, require_positive_depth

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera matrix parameters, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be > 0")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Intrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class PoseSE3:
    """Rigid transform p' = R p + t, translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must have determinant 1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        """self after other: (self @ other).apply(p) == self.apply(other.apply(p))."""
        return PoseSE3(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "PoseSE3":
        rt = self.rotation.T
        return PoseSE3(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (..., 3) array of points."""
        return points @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoseSE3":
        return cls(np.asarray(d["rotation"], float), np.asarray(d["translation"], float))


@dataclass(frozen=True)
class PointGrid:
    """Per-pixel 3D points in camera frame (meters) with a validity flag."""

    points: np.ndarray  # (H, W, 3) float64
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        v = as_mask(self.valid, "point validity")
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[:2] != v.shape:
            raise ValueError(f"inconsistent point grid shapes {p.shape} / {v.shape}")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "valid", v)


def pose_from_axis_angle(axis_angle, translation) -> PoseSE3:
    """Rodrigues rotation from an axis-angle vector; zero vector gives identity."""
    w = np.asarray(axis_angle, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(w)
    if theta < 1e-15:
        return PoseSE3(np.eye(3), np.asarray(translation, float))
    k = w / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    r = np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)
    return PoseSE3(r, np.asarray(translation, float))


def backproject(depth: np.ndarray, k: Intrinsics) -> PointGrid:
    """Lift a depth map to camera-frame points: p = d * K^-1 (u, v, 1)^T.

    Pixels with non-positive or non-finite depth come back invalid.  The z
    component of every valid point equals its depth.
    """
    depth = as_grid(depth, "depth")
    if depth.ndim != 2:
        raise ValueError("depth must be single-channel (H, W)")
    if depth.shape != (k.height, k.width):
        raise ValueError(
            f"depth shape {depth.shape} does not match intrinsics "
            f"({k.height}, {k.width})"
        )
    valid = np.isfinite(depth) & (depth > 0)
    rows, cols = pixel_coords(k.height, k.width)
    x = (cols - k.cx) / k.fx * depth
    y = (rows - k.cy) / k.fy * depth
    return PointGrid(np.stack([x, y, depth], axis=-1), valid)


def project(points: PointGrid, k: Intrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project camera-frame points to pixel coordinates.

    Returns (coords, depth, mask) where coords[..., 0] = u (col) and
    coords[..., 1] = v (row).  The mask is cleared for invalid input
    points, points with z <= 0, and projections outside
    [0, W-1] x [0, H-1].  Coordinate values are meaningful only where the
    mask is set.
    """
    p = points.points
    z = p[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * p[..., 0] / z + k.cx
        v = k.fy * p[..., 1] / z + k.cy
    inside = (
        (u >= -BOUNDARY_TOL)
        & (u <= k.width - 1 + BOUNDARY_TOL)
        & (v >= -BOUNDARY_TOL)
        & (v <= k.height - 1 + BOUNDARY_TOL)
    )
    mask = points.valid & (z > 0) & np.isfinite(u) & np.isfinite(v) & inside
    coords = np.stack([u, v], axis=-1)
    coords[~mask] = 0.0
    return coords, np.where(mask, z, 0.0), mask


def transform_points(points: PointGrid, pose: PoseSE3) -> PointGrid:
    return PointGrid(pose.apply(points.points), points.valid)


def bilinear_sample(
    src: np.ndarray, coords: np.ndarray, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Sample src at fractional pixel coordinates with bilinear weights.

    coords is (H', W', 2) holding (u, v).  The output mask is cleared where
    the input mask is cleared or the sample footprint leaves the grid
    (coordinates within BOUNDARY_TOL of the border still count as inside).
    """
    src = as_grid(src, "source image")
    coords = np.asarray(coords, dtype=np.float64)
    mask = as_mask(mask, "sample mask")
    if coords.shape[:2] != mask.shape or coords.shape[-1] != 2:
        raise ValueError("coords must be (H, W, 2) matching the mask")
    h, w = src.shape[:2]
    u = coords[..., 0]
    v = coords[..., 1]
    inside = (
        (u >= -BOUNDARY_TOL)
        & (u <= w - 1 + BOUNDARY_TOL)
        & (v >= -BOUNDARY_TOL)
        & (v <= h - 1 + BOUNDARY_TOL)
    )
    out_mask = mask & inside
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    # Anchor the 2x2 footprint so u0+1 stays in range even at the far edge.
    u0 = np.minimum(np.floor(u), w - 2).astype(np.intp) if w > 1 else np.zeros_like(u, np.intp)
    v0 = np.minimum(np.floor(v), h - 2).astype(np.intp) if h > 1 else np.zeros_like(v, np.intp)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    wu = u - u0
    wv = v - v0
    if src.ndim == 3:
        wu = wu[..., None]
        wv = wv[..., None]
    out = (
        src[v0, u0] * (1 - wu) * (1 - wv)
        + src[v0, u1] * wu * (1 - wv)
        + src[v1, u0] * (1 - wu) * wv
        + src[v1, u1] * wu * wv
    )
    zero = np.zeros((), dtype=src.dtype)
    out = np.where(out_mask[..., None] if src.ndim == 3 else out_mask, out, zero)
    return out, out_mask


def warp_frame(
    source: np.ndarray,
    target_depth: np.ndarray,
    pose_t_to_s: PoseSE3,
    k: Intrinsics,
) -> tuple[np.ndarray, np.ndarray]:
    """Synthesize the target view from a source frame.

    Back-projects the target depth, moves the points into the source camera
    with pose_t_to_s, projects them, and bilinearly samples the source.
    The returned mask marks pixels with a valid projection.
    """
    source = as_grid(source, "source image")
    if source.shape[:2] != (k.height, k.width):
        raise ValueError("source image does not match intrinsics")
    points = backproject(target_depth, k)
    require_positive_depth(target_depth, points.valid)
    coords, _, proj_mask = project(transform_points(points, pose_t_to_s), k)
    return bilinear_sample(source, coords, proj_mask)
