"""Metric scale recovery from panoptic-guided ground points.

Self-supervised depth is defined only up to scale.  With a known mounted
camera height, every ground pixel yields a height estimate h(p) = N(p)'p
from its back-projected point and surface normal; the median of those
estimates against the real height gives the global scale factor, and the
scaled depth turns the panoptic prediction into a metric labeled point
cloud.

Ground points come from the panoptic road mask.  A normal-angle selector
(the geometric alternative) is kept for comparison: it mistakes other
horizontal surfaces, like vehicle roofs, for ground.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, PointGrid
from .grid import pixel_coords
from .panoptic_map import ClassTaxonomy, PanopticMap

IDEAL_GROUND_NORMAL = np.array([0.0, 1.0, 0.0])


class ScaleUnavailableError(RuntimeError):
    """No usable ground points; callers decide the fallback policy."""


@dataclass(frozen=True)
class CameraRig:
    """Mounted camera height above the ground plane, meters."""

    height_m: float

    def __post_init__(self):
        if not self.height_m > 0:
            raise ValueError("camera height must be > 0")


@dataclass(frozen=True)
class LabeledPointCloud:
    """Camera-frame points with semantic class and instance ids."""

    xyz: np.ndarray  # (N, 3) float64, meters
    class_ids: np.ndarray  # (N,) uint16
    instance_ids: np.ndarray  # (N,) uint16

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        c = np.asarray(self.class_ids, dtype=np.uint16).reshape(-1)
        i = np.asarray(self.instance_ids, dtype=np.uint16).reshape(-1)
        if not (len(xyz) == len(c) == len(i)):
            raise ValueError("point attributes must have equal lengths")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "class_ids", c)
        object.__setattr__(self, "instance_ids", i)

    def __len__(self) -> int:
        return len(self.xyz)


def surface_normals(points: PointGrid) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel unit normals from central-difference tangents.

    N = normalize(t_v x t_u), sign-flipped toward the ideal ground normal
    (N_y >= 0).  Invalid at the border, where any of the four neighbors is
    invalid, or where the cross product is degenerate.
    """
    p = points.points
    v = points.valid
    h, w = v.shape
    normals = np.zeros((h, w, 3))
    valid = np.zeros((h, w), dtype=bool)
    if h < 3 or w < 3:
        return normals, valid
    t_u = p[1:-1, 2:] - p[1:-1, :-2]
    t_v = p[2:, 1:-1] - p[:-2, 1:-1]
    n = np.cross(t_v, t_u)
    norm = np.linalg.norm(n, axis=-1)
    ok = (
        v[1:-1, 1:-1]
        & v[1:-1, 2:]
        & v[1:-1, :-2]
        & v[2:, 1:-1]
        & v[:-2, 1:-1]
        & (norm >= 1e-12)
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        n = n / norm[..., None]
    n = np.where((n[..., 1] < 0)[..., None], -n, n)
    normals[1:-1, 1:-1][ok] = n[ok]
    valid[1:-1, 1:-1] = ok
    return normals, valid


def ground_mask(panoptic: PanopticMap, taxonomy: ClassTaxonomy | None = None) -> np.ndarray:
    """Pixels labeled road."""
    taxonomy = taxonomy or panoptic.taxonomy
    if taxonomy.road_id is None:
        raise ValueError("taxonomy has no road class")
    return panoptic.semantic == taxonomy.road_id


def normal_ground_mask(
    normals: np.ndarray, normals_valid: np.ndarray, max_angle_deg: float = 5.0
) -> np.ndarray:
    """Geometric ground selector: normals within an angle of the ideal one.

    This is the selector the panoptic road mask replaces; horizontal
    non-ground surfaces (e.g. car roofs) pass it.
    """
    cos_min = np.cos(np.deg2rad(max_angle_deg))
    return normals_valid & (normals[..., 1] >= cos_min)


def camera_heights(
    points: PointGrid,
    normals: np.ndarray,
    normals_valid: np.ndarray,
    ground: np.ndarray,
    use_ideal_normal: bool = False,
) -> np.ndarray:
    """Height estimate N(p)'p for every usable ground pixel, raster order.

    With use_ideal_normal the per-point normal is replaced by (0, 1, 0)
    (sensitivity-study option); per-point normals are the default.
    """
    if ground.shape != points.valid.shape:
        raise ValueError("ground mask must match the point grid")
    if use_ideal_normal:
        select = ground & points.valid
        return points.points[select] @ IDEAL_GROUND_NORMAL
    select = ground & points.valid & normals_valid
    return np.einsum("nk,nk->n", normals[select], points.points[select])


def scale_factor(rig: CameraRig, heights: np.ndarray) -> float:
    """Real height over the median estimated height."""
    heights = np.asarray(heights, dtype=np.float64)
    if heights.size == 0:
        raise ScaleUnavailableError("scale unavailable: no ground-point heights")
    med = float(np.median(heights))
    if med <= 0:
        raise ScaleUnavailableError("scale unavailable: non-positive median height")
    return rig.height_m / med


def scale_depth(d_rel: np.ndarray, factor: float) -> np.ndarray:
    if not (np.isfinite(factor) and factor > 0):
        raise ValueError("scale factor must be positive and finite")
    return np.asarray(d_rel, dtype=np.float64) * factor


def recover_scale(
    d_rel: np.ndarray,
    panoptic: PanopticMap,
    k: Intrinsics,
    rig: CameraRig,
    use_ideal_normal: bool = False,
) -> tuple[float, int]:
    """Full scale pipeline on a relative depth map.

    Returns (factor, number of height samples).
    """
    from .camera import backproject

    points = backproject(d_rel, k)
    normals, normals_valid = surface_normals(points)
    heights = camera_heights(
        points, normals, normals_valid, ground_mask(panoptic), use_ideal_normal
    )
    return scale_factor(rig, heights), int(heights.size)


def project_labeled(
    panoptic: PanopticMap,
    d_abs: np.ndarray,
    k: Intrinsics,
    excluded: set[int] | frozenset[int] = frozenset(),
) -> LabeledPointCloud:
    """Back-project every labeled pixel with valid depth, row-major order.

    Pixels of excluded classes (typically sky and ego-car) produce no
    points.
    """
    d_abs = np.asarray(d_abs, dtype=np.float64)
    if d_abs.shape != panoptic.shape:
        raise ValueError("depth shape does not match the panoptic map")
    if d_abs.shape != (k.height, k.width):
        raise ValueError("depth shape does not match the intrinsics")
    keep = np.isfinite(d_abs) & (d_abs > 0)
    if excluded:
        keep &= ~np.isin(panoptic.semantic, list(excluded))
    rows, cols = pixel_coords(k.height, k.width)
    d = d_abs[keep]
    x = (cols[keep] - k.cx) / k.fx * d
    y = (rows[keep] - k.cy) / k.fy * d
    return LabeledPointCloud(
        np.stack([x, y, d], axis=-1),
        panoptic.semantic[keep].astype(np.uint16),
        panoptic.instance[keep].astype(np.uint16),
    )
