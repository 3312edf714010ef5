"""Analytic synthetic scenes: ground truth for every geometric test.

A scene is an infinite checkered ground plane plus axis-aligned boxes,
ray-cast per pixel (no rasterization, no z-buffer), so depths, labels and
inter-frame poses are exact.  The world frame coincides with the camera
frame at identity pose: x right, y down, z forward, ground plane at
y = camera height.

Shading is Lambertian under a fixed directional light, which makes the
image piecewise constant away from checker edges and silhouettes; the
texture_interior_mask helper marks the pixels where bilinear resampling
is exact, which is what the photometric-consistency tests need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Intrinsics, PoseSE3
from .panoptic_map import ClassTaxonomy, PanopticMap, relabel_instances_canonical

# Default class ids for synthetic scenes.
ROAD, SKY, BUILDING, EGO_CAR = 1, 2, 3, 4
CAR, TRUCK = 10, 11
VOID = 255


def default_taxonomy() -> ClassTaxonomy:
    return ClassTaxonomy(
        thing_ids=(CAR, TRUCK),
        stuff_ids=(ROAD, SKY, BUILDING, EGO_CAR),
        road_id=ROAD,
        sky_id=SKY,
        ego_car_id=EGO_CAR,
        void_id=VOID,
    )


@dataclass(frozen=True)
class BoxSpec:
    """Axis-aligned box in world coordinates."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    class_id: int  # typically CAR (thing) or BUILDING (stuff)
    albedo: float = 0.7

    def __post_init__(self):
        if any(s <= 0 for s in self.size):
            raise ValueError("box size must be positive")

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "size": list(self.size),
            "class_id": self.class_id,
            "albedo": self.albedo,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoxSpec":
        return cls(
            tuple(d["center"]), tuple(d["size"]), int(d["class_id"]), float(d.get("albedo", 0.7))
        )


@dataclass(frozen=True)
class SceneSpec:
    intrinsics: Intrinsics
    camera_height_m: float = 1.5
    checker_period_m: float = 2.0
    checker_levels: tuple[float, float] = (0.25, 0.85)
    boxes: tuple[BoxSpec, ...] = ()
    sky_intensity: float = 0.08
    ambient: float = 0.25
    light_dir: tuple[float, float, float] = (0.3, 0.8, 0.44)  # travel direction, y down
    noise_sigma: float = 0.0
    taxonomy: ClassTaxonomy = field(default_factory=default_taxonomy)

    def __post_init__(self):
        if self.camera_height_m <= 0:
            raise ValueError("camera height must be > 0")
        if self.checker_period_m <= 0:
            raise ValueError("checker period must be > 0")
        for b in self.boxes:
            if b.center[1] + b.size[1] / 2 > self.camera_height_m + 1e-9:
                raise ValueError("boxes must sit above the ground plane")

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "camera_height_m": self.camera_height_m,
            "checker_period_m": self.checker_period_m,
            "checker_levels": list(self.checker_levels),
            "boxes": [b.to_dict() for b in self.boxes],
            "sky_intensity": self.sky_intensity,
            "ambient": self.ambient,
            "light_dir": list(self.light_dir),
            "noise_sigma": self.noise_sigma,
            "taxonomy": self.taxonomy.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            intrinsics=Intrinsics.from_dict(d["intrinsics"]),
            camera_height_m=float(d.get("camera_height_m", 1.5)),
            checker_period_m=float(d.get("checker_period_m", 2.0)),
            checker_levels=tuple(d.get("checker_levels", (0.25, 0.85))),
            boxes=tuple(BoxSpec.from_dict(b) for b in d.get("boxes", ())),
            sky_intensity=float(d.get("sky_intensity", 0.08)),
            ambient=float(d.get("ambient", 0.25)),
            light_dir=tuple(d.get("light_dir", (0.3, 0.8, 0.44))),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            taxonomy=(
                ClassTaxonomy.from_dict(d["taxonomy"])
                if "taxonomy" in d
                else default_taxonomy()
            ),
        )


_EPS = 1e-9


def _trace(spec: SceneSpec, pose: PoseSE3):
    """Ray-cast one frame; returns the raw hit fields shared by render and masks."""
    k = spec.intrinsics
    origin = pose.translation
    if origin[1] >= spec.camera_height_m:
        raise ValueError("camera is at or below the ground plane")
    rows, cols = np.meshgrid(
        np.arange(k.height, dtype=np.float64),
        np.arange(k.width, dtype=np.float64),
        indexing="ij",
    )
    dirs_cam = np.stack(
        [(cols - k.cx) / k.fx, (rows - k.cy) / k.fy, np.ones_like(cols)], axis=-1
    )
    dirs_w = dirs_cam @ pose.rotation.T

    t_best = np.full((k.height, k.width), np.inf)
    kind = np.full((k.height, k.width), -1, dtype=np.int32)  # -1 sky, 0 ground, i>0 box i
    face = np.full((k.height, k.width), -1, dtype=np.int32)

    dy = dirs_w[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = (spec.camera_height_m - origin[1]) / dy
    hit_g = (dy > _EPS) & (t_ground > _EPS)
    t_best = np.where(hit_g, t_ground, t_best)
    kind = np.where(hit_g, 0, kind)

    for b_idx, box in enumerate(spec.boxes, start=1):
        lo = np.asarray(box.center) - np.asarray(box.size) / 2.0
        hi = np.asarray(box.center) + np.asarray(box.size) / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - origin) / dirs_w
            t2 = (hi - origin) / dirs_w
        t_lo = np.minimum(t1, t2)
        t_hi = np.maximum(t1, t2)
        t_near = t_lo.max(axis=-1)
        t_far = t_hi.min(axis=-1)
        hit = (t_near <= t_far) & (t_near > _EPS) & (t_near < t_best)
        axis = np.argmax(t_lo, axis=-1)
        # entering face: 2*axis for the low side (ray moving +), else 2*axis+1
        entering_low = np.take_along_axis(dirs_w, axis[..., None], axis=-1)[..., 0] > 0
        face_id = 2 * axis + np.where(entering_low, 0, 1)
        t_best = np.where(hit, t_near, t_best)
        kind = np.where(hit, b_idx, kind)
        face = np.where(hit, face_id, face)

    hit_any = np.isfinite(t_best)
    t = np.where(hit_any, t_best, 0.0)
    hit_world = origin + dirs_w * t[..., None]
    return {
        "t": t,
        "hit_any": hit_any,
        "kind": kind,
        "face": face,
        "hit_world": hit_world,
        "dirs_cam": dirs_cam,
    }


_FACE_NORMALS = np.array(
    [
        [-1, 0, 0],
        [1, 0, 0],
        [0, -1, 0],
        [0, 1, 0],
        [0, 0, -1],
        [0, 0, 1],
    ],
    dtype=np.float64,
)


def _checker(spec: SceneSpec, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    cell = np.floor(x / spec.checker_period_m) + np.floor(z / spec.checker_period_m)
    lo, hi = spec.checker_levels
    return np.where(cell.astype(np.int64) % 2 == 0, lo, hi)


def render(
    spec: SceneSpec, pose: PoseSE3 | None = None, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, PanopticMap]:
    """Render (image, depth, panoptic map) for one camera pose.

    Depth is the camera-frame z of the nearest hit (0 for sky); panoptic
    instances are the visible thing boxes, numbered densely in raster
    order.  Deterministic for a given (spec, pose, seed).
    """
    pose = pose or PoseSE3.identity()
    tr = _trace(spec, pose)
    k = spec.intrinsics
    light = -np.asarray(spec.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)

    image = np.full((k.height, k.width), spec.sky_intensity)
    depth = tr["t"].copy()  # dir_cam z == 1, so the ray parameter is camera z
    semantic = np.full((k.height, k.width), SKY, dtype=np.int32)
    instance = np.zeros((k.height, k.width), dtype=np.int32)

    ground = tr["kind"] == 0
    if np.any(ground):
        hw = tr["hit_world"]
        albedo = _checker(spec, hw[..., 0], hw[..., 2])
        lambert = max(0.0, float(np.dot(np.array([0.0, -1.0, 0.0]), light)))
        shade = spec.ambient + (1.0 - spec.ambient) * lambert
        image = np.where(ground, albedo * shade, image)
        semantic = np.where(ground, ROAD, semantic)

    for b_idx, box in enumerate(spec.boxes, start=1):
        sel = tr["kind"] == b_idx
        if not np.any(sel):
            continue
        lambert = np.clip(_FACE_NORMALS @ light, 0.0, None)
        shade = spec.ambient + (1.0 - spec.ambient) * lambert
        image = np.where(sel, box.albedo * shade[tr["face"]], image)
        semantic = np.where(sel, box.class_id, semantic)
        if spec.taxonomy.is_thing(box.class_id):
            instance = np.where(sel, b_idx, instance)

    instance = relabel_instances_canonical(semantic, instance)
    if spec.noise_sigma > 0:
        rng = np.random.Generator(np.random.Philox(key=seed))
        image = image + spec.noise_sigma * rng.standard_normal(image.shape)
    image = np.clip(image, 0.0, 1.0)
    pmap = PanopticMap(semantic, instance, spec.taxonomy)
    return image, depth, pmap


def render_pair(
    spec: SceneSpec,
    pose_t: PoseSE3,
    relative: PoseSE3,
    seed: int = 0,
):
    """Render a (target, source) frame pair with an exact relative pose.

    relative maps target-camera coordinates into the source camera, i.e.
    it is exactly the pose warp_frame needs to synthesize the target view
    from the source frame.
    """
    pose_s = pose_t.compose(relative.inverse())
    frame_t = render(spec, pose_t, seed=seed)
    frame_s = render(spec, pose_s, seed=seed + 1)
    return frame_t, frame_s, relative


def checker_edge_distance(spec: SceneSpec, pose: PoseSE3 | None = None) -> np.ndarray:
    """Distance (meters) from each ground hit to the nearest checker edge.

    Non-ground pixels get -1.
    """
    pose = pose or PoseSE3.identity()
    tr = _trace(spec, pose)
    p = spec.checker_period_m
    hw = tr["hit_world"]
    fx = np.mod(hw[..., 0] / p, 1.0)
    fz = np.mod(hw[..., 2] / p, 1.0)
    dist = p * np.minimum(
        np.minimum(fx, 1.0 - fx), np.minimum(fz, 1.0 - fz)
    )
    return np.where(tr["kind"] == 0, dist, -1.0)


def texture_interior_mask(
    spec: SceneSpec, pose: PoseSE3 | None = None, margin_px: float = 2.0
) -> np.ndarray:
    """Pixels where the rendered image is locally constant.

    True for ground pixels farther than margin_px pixel footprints from a
    checker edge, with the whole margin window on the same surface (no
    silhouette or face edge nearby).  On these pixels bilinear resampling
    of a correctly warped frame is exact.
    """
    pose = pose or PoseSE3.identity()
    tr = _trace(spec, pose)
    hw = tr["hit_world"]
    # Per-pixel world footprint: neighbor hit-point spacing, same-surface only.
    gx = np.linalg.norm(np.diff(hw, axis=1), axis=-1)
    gy = np.linalg.norm(np.diff(hw, axis=0), axis=-1)
    spacing = np.zeros(tr["t"].shape)
    spacing[:, :-1] = np.maximum(spacing[:, :-1], gx)
    spacing[:, 1:] = np.maximum(spacing[:, 1:], gx)
    spacing[:-1, :] = np.maximum(spacing[:-1, :], gy)
    spacing[1:, :] = np.maximum(spacing[1:, :], gy)

    edge_dist = checker_edge_distance(spec, pose)
    interior = (tr["kind"] == 0) & (edge_dist > margin_px * spacing)

    # Require a same-surface window so silhouettes and face edges drop out.
    surf = tr["kind"] * 8 + np.maximum(tr["face"], 0)
    rad = int(np.ceil(margin_px))
    same = np.ones_like(interior)
    h, w = same.shape
    for di in range(-rad, rad + 1):
        for dj in range(-rad, rad + 1):
            if di == 0 and dj == 0:
                continue
            shifted = np.full_like(surf, -1)
            si = slice(max(di, 0), h + min(di, 0))
            sj = slice(max(dj, 0), w + min(dj, 0))
            ti = slice(max(-di, 0), h + min(-di, 0))
            tj = slice(max(-dj, 0), w + min(-dj, 0))
            shifted[ti, tj] = surf[si, sj]
            same &= shifted == surf
    return interior & same
