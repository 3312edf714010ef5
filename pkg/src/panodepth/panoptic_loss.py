"""Panoptic training targets and losses.

Instances are encoded as a Gaussian heatmap around each center of mass
plus per-pixel offset vectors pointing at the center; the loss side is a
weighted bootstrapped cross entropy for semantics, MSE for the heatmap and
a masked L1 for the offsets, combined with fixed weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dual as dm
from .dual import Dual
from .grid import pixel_coords, require_same_shape
from .panoptic_map import ClassTaxonomy, PanopticMap, thing_mask


@dataclass(frozen=True)
class BootstrapConfig:
    top_fraction: float = 0.15
    small_area_threshold: int = 64 * 64
    small_weight: float = 3.0

    def __post_init__(self):
        if not (0.0 < self.top_fraction <= 1.0):
            raise ValueError("top_fraction must be in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "top_fraction": self.top_fraction,
            "small_area_threshold": self.small_area_threshold,
            "small_weight": self.small_weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BootstrapConfig":
        return cls(
            **{
                k: d[k]
                for k in ("top_fraction", "small_area_threshold", "small_weight")
                if k in d
            }
        )


@dataclass(frozen=True)
class InstanceAnnotation:
    """One thing instance: id, class, mask and its (sub-pixel) center of mass."""

    instance_id: int
    class_id: int
    mask: np.ndarray
    center: tuple[float, float]  # (row, col)

    @classmethod
    def from_mask(cls, instance_id: int, class_id: int, mask: np.ndarray) -> "InstanceAnnotation":
        mask = np.asarray(mask, dtype=bool)
        rows, cols = np.nonzero(mask)
        if rows.size == 0:
            raise ValueError("instance mask must be non-empty")
        return cls(instance_id, class_id, mask, (float(rows.mean()), float(cols.mean())))

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class PanopticTargets:
    semantic: np.ndarray  # (H, W) class ids
    heatmap: np.ndarray  # (H, W) in [0, 1]
    offsets: np.ndarray  # (H, W, 2) (delta_row, delta_col), defined on things
    things: np.ndarray  # (H, W) bool
    weights: np.ndarray  # (H, W) pixel weights


def render_center_heatmap(
    instances: list[InstanceAnnotation], sigma: float, shape: tuple[int, int]
) -> np.ndarray:
    """Pointwise max of per-instance Gaussians (so values stay in [0, 1])."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    h, w = shape
    out = np.zeros((h, w))
    rows, cols = pixel_coords(h, w)
    inv = 1.0 / (2.0 * sigma * sigma)
    for inst in instances:
        rc, cc = inst.center
        g = np.exp(-((rows - rc) ** 2 + (cols - cc) ** 2) * inv)
        np.maximum(out, g, out=out)
    return out


def compute_offsets(
    instances: list[InstanceAnnotation], shape: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (delta_row, delta_col) to the owning instance center."""
    h, w = shape
    offsets = np.zeros((h, w, 2))
    things = np.zeros((h, w), dtype=bool)
    rows, cols = pixel_coords(h, w)
    for inst in instances:
        if np.any(things & inst.mask):
            raise ValueError("instance masks must be disjoint")
        rc, cc = inst.center
        offsets[inst.mask, 0] = rc - rows[inst.mask]
        offsets[inst.mask, 1] = cc - cols[inst.mask]
        things |= inst.mask
    return offsets, things


def pixel_weights(
    instances: list[InstanceAnnotation],
    shape: tuple[int, int],
    cfg: BootstrapConfig = BootstrapConfig(),
) -> np.ndarray:
    """Weight small-instance pixels up; everything else gets 1."""
    out = np.ones(shape)
    for inst in instances:
        if inst.area < cfg.small_area_threshold:
            out[inst.mask] = cfg.small_weight
    return out


def instances_from_panoptic(pmap: PanopticMap) -> list[InstanceAnnotation]:
    """Extract instance annotations (ordered by id) from a panoptic map."""
    out = []
    for inst_id in range(1, pmap.num_instances() + 1):
        mask = pmap.instance == inst_id
        class_id = int(pmap.semantic[mask][0])
        out.append(InstanceAnnotation.from_mask(inst_id, class_id, mask))
    return out


def encode_targets(
    pmap: PanopticMap,
    sigma: float = 8.0,
    cfg: BootstrapConfig = BootstrapConfig(),
) -> PanopticTargets:
    """Build training targets (heatmap, offsets, weights) from ground truth."""
    instances = instances_from_panoptic(pmap)
    heatmap = render_center_heatmap(instances, sigma, pmap.shape)
    offsets, things = compute_offsets(instances, pmap.shape)
    weights = pixel_weights(instances, pmap.shape, cfg)
    return PanopticTargets(
        semantic=pmap.semantic.copy(),
        heatmap=heatmap,
        offsets=offsets,
        things=things,
        weights=weights,
    )


def bootstrapped_ce(
    probabilities,
    targets: np.ndarray,
    weights: np.ndarray,
    cfg: BootstrapConfig = BootstrapConfig(),
    ignore_class: int | None = None,
):
    """Weighted bootstrapped cross entropy over the hardest pixels.

    Keeps the K = ceil(top_fraction * N_valid) pixels with the highest
    weighted loss and returns their sum divided by K.  Ties at the
    threshold keep the lower linear pixel index.
    """
    pval = dm.value(probabilities)
    if pval.ndim != 3:
        raise ValueError("probabilities must be (H, W, C)")
    h, w, c = pval.shape
    targets = np.asarray(targets)
    if targets.shape != (h, w):
        raise ValueError("targets must match the probability grid")
    sums = pval.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("probabilities must sum to 1 per pixel")
    tflat = targets.ravel().astype(np.int64)
    valid = np.ones(tflat.shape, dtype=bool)
    if ignore_class is not None:
        valid = tflat != ignore_class
    if np.any((tflat[valid] < 0) | (tflat[valid] >= c)):
        raise ValueError("target class out of range")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("no valid pixels")

    idx = np.nonzero(valid)[0]
    t = np.where(valid, tflat, 0)
    p_flat = probabilities.reshape(h * w, c) if isinstance(probabilities, Dual) else pval.reshape(h * w, c)
    p_target = p_flat[idx, t[idx]]
    if np.any(dm.value(p_target) <= 0):
        raise ValueError("target-class probabilities must be > 0")
    wflat = np.asarray(weights, dtype=np.float64).ravel()[idx]
    losses = -dm.log(p_target) * wflat

    k = math.ceil(cfg.top_fraction * n_valid)
    # Stable sort on descending loss: equal losses keep raster order.
    order = np.argsort(-dm.value(losses), kind="stable")[:k]
    return dm.dsum(losses[order]) / k


def heatmap_mse(pred, target):
    require_same_shape(dm.value(pred), dm.value(target), "heatmap mse")
    d = pred - target
    return dm.dmean(d * d)


def offset_l1(pred, target, things: np.ndarray):
    """Mean |row error| + |col error| over thing pixels; 0 when there are none."""
    require_same_shape(dm.value(pred), dm.value(target), "offset l1")
    n = int(things.sum())
    if n == 0:
        return 0.0
    err = dm.absolute(pred - target)
    per_pixel = err[..., 0] + err[..., 1]
    return dm.dsum(dm.where(things, per_pixel, 0.0)) / n


def panoptic_loss(l_seg, l_mse, l_l1):
    """Fixed-weight combination of the three panoptic terms."""
    return l_seg + 200.0 * l_mse + 0.01 * l_l1


def save_targets(out_dir, targets: PanopticTargets, taxonomy: ClassTaxonomy) -> dict:
    """Write targets in the interchange formats; returns the written paths."""
    import os

    from . import fileio

    paths = {
        "semantic": os.path.join(out_dir, "target_semantic.pgm"),
        "heatmap": os.path.join(out_dir, "target_heatmap.pfm"),
        "offsets": os.path.join(out_dir, "target_offsets.pfm"),
        "things": os.path.join(out_dir, "target_things.pgm"),
        "weights": os.path.join(out_dir, "target_weights.pfm"),
        "taxonomy": os.path.join(out_dir, "taxonomy.json"),
    }
    fileio.write_pgm16(paths["semantic"], targets.semantic.astype(np.uint16))
    fileio.write_pfm(paths["heatmap"], targets.heatmap)
    fileio.write_pfm(paths["offsets"], _pack_offsets(targets.offsets))
    fileio.write_pgm16(paths["things"], targets.things.astype(np.uint16))
    fileio.write_pfm(paths["weights"], targets.weights)
    fileio.write_json(paths["taxonomy"], taxonomy.to_dict())
    return paths


def _pack_offsets(offsets: np.ndarray) -> np.ndarray:
    """PFM holds 1 or 3 channels; pad (row, col) offsets with a zero channel."""
    h, w, _ = offsets.shape
    out = np.zeros((h, w, 3))
    out[..., :2] = offsets
    return out


def unpack_offsets(packed: np.ndarray) -> np.ndarray:
    if packed.ndim != 3 or packed.shape[2] != 3:
        raise ValueError("packed offsets must be 3-channel")
    return packed[..., :2].copy()
