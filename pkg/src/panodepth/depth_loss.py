"""Self-supervised depth objective.

Per-pixel photometric error mixes SSIM and L1; occlusions and static
pixels drop out through a per-pixel minimum over warped and unwarped
context frames; a validity mask keeps invalid projections out of the
reduction; an edge-aware smoothness term on mean-normalized inverse depth
regularizes the result.  All reductions are fixed-order and every loss is
evaluable on Dual inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual as dm
from .dual import Dual
from .grid import require_same_shape


@dataclass(frozen=True)
class PhotometricConfig:
    alpha: float = 0.85
    ssim_window: int = 3
    c1: float = 1e-4
    c2: float = 9e-4

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must be in [0, 1]")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and >= 3")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "ssim_window": self.ssim_window,
            "c1": self.c1,
            "c2": self.c2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhotometricConfig":
        return cls(**{k: d[k] for k in ("alpha", "ssim_window", "c1", "c2") if k in d})


@dataclass
class ReprojectionSet:
    """Frames entering the minimum-reprojection error at one scale.

    Candidate order is fixed: warped previous, warped next, unwarped
    previous, unwarped next.  Warped members count only where their warp
    mask is set; exclusion (True = drop) removes padded/sky/ego pixels
    from the returned validity mask.
    """

    target: np.ndarray | Dual
    warped_prev: np.ndarray | Dual
    warped_next: np.ndarray | Dual
    mask_prev: np.ndarray
    mask_next: np.ndarray
    prev: np.ndarray
    next: np.ndarray
    exclusion: np.ndarray | None = None

    def __post_init__(self):
        shape = dm.value(self.target).shape
        for name in ("warped_prev", "warped_next", "prev", "next"):
            got = dm.value(getattr(self, name)).shape
            if got != shape:
                raise ValueError(f"{name}: shape {got} does not match target {shape}")
        hw = shape[:2]
        for name in ("mask_prev", "mask_next"):
            if getattr(self, name).shape != hw:
                raise ValueError(f"{name} must have shape {hw}")
        if self.exclusion is not None and self.exclusion.shape != hw:
            raise ValueError(f"exclusion mask must have shape {hw}")


def _window_mean(a, k: int):
    """Box mean with border-truncated windows, via an integral image."""
    if isinstance(a, Dual):
        return Dual(_window_mean(a.val, k), _window_mean(a.dot, k))
    if a.ndim == 3:
        return np.stack([_window_mean(a[..., c], k) for c in range(a.shape[2])], axis=-1)
    h, w = a.shape
    r = k // 2
    s = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=s[1:, 1:])
    i = np.arange(h)
    j = np.arange(w)
    i0, i1 = np.maximum(i - r, 0), np.minimum(i + r, h - 1) + 1
    j0, j1 = np.maximum(j - r, 0), np.minimum(j + r, w - 1) + 1
    total = (
        s[np.ix_(i1, j1)] - s[np.ix_(i0, j1)] - s[np.ix_(i1, j0)] + s[np.ix_(i0, j0)]
    )
    counts = (i1 - i0)[:, None] * (j1 - j0)[None, :]
    return total / counts


def _channel_mean(x):
    if isinstance(x, Dual):
        return x.mean(axis=-1) if x.ndim == 3 else x
    return x.mean(axis=-1) if x.ndim == 3 else x


def ssim_map(a, b, cfg: PhotometricConfig = PhotometricConfig()):
    """Per-pixel structural similarity with box-window statistics.

    Inputs are intensity grids in [0, 1]; windows are truncated at the
    border, so identical images score exactly 1 everywhere.
    """
    require_same_shape(dm.value(a), dm.value(b), "ssim")
    k = cfg.ssim_window
    mu_a = _window_mean(a, k)
    mu_b = _window_mean(b, k)
    var_a = _window_mean(a * a, k) - mu_a * mu_a
    var_b = _window_mean(b * b, k) - mu_b * mu_b
    cov = _window_mean(a * b, k) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + cfg.c1) * (2.0 * cov + cfg.c2)
    den = (mu_a * mu_a + mu_b * mu_b + cfg.c1) * (var_a + var_b + cfg.c2)
    return num / den


def photometric_error(target, candidate, cfg: PhotometricConfig = PhotometricConfig()):
    """alpha * (1 - SSIM)/2 + (1 - alpha) * |target - candidate|, channel-averaged."""
    require_same_shape(dm.value(target), dm.value(candidate), "photometric error")
    ssim = ssim_map(target, candidate, cfg)
    err = cfg.alpha * ((1.0 - ssim) * 0.5) + (1.0 - cfg.alpha) * dm.absolute(
        target - candidate
    )
    return _channel_mean(err)


def min_reprojection(rset: ReprojectionSet, cfg: PhotometricConfig = PhotometricConfig()):
    """Per-pixel minimum photometric error over the four candidates.

    Returns (error map, mask).  The mask is the union of the warp masks
    minus excluded pixels; warped candidates only compete where their own
    warp mask is set.  Ties select the earlier candidate.
    """
    e_wp = photometric_error(rset.target, rset.warped_prev, cfg)
    e_wn = photometric_error(rset.target, rset.warped_next, cfg)
    e_p = photometric_error(rset.target, rset.prev, cfg)
    e_n = photometric_error(rset.target, rset.next, cfg)
    e_wp = dm.where(rset.mask_prev, e_wp, np.inf)
    e_wn = dm.where(rset.mask_next, e_wn, np.inf)
    m = dm.minimum(dm.minimum(dm.minimum(e_wp, e_wn), e_p), e_n)
    valid = rset.mask_prev | rset.mask_next
    if rset.exclusion is not None:
        valid = valid & ~rset.exclusion
    return m, valid


def masked_photometric_loss(
    per_scale_sets: list[ReprojectionSet], cfg: PhotometricConfig = PhotometricConfig()
):
    """Mean min-reprojection error over valid pixels, summed over scales."""
    if not per_scale_sets:
        raise ValueError("need at least one scale")
    total = 0.0
    for i, rset in enumerate(per_scale_sets):
        err, valid = min_reprojection(rset, cfg)
        n = int(valid.sum())
        if n == 0:
            raise ValueError(f"degenerate input: no valid pixels at scale {i}")
        total = total + dm.dsum(dm.where(valid, err, 0.0)) / n
    return total


def smoothness_loss(depths, image):
    """Edge-aware gradient penalty on mean-normalized inverse depth.

    depths is the multi-scale list (all grids at full resolution, scale i
    weighted by 1/2^i); image gradients are channel-averaged before the
    exponential attenuation.  Invariant to global depth rescaling.
    """
    if not depths:
        raise ValueError("need at least one depth scale")
    img = dm.value(image)
    gx = np.abs(img[:, 1:] - img[:, :-1])
    gy = np.abs(img[1:, :] - img[:-1, :])
    if img.ndim == 3:
        gx = gx.mean(axis=-1)
        gy = gy.mean(axis=-1)
    wx = np.exp(-gx)
    wy = np.exp(-gy)
    total = 0.0
    for i, d in enumerate(depths):
        dval = dm.value(d)
        if dval.shape != img.shape[:2]:
            raise ValueError("depth scales must match the image resolution")
        if np.any(dval <= 0):
            raise ValueError("depth must be strictly positive")
        inv = 1.0 / d
        dstar = inv / dm.dmean(inv)
        ddx = dm.absolute(dstar[:, 1:] - dstar[:, :-1])
        ddy = dm.absolute(dstar[1:, :] - dstar[:-1, :])
        n_px = dval.shape[0] * dval.shape[1]
        term = (dm.dsum(ddx * wx) + dm.dsum(ddy * wy)) / n_px
        total = total + term * (0.5**i)
    return total


def depth_loss(
    per_scale_sets: list[ReprojectionSet],
    depths,
    image,
    cfg: PhotometricConfig = PhotometricConfig(),
):
    """Photometric plus 0.001 x smoothness."""
    if len(per_scale_sets) != len(depths):
        raise ValueError("one reprojection set per depth scale")
    return masked_photometric_loss(per_scale_sets, cfg) + 0.001 * smoothness_loss(
        depths, image
    )


def sigmoid_to_depth(logits, min_depth: float = 0.1, max_depth: float = 100.0):
    """Map raw logits to depth through a bounded inverse-depth sigmoid."""
    if not (0.0 < min_depth < max_depth):
        raise ValueError("need 0 < min_depth < max_depth")
    x = np.asarray(logits, dtype=np.float64)
    sig = np.empty_like(x)
    pos = x >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    sig[~pos] = ex / (1.0 + ex)
    disp = 1.0 / max_depth + (1.0 / min_depth - 1.0 / max_depth) * sig
    return 1.0 / disp
