"""Randomized gradient agreement checks for every scalar loss.

Each case builds a small random input, evaluates the loss with seeded dual
numbers and with central finite differences, and compares the directional
derivatives at relative tolerance |dual - fd| / max(1, |fd|).

Inputs are constructed away from non-smooth points (absolute-value kinks,
minimum/top-K selection boundaries); cases where the finite-difference
step still flips a discrete selection are resampled.
"""

from __future__ import annotations

import numpy as np

from . import dual as dm
from .depth_loss import (
    PhotometricConfig,
    ReprojectionSet,
    depth_loss,
    masked_photometric_loss,
    photometric_error,
    smoothness_loss,
)
from .dual import Dual, directional_derivative, finite_difference
from .panoptic_loss import (
    BootstrapConfig,
    bootstrapped_ce,
    heatmap_mse,
    offset_l1,
    panoptic_loss,
)
from .weighting import combined_loss

_STEP = 1e-4


def _unit(rng, n):
    d = rng.standard_normal(n)
    return d / np.linalg.norm(d)


def _smooth_image(rng, h, w):
    # Band-limited field: sums of a few low-frequency waves, scaled to [0.2, 0.8].
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    img = np.zeros((h, w))
    for _ in range(3):
        fr, fc = rng.uniform(0.2, 0.9, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.5, 1.0) * np.sin(fr * rr + fc * cc + ph)
    lo, hi = img.min(), img.max()
    return 0.2 + 0.6 * (img - lo) / max(hi - lo, 1e-9)


def _case_photometric(rng):
    h, w = 6, 7
    target = _smooth_image(rng, h, w)
    delta = rng.uniform(0.05, 0.2, size=(h, w)) * rng.choice([-1.0, 1.0], size=(h, w))
    cand = np.clip(target + delta, 0.02, 0.98)
    if np.any(np.abs(cand - target) < 1e-3):
        return None
    cfg = PhotometricConfig()

    def f(x):
        c = x.reshape(h, w) if isinstance(x, Dual) else x.reshape(h, w)
        return dm.dmean(photometric_error(target, c, cfg))

    return f, cand.ravel(), _unit(rng, h * w)


def _ce_inputs(rng):
    h, w, c = 4, 5, 4
    raw = rng.uniform(0.2, 2.0, size=(h, w, c))
    targets = rng.integers(0, c, size=(h, w))
    weights = rng.choice([1.0, 3.0], size=(h, w))
    cfg = BootstrapConfig(top_fraction=float(rng.choice([0.3, 0.6, 1.0])))
    return raw, targets, weights, cfg


def _ce_selection(raw, targets, weights, cfg):
    p = raw / raw.sum(axis=-1, keepdims=True)
    h, w, c = p.shape
    pt = p.reshape(-1, c)[np.arange(h * w), targets.ravel()]
    losses = -np.log(pt) * weights.ravel()
    k = int(np.ceil(cfg.top_fraction * h * w))
    return tuple(np.argsort(-losses, kind="stable")[:k])


def _normalize_channels(params):
    """Caller-side normalization: positive parameters to per-pixel probabilities."""
    return params / dm.unsqueeze_last(params.sum(axis=-1))


def _case_bootstrapped_ce(rng):
    raw, targets, weights, cfg = _ce_inputs(rng)
    h, w, c = raw.shape

    def f(x):
        return bootstrapped_ce(_normalize_channels(x.reshape(h, w, c)), targets, weights, cfg)

    d = _unit(rng, raw.size)
    sel0 = _ce_selection(raw - _STEP * d.reshape(raw.shape), targets, weights, cfg)
    sel1 = _ce_selection(raw + _STEP * d.reshape(raw.shape), targets, weights, cfg)
    if sel0 != sel1:
        return None
    return f, raw.ravel(), d


def _case_heatmap_mse(rng):
    h, w = 6, 7
    target = rng.uniform(0, 1, size=(h, w))
    pred = rng.uniform(0, 1, size=(h, w))

    def f(x):
        return heatmap_mse(x.reshape(h, w), target)

    return f, pred.ravel(), _unit(rng, h * w)


def _offset_inputs(rng):
    h, w = 5, 6
    target = rng.uniform(-4, 4, size=(h, w, 2))
    err = rng.uniform(0.05, 1.0, size=(h, w, 2)) * rng.choice([-1.0, 1.0], size=(h, w, 2))
    pred = target + err
    things = rng.uniform(size=(h, w)) < 0.5
    if not things.any():
        things[2, 3] = True
    return pred, target, things


def _case_offset_l1(rng):
    pred, target, things = _offset_inputs(rng)

    def f(x):
        return offset_l1(x.reshape(pred.shape), target, things)

    return f, pred.ravel(), _unit(rng, pred.size)


def _case_panoptic(rng):
    raw, targets, weights, cfg = _ce_inputs(rng)
    hm_target = rng.uniform(0, 1, size=(4, 5))
    hm_pred = rng.uniform(0, 1, size=(4, 5))
    off_pred, off_target, things = _offset_inputs(rng)
    sizes = [raw.size, hm_pred.size, off_pred.size]
    splits = np.cumsum(sizes)[:-1]

    def f(x):
        a = x[: splits[0]].reshape(raw.shape)
        b = x[splits[0] : splits[1]].reshape(hm_pred.shape)
        c = x[splits[1] :].reshape(off_pred.shape)
        return panoptic_loss(
            bootstrapped_ce(_normalize_channels(a), targets, weights, cfg),
            heatmap_mse(b, hm_target),
            offset_l1(c, off_target, things),
        )

    x = np.concatenate([raw.ravel(), hm_pred.ravel(), off_pred.ravel()])
    d = _unit(rng, x.size)
    da = d[: splits[0]].reshape(raw.shape)
    if _ce_selection(raw - _STEP * da, targets, weights, cfg) != _ce_selection(
        raw + _STEP * da, targets, weights, cfg
    ):
        return None
    return f, x, d


def _reprojection_arrays(rng, h, w):
    target = _smooth_image(rng, h, w)
    frames = {}
    for name in ("warped_prev", "warped_next", "prev", "next"):
        delta = rng.uniform(0.05, 0.2, size=(h, w)) * rng.choice([-1.0, 1.0], size=(h, w))
        frames[name] = np.clip(target + delta, 0.02, 0.98)
    mask_prev = rng.uniform(size=(h, w)) < 0.8
    mask_next = rng.uniform(size=(h, w)) < 0.8
    if not (mask_prev | mask_next).any():
        mask_prev[0, 0] = True
    return target, frames, mask_prev, mask_next


def _min_selection(target, frames, mask_prev, mask_next, cfg):
    errs = [
        np.where(mask_prev, photometric_error(target, frames["warped_prev"], cfg), np.inf),
        np.where(mask_next, photometric_error(target, frames["warped_next"], cfg), np.inf),
        photometric_error(target, frames["prev"], cfg),
        photometric_error(target, frames["next"], cfg),
    ]
    return np.argmin(np.stack(errs, axis=0), axis=0)


def _build_min_reproj_case(rng, n_scales):
    cfg = PhotometricConfig()
    h, w = 6, 7
    scales = [_reprojection_arrays(rng, h, w) for _ in range(n_scales)]
    x_parts, shapes = [], []
    for target, frames, _, _ in scales:
        x_parts += [frames["warped_prev"].ravel(), frames["warped_next"].ravel()]
    x = np.concatenate(x_parts)
    d = _unit(rng, x.size)

    def build_sets(x_any):
        sets = []
        n = h * w
        for i, (target, frames, mask_prev, mask_next) in enumerate(scales):
            wp = x_any[2 * i * n : (2 * i + 1) * n].reshape(h, w)
            wn = x_any[(2 * i + 1) * n : (2 * i + 2) * n].reshape(h, w)
            sets.append(
                ReprojectionSet(
                    target=target,
                    warped_prev=wp,
                    warped_next=wn,
                    mask_prev=mask_prev,
                    mask_next=mask_next,
                    prev=frames["prev"],
                    next=frames["next"],
                )
            )
        return sets

    # Resample if the finite-difference step would flip any per-pixel min.
    for sgn in (-1.0, 1.0):
        xp = x + sgn * _STEP * d
        n = h * w
        for i, (target, frames, mask_prev, mask_next) in enumerate(scales):
            f2 = dict(frames)
            f2["warped_prev"] = xp[2 * i * n : (2 * i + 1) * n].reshape(h, w)
            f2["warped_next"] = xp[(2 * i + 1) * n : (2 * i + 2) * n].reshape(h, w)
            sel_a = _min_selection(target, f2, mask_prev, mask_next, cfg)
            sel_b = _min_selection(target, frames, mask_prev, mask_next, cfg)
            if not np.array_equal(sel_a, sel_b):
                return None
    return build_sets, x, d, cfg, scales


def _case_masked_photometric(rng):
    built = _build_min_reproj_case(rng, n_scales=2)
    if built is None:
        return None
    build_sets, x, d, cfg, _ = built

    def f(x_any):
        return masked_photometric_loss(build_sets(x_any), cfg)

    return f, x, d


def _smooth_depth(rng, h, w):
    dx = rng.uniform(0.05, 0.2, size=(h, w)).cumsum(axis=1)
    dy = rng.uniform(0.05, 0.2, size=(h, w)).cumsum(axis=0)
    return 2.0 + dx + dy


def _case_smoothness(rng):
    h, w = 6, 7
    n_scales = 2
    depths = [_smooth_depth(rng, h, w) for _ in range(n_scales)]
    image = _smooth_image(rng, h, w)
    x = np.concatenate([d.ravel() for d in depths])

    def f(x_any):
        ds = [x_any[i * h * w : (i + 1) * h * w].reshape(h, w) for i in range(n_scales)]
        return smoothness_loss(ds, image)

    return f, x, _unit(rng, x.size)


def _case_depth_total(rng):
    built = _build_min_reproj_case(rng, n_scales=2)
    if built is None:
        return None
    build_sets, x_phot, d_phot, cfg, scales = built
    h, w = 6, 7
    depths = [_smooth_depth(rng, h, w) for _ in range(2)]
    image = _smooth_image(rng, h, w)
    x = np.concatenate([x_phot] + [dd.ravel() for dd in depths])
    d = _unit(rng, x.size)
    # Reuse the phot-part flip check with the joint direction's phot block.
    scale = np.linalg.norm(d[: x_phot.size])
    if scale > 0:
        probe = d[: x_phot.size]
        for sgn in (-1.0, 1.0):
            xp = x_phot + sgn * _STEP * probe
            n = h * w
            for i, (target, frames, mask_prev, mask_next) in enumerate(scales):
                f2 = dict(frames)
                f2["warped_prev"] = xp[2 * i * n : (2 * i + 1) * n].reshape(h, w)
                f2["warped_next"] = xp[(2 * i + 1) * n : (2 * i + 2) * n].reshape(h, w)
                if not np.array_equal(
                    _min_selection(target, f2, mask_prev, mask_next, cfg),
                    _min_selection(target, frames, mask_prev, mask_next, cfg),
                ):
                    return None

    def f(x_any):
        xp = x_any[: x_phot.size]
        ds = [
            x_any[x_phot.size + i * h * w : x_phot.size + (i + 1) * h * w].reshape(h, w)
            for i in range(2)
        ]
        return depth_loss(build_sets(xp), ds, image, cfg)

    return f, x, d


def _case_combined(rng):
    losses = rng.uniform(0.0, 2.0, size=5)
    s = rng.uniform(-1.0, 1.0, size=5)
    x = np.concatenate([losses, s])

    def f(x_any):
        return combined_loss(
            x_any[0], x_any[1], x_any[2], x_any[3], x_any[4], x_any[5:10]
        )

    return f, x, _unit(rng, 10)


CASE_BUILDERS = {
    "photometric": _case_photometric,
    "bootstrapped_ce": _case_bootstrapped_ce,
    "heatmap_mse": _case_heatmap_mse,
    "offset_l1": _case_offset_l1,
    "panoptic_combined": _case_panoptic,
    "min_reprojection_total": _case_masked_photometric,
    "smoothness": _case_smoothness,
    "depth_total": _case_depth_total,
    "uncertainty_combined": _case_combined,
}


def run_loss_check(
    name: str, trials: int = 100, seed: int = 0, tol: float = 1e-4
) -> dict:
    builder = CASE_BUILDERS[name]
    rng = np.random.default_rng(seed)
    max_err = 0.0
    done = 0
    while done < trials:
        case = None
        for _ in range(100):
            case = builder(rng)
            if case is not None:
                break
        if case is None:
            raise RuntimeError(f"could not build a stable case for {name}")
        f, x, d = case
        dual_d = directional_derivative(f, x, d)
        fd_d = finite_difference(f, x, d, step=_STEP)
        err = abs(dual_d - fd_d) / max(1.0, abs(fd_d))
        max_err = max(max_err, err)
        done += 1
    return {
        "loss": name,
        "trials": trials,
        "max_rel_err": max_err,
        "tolerance": tol,
        "passed": bool(max_err < tol),
    }


def run_suite(trials: int = 100, seed: int = 0, tol: float = 1e-4) -> list[dict]:
    return [
        run_loss_check(name, trials=trials, seed=seed + i, tol=tol)
        for i, name in enumerate(sorted(CASE_BUILDERS))
    ]
