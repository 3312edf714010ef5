"""Command-line pipelines over files.

Every subcommand reads its inputs from a JSON config (--config), writes
artifacts under --out, and emits a JSON report on stdout; --pretty swaps
the stdout report for a human-readable table.  Reports also land in
<out>/report.json when --out is given.  Exit codes: 0 success, 1
computation/input error (single-line diagnostic on stderr), 2 usage
error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import fileio
from .camera import Intrinsics, PoseSE3, warp_frame
from .depth_loss import (
    PhotometricConfig,
    ReprojectionSet,
    masked_photometric_loss,
    smoothness_loss,
)
from .gradsuite import run_suite
from .metrics import depth_metrics, panoptic_quality
from .panoptic_loss import (
    BootstrapConfig,
    bootstrapped_ce,
    encode_targets,
    heatmap_mse,
    offset_l1,
    panoptic_loss,
    save_targets,
    unpack_offsets,
)
from .panoptic_map import ClassTaxonomy, PanopticMap, photometric_exclusion_mask, thing_mask
from .postprocess import group_instances, keypoint_nms, majority_vote_fusion
from .scaling import (
    CameraRig,
    ScaleUnavailableError,
    camera_heights,
    ground_mask,
    project_labeled,
    scale_depth,
    scale_factor,
    surface_normals,
)
from .synthetic import SceneSpec, render, render_pair
from .weighting import UncertaintyParams, combined_loss


def _load_config(path) -> dict:
    cfg = fileio.read_json(path)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    return cfg


def _to_u8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)


def _load_panoptic(sem_path, inst_path, taxonomy: ClassTaxonomy) -> PanopticMap:
    semantic = fileio.read_pgm(sem_path).astype(np.int32)
    if inst_path is None:
        instance = np.zeros_like(semantic)
    else:
        instance = fileio.read_pgm(inst_path).astype(np.int32)
    return PanopticMap(semantic, instance, taxonomy)


def _write_frame(out: Path, prefix: str, image, depth, pmap) -> dict:
    paths = {}

    def put(name, fname):
        paths[name] = str(out / fname)
        return paths[name]

    fileio.write_pfm(put(f"{prefix}image", f"{prefix}image.pfm"), image)
    fileio.write_pgm8(put(f"{prefix}preview", f"{prefix}image.pgm"), _to_u8(image))
    fileio.write_pfm(put(f"{prefix}depth", f"{prefix}depth.pfm"), depth)
    fileio.write_pgm16(
        put(f"{prefix}semantic", f"{prefix}semantic.pgm"), pmap.semantic.astype(np.uint16)
    )
    fileio.write_pgm16(
        put(f"{prefix}instance", f"{prefix}instance.pgm"), pmap.instance.astype(np.uint16)
    )
    return paths


def _cmd_synth(cfg: dict, out: Path | None, seed: int) -> dict:
    if out is None:
        raise ValueError("synth requires --out")
    spec = SceneSpec.from_dict(cfg)
    pose = PoseSE3.from_dict(cfg["pose"]) if "pose" in cfg else PoseSE3.identity()
    outputs = {}
    if "relative_pose" in cfg:
        relative = PoseSE3.from_dict(cfg["relative_pose"])
        frame_t, frame_s, relative = render_pair(spec, pose, relative, seed=seed)
        outputs.update(_write_frame(out, "", *frame_t))
        outputs.update(_write_frame(out, "ctx_", *frame_s))
        outputs["relative_pose"] = str(out / "relative_pose.json")
        fileio.write_json(outputs["relative_pose"], relative.to_dict())
    else:
        frame_t = render(spec, pose, seed=seed)
        outputs.update(_write_frame(out, "", *frame_t))
    if cfg.get("encode_targets"):
        targets = encode_targets(frame_t[2], sigma=float(cfg.get("sigma_px", 8.0)))
        outputs.update(save_targets(out, targets, spec.taxonomy))
    outputs["intrinsics"] = str(out / "intrinsics.json")
    fileio.write_json(outputs["intrinsics"], spec.intrinsics.to_dict())
    outputs["taxonomy"] = str(out / "taxonomy.json")
    fileio.write_json(outputs["taxonomy"], spec.taxonomy.to_dict())
    outputs["pose"] = str(out / "pose.json")
    fileio.write_json(outputs["pose"], pose.to_dict())
    return {"command": "synth", "seed": seed, "outputs": outputs}


def _cmd_pipeline(cfg: dict, out: Path | None, seed: int) -> dict:
    if out is None:
        raise ValueError("pipeline requires --out")
    taxonomy = ClassTaxonomy.from_dict(fileio.read_json(cfg["taxonomy"]))
    k = Intrinsics.from_dict(fileio.read_json(cfg["intrinsics"]))
    heatmap = fileio.read_pfm(cfg["heatmap"])
    offsets = unpack_offsets(fileio.read_pfm(cfg["offsets"]))
    semantic = fileio.read_pgm(cfg["semantic"]).astype(np.int32)
    d_rel = fileio.read_pfm(cfg["depth"])
    rig = CameraRig(float(cfg["camera_height_m"]))
    kernel = int(cfg.get("nms_kernel", 7))
    threshold = float(cfg.get("nms_threshold", 0.3))

    t0 = time.perf_counter()
    keypoints = keypoint_nms(heatmap, kernel=kernel, threshold=threshold)
    t1 = time.perf_counter()
    instance_grid = group_instances(keypoints, offsets, thing_mask(semantic, taxonomy))
    t2 = time.perf_counter()
    pmap = majority_vote_fusion(instance_grid, semantic, taxonomy)
    t3 = time.perf_counter()

    from .camera import backproject

    points = backproject(d_rel, k)
    normals, normals_valid = surface_normals(points)
    heights = camera_heights(points, normals, normals_valid, ground_mask(pmap))
    factor = scale_factor(rig, heights)
    d_abs = scale_depth(d_rel, factor)

    excluded = cfg.get("excluded_classes")
    if excluded is None:
        excluded = [c for c in (taxonomy.sky_id, taxonomy.ego_car_id, taxonomy.void_id) if c is not None]
    cloud = project_labeled(pmap, d_abs, k, excluded=set(int(c) for c in excluded))

    outputs = {
        "fused_semantic": str(out / "fused_semantic.pgm"),
        "fused_instance": str(out / "fused_instance.pgm"),
        "depth_abs": str(out / "depth_abs.pfm"),
        "cloud": str(out / "cloud.ply"),
    }
    fileio.write_pgm16(outputs["fused_semantic"], pmap.semantic.astype(np.uint16))
    fileio.write_pgm16(outputs["fused_instance"], pmap.instance.astype(np.uint16))
    fileio.write_pfm(outputs["depth_abs"], d_abs)
    fileio.write_ply(
        outputs["cloud"], cloud, scale_factor=factor, camera_height_m=rig.height_m
    )
    return {
        "command": "pipeline",
        "scale_factor": factor,
        "median_height_m": rig.height_m / factor,
        "num_keypoints": len(keypoints),
        "num_instances": pmap.num_instances(),
        "num_points": len(cloud),
        "timings_ms": {
            "nms": (t1 - t0) * 1e3,
            "grouping": (t2 - t1) * 1e3,
            "fusion": (t3 - t2) * 1e3,
            "total_postprocess": (t3 - t0) * 1e3,
        },
        "outputs": outputs,
    }


def _cmd_scale(cfg: dict, out: Path | None, seed: int) -> dict:
    taxonomy = ClassTaxonomy.from_dict(fileio.read_json(cfg["taxonomy"]))
    k = Intrinsics.from_dict(fileio.read_json(cfg["intrinsics"]))
    pmap = _load_panoptic(cfg["semantic"], cfg.get("instance"), taxonomy)
    d_rel = fileio.read_pfm(cfg["depth"])
    rig = CameraRig(float(cfg["camera_height_m"]))

    from .camera import backproject

    points = backproject(d_rel, k)
    normals, normals_valid = surface_normals(points)
    heights = camera_heights(
        points,
        normals,
        normals_valid,
        ground_mask(pmap),
        use_ideal_normal=bool(cfg.get("use_ideal_normal", False)),
    )
    factor = scale_factor(rig, heights)
    return {
        "command": "scale",
        "scale_factor": factor,
        "median_height_m": float(np.median(heights)),
        "num_heights": int(heights.size),
    }


def _cmd_losses(cfg: dict, out: Path | None, seed: int) -> dict:
    taxonomy = ClassTaxonomy.from_dict(fileio.read_json(cfg["taxonomy"]))
    k = Intrinsics.from_dict(fileio.read_json(cfg["intrinsics"]))
    pcfg = PhotometricConfig.from_dict(cfg.get("photometric", {}))
    bcfg = BootstrapConfig.from_dict(cfg.get("bootstrap", {}))
    target = fileio.read_pfm(cfg["frames"]["target"])
    prev = fileio.read_pfm(cfg["frames"]["prev"])
    nxt = fileio.read_pfm(cfg["frames"]["next"])
    depths = [fileio.read_pfm(p) for p in cfg["depths"]]
    pose_prev = PoseSE3.from_dict(fileio.read_json(cfg["pose_prev"]))
    pose_next = PoseSE3.from_dict(fileio.read_json(cfg["pose_next"]))
    gt = _load_panoptic(
        cfg["panoptic_gt"]["semantic"], cfg["panoptic_gt"].get("instance"), taxonomy
    )
    exclusion = photometric_exclusion_mask(gt)

    sets = []
    for d in depths:
        warped_prev, mask_prev = warp_frame(prev, d, pose_prev, k)
        warped_next, mask_next = warp_frame(nxt, d, pose_next, k)
        sets.append(
            ReprojectionSet(
                target=target,
                warped_prev=warped_prev,
                warped_next=warped_next,
                mask_prev=mask_prev,
                mask_next=mask_next,
                prev=prev,
                next=nxt,
                exclusion=exclusion,
            )
        )
    l_phot = float(masked_photometric_loss(sets, pcfg))
    l_smooth = float(smoothness_loss(depths, target))
    l_depth = l_phot + 0.001 * l_smooth

    targets = encode_targets(gt, sigma=float(cfg.get("sigma_px", 8.0)), cfg=bcfg)
    probs = np.stack([fileio.read_pfm(p) for p in cfg["pred"]["probabilities"]], axis=-1)
    probs = probs / probs.sum(axis=-1, keepdims=True)  # undo float32 file rounding
    pred_heatmap = fileio.read_pfm(cfg["pred"]["heatmap"])
    pred_offsets = unpack_offsets(fileio.read_pfm(cfg["pred"]["offsets"]))
    l_seg = float(
        bootstrapped_ce(
            probs, targets.semantic, targets.weights, bcfg, ignore_class=taxonomy.void_id
        )
    )
    l_mse = float(heatmap_mse(pred_heatmap, targets.heatmap))
    l_l1 = float(offset_l1(pred_offsets, targets.offsets, targets.things))
    l_pan = float(panoptic_loss(l_seg, l_mse, l_l1))

    s = UncertaintyParams.from_dict(cfg["uncertainty"]) if "uncertainty" in cfg else UncertaintyParams()
    l_comb = float(combined_loss(l_seg, l_mse, l_l1, l_phot, l_smooth, s))
    return {
        "command": "losses",
        "losses": {
            "seg": l_seg,
            "mse": l_mse,
            "l1": l_l1,
            "panoptic": l_pan,
            "photometric": l_phot,
            "smoothness": l_smooth,
            "depth": l_depth,
            "combined": l_comb,
        },
        "s": list(s.s),
    }


def _cmd_eval_pq(cfg: dict, out: Path | None, seed: int) -> dict:
    taxonomy = ClassTaxonomy.from_dict(fileio.read_json(cfg["taxonomy"]))
    pred = _load_panoptic(cfg["pred"]["semantic"], cfg["pred"].get("instance"), taxonomy)
    gt = _load_panoptic(cfg["gt"]["semantic"], cfg["gt"].get("instance"), taxonomy)
    result = panoptic_quality(pred, gt)
    return {"command": "eval-pq", **result.to_dict()}


def _cmd_eval_depth(cfg: dict, out: Path | None, seed: int) -> dict:
    pred = fileio.read_pfm(cfg["pred"])
    gt = fileio.read_pfm(cfg["gt"])
    if "valid" in cfg:
        valid = fileio.read_pgm(cfg["valid"]) > 0
    else:
        valid = gt > 0
    m = depth_metrics(pred, gt, valid, cap=float(cfg.get("cap_m", 80.0)))
    return {"command": "eval-depth", "metrics": m.to_dict()}


def _cmd_gradcheck(cfg: dict, out: Path | None, seed: int) -> dict:
    results = run_suite(
        trials=int(cfg.get("trials", 100)),
        seed=seed,
        tol=float(cfg.get("tolerance", 1e-4)),
    )
    all_passed = all(r["passed"] for r in results)
    if not all_passed:
        worst = max(results, key=lambda r: r["max_rel_err"])
        raise ValueError(
            f"gradient check failed: {worst['loss']} max rel err {worst['max_rel_err']:.3e}"
        )
    return {"command": "gradcheck", "all_passed": all_passed, "results": results}


_HANDLERS = {
    "synth": _cmd_synth,
    "pipeline": _cmd_pipeline,
    "scale": _cmd_scale,
    "losses": _cmd_losses,
    "eval-pq": _cmd_eval_pq,
    "eval-depth": _cmd_eval_depth,
    "gradcheck": _cmd_gradcheck,
}


def _pretty(report: dict) -> str:
    rows = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for key in obj:
                walk(f"{prefix}{key}.", obj[key])
        elif isinstance(obj, float):
            rows.append((prefix[:-1], f"{obj:.6f}"))
        else:
            rows.append((prefix[:-1], str(obj)))

    walk("", report)
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {val}" for name, val in rows)


def dispatch(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="panodepth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config with input paths")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--pretty", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        cfg = _load_config(args.config) if args.config else {}
        out = None
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
        report = _HANDLERS[args.command](cfg, out, args.seed)
        text = json.dumps(report, indent=2, sort_keys=True)
        if out is not None:
            (out / "report.json").write_text(text + "\n")
        print(_pretty(report) if args.pretty else text)
        return 0
    except (
        ValueError,
        KeyError,
        TypeError,
        OSError,
        ScaleUnavailableError,
        json.JSONDecodeError,
    ) as e:
        kind = type(e).__name__
        print(f"panodepth: error ({kind}): {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
