"""Panoptic quality and standard depth-evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .panoptic_map import PanopticMap


@dataclass(frozen=True)
class ClassPQ:
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    iou_sum: float


@dataclass(frozen=True)
class PQResult:
    pq: float
    sq: float
    rq: float
    per_class: dict[int, ClassPQ] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pq": self.pq,
            "sq": self.sq,
            "rq": self.rq,
            "per_class": {
                str(c): {
                    "pq": s.pq,
                    "sq": s.sq,
                    "rq": s.rq,
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                }
                for c, s in sorted(self.per_class.items())
            },
        }


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    rmse: float
    delta1: float
    delta2: float
    delta3: float

    def __post_init__(self):
        if not (self.delta1 <= self.delta2 <= self.delta3):
            raise ValueError("delta accuracies must be monotone")

    def to_dict(self) -> dict:
        return {
            "abs_rel": self.abs_rel,
            "rmse": self.rmse,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "delta3": self.delta3,
        }


def _segments(pmap: PanopticMap, not_void: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Segment key -> flat pixel indices (restricted to non-void GT pixels).

    Things are keyed (class, instance); stuff by (class, 0).  Thing-class
    pixels with instance 0 form an unassigned segment of their own.
    """
    sem = pmap.semantic.ravel()
    inst = pmap.instance.ravel()
    code = sem.astype(np.int64) * (inst.max(initial=0) + 1) + inst
    code = np.where(not_void.ravel(), code, -1)
    order = np.argsort(code, kind="stable")
    sorted_code = code[order]
    starts = np.flatnonzero(np.diff(sorted_code, prepend=-2))
    out = {}
    for s, e in zip(starts, list(starts[1:]) + [len(code)]):
        c = sorted_code[s]
        if c < 0:
            continue
        idx = order[s:e]
        out[(int(sem[idx[0]]), int(inst[idx[0]]))] = idx
    return out


def panoptic_quality(pred: PanopticMap, gt: PanopticMap) -> PQResult:
    """PQ per the standard definition: segments match iff IoU > 0.5.

    Void pixels in the ground truth are excluded from all intersections
    and areas; unmatched predictions with more than half their raw area on
    void do not count as false positives.  Per-class scores are averaged
    over the classes present in the ground truth.
    """
    if pred.shape != gt.shape:
        raise ValueError("maps must have the same shape")
    if pred.taxonomy != gt.taxonomy:
        raise ValueError("maps must share a taxonomy")
    void_id = gt.taxonomy.void_id
    not_void = (
        np.ones(gt.shape, dtype=bool) if void_id is None else gt.semantic != void_id
    )
    gt_segs = _segments(gt, not_void)
    pred_segs = _segments(pred, np.ones(pred.shape, dtype=bool))
    n_void = int((~not_void).sum())

    # Intersection table over non-void pixels via a joint code.
    pred_area = {k: int(np.count_nonzero(not_void.ravel()[v])) for k, v in pred_segs.items()}
    inter: dict[tuple[tuple[int, int], tuple[int, int]], int] = {}
    pred_key_of = {}
    flat_pred = np.zeros(pred.semantic.size, dtype=np.int64)
    for i, (k, idx) in enumerate(pred_segs.items(), start=1):
        flat_pred[idx] = i
        pred_key_of[i] = k
    for gk, gidx in gt_segs.items():
        labels, counts = np.unique(flat_pred[gidx], return_counts=True)
        for lbl, cnt in zip(labels, counts):
            if lbl > 0:
                inter[(pred_key_of[int(lbl)], gk)] = int(cnt)

    matched_pred, matched_gt = set(), set()
    per_class_acc: dict[int, dict] = {}

    def acc(cls: int) -> dict:
        return per_class_acc.setdefault(cls, {"tp": 0, "fp": 0, "fn": 0, "iou": 0.0})

    for (pk, gk), cnt in inter.items():
        if pk[0] != gk[0]:
            continue
        union = pred_area[pk] + len(gt_segs[gk]) - cnt
        iou = cnt / union if union > 0 else 0.0
        if iou > 0.5:
            a = acc(pk[0])
            a["tp"] += 1
            a["iou"] += iou
            matched_pred.add(pk)
            matched_gt.add(gk)
    for gk in gt_segs:
        acc(gk[0])  # mark class as present in GT
        if gk not in matched_gt:
            per_class_acc[gk[0]]["fn"] += 1
    for pk, idx in pred_segs.items():
        if pk in matched_pred:
            continue
        raw_area = len(idx)
        void_overlap = raw_area - pred_area[pk]
        if n_void > 0 and void_overlap / raw_area > 0.5:
            continue
        if pk[0] in per_class_acc:
            per_class_acc[pk[0]]["fp"] += 1
        # predictions of classes absent from GT are excluded from the average

    per_class = {}
    gt_classes = sorted({gk[0] for gk in gt_segs})
    for cls in gt_classes:
        a = per_class_acc[cls]
        denom = a["tp"] + 0.5 * a["fp"] + 0.5 * a["fn"]
        pq = a["iou"] / denom if denom > 0 else 0.0
        sq = a["iou"] / a["tp"] if a["tp"] > 0 else 0.0
        rq = a["tp"] / denom if denom > 0 else 0.0
        per_class[cls] = ClassPQ(pq, sq, rq, a["tp"], a["fp"], a["fn"], a["iou"])
    if gt_classes:
        mean = lambda f: float(np.mean([f(per_class[c]) for c in gt_classes]))
        result = PQResult(mean(lambda s: s.pq), mean(lambda s: s.sq), mean(lambda s: s.rq), per_class)
    else:
        result = PQResult(0.0, 0.0, 0.0, {})
    return result


def depth_metrics(
    pred: np.ndarray,
    gt: np.ndarray,
    valid: np.ndarray,
    cap: float = 80.0,
    pred_floor: float = 1e-3,
) -> DepthMetrics:
    """Absolute-relative error, RMSE and delta accuracies over valid pixels.

    Ground truth beyond the cap is discarded; predictions are clamped to
    [pred_floor, cap].  Delta accuracies use a strict inequality
    max(p/g, g/p) < 1.25^k.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape != valid.shape:
        raise ValueError("pred, gt and valid must share a shape")
    keep = valid & (gt > 0) & (gt <= cap)
    if not np.any(keep):
        raise ValueError("no valid pixels to evaluate")
    p = np.clip(pred[keep], pred_floor, cap)
    g = gt[keep]
    abs_rel = float(np.mean(np.abs(p - g) / g))
    rmse = float(np.sqrt(np.mean((p - g) ** 2)))
    ratio = np.maximum(p / g, g / p)
    deltas = [float(np.mean(ratio < 1.25**k)) for k in (1, 2, 3)]
    return DepthMetrics(abs_rel, rmse, *deltas)
