from __future__ import annotations

import numpy as np
import pytest

from panodepth.camera import Intrinsics
from panodepth.panoptic_map import PanopticMap, relabel_instances_canonical
from panodepth.synthetic import CAR, ROAD, SceneSpec, default_taxonomy


@pytest.fixture
def small_intrinsics() -> Intrinsics:
    return Intrinsics(fx=50.0, fy=60.0, cx=31.5, cy=23.5, width=64, height=48)


@pytest.fixture
def plane_scene() -> SceneSpec:
    k = Intrinsics(fx=100.0, fy=100.0, cx=95.5, cy=63.5, width=192, height=128)
    return SceneSpec(intrinsics=k, camera_height_m=1.5)


def make_block_instances(
    shape: tuple[int, int],
    centers_half: list[tuple[int, int, int, int]],
    class_ids: list[int] | None = None,
):
    """Panoptic map of rectangular instances on road; returns (map, taxonomy).

    centers_half entries are (row, col, half_h, half_w).
    """
    tax = default_taxonomy()
    h, w = shape
    sem = np.full(shape, ROAD, dtype=np.int32)
    inst = np.zeros(shape, dtype=np.int32)
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    for i, (r, c, hh, hw) in enumerate(centers_half, start=1):
        m = (np.abs(rr - r) <= hh) & (np.abs(cc - c) <= hw)
        cls = CAR if class_ids is None else class_ids[i - 1]
        sem[m] = cls
        inst[m] = i
    inst = relabel_instances_canonical(sem, inst)
    return PanopticMap(sem, inst, tax), tax
