"""Panoptic map container and class taxonomy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ClassTaxonomy:
    """Stuff/thing split plus the special classes the pipeline cares about.

    road_id drives ground-point selection, sky_id/ego_car_id are excluded
    from 3D projection and the photometric loss, void_id marks ignore
    pixels for losses and evaluation.
    """

    thing_ids: tuple[int, ...]
    stuff_ids: tuple[int, ...]
    road_id: int | None = None
    sky_id: int | None = None
    ego_car_id: int | None = None
    void_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "thing_ids", tuple(int(i) for i in self.thing_ids))
        object.__setattr__(self, "stuff_ids", tuple(int(i) for i in self.stuff_ids))
        overlap = set(self.thing_ids) & set(self.stuff_ids)
        if overlap:
            raise ValueError(f"classes cannot be both thing and stuff: {sorted(overlap)}")

    def is_thing(self, class_id: int) -> bool:
        return class_id in self.thing_ids

    def to_dict(self) -> dict:
        return {
            "thing_ids": list(self.thing_ids),
            "stuff_ids": list(self.stuff_ids),
            "road_id": self.road_id,
            "sky_id": self.sky_id,
            "ego_car_id": self.ego_car_id,
            "void_id": self.void_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassTaxonomy":
        return cls(
            thing_ids=tuple(d["thing_ids"]),
            stuff_ids=tuple(d["stuff_ids"]),
            road_id=d.get("road_id"),
            sky_id=d.get("sky_id"),
            ego_car_id=d.get("ego_car_id"),
            void_id=d.get("void_id"),
        )


@dataclass(frozen=True)
class PanopticMap:
    """Per-pixel (semantic class id, instance id); instance 0 means stuff."""

    semantic: np.ndarray  # (H, W) integer class ids
    instance: np.ndarray  # (H, W) integer ids, 0 on stuff pixels
    taxonomy: ClassTaxonomy

    def __post_init__(self):
        sem = np.ascontiguousarray(np.asarray(self.semantic, dtype=np.int32))
        inst = np.ascontiguousarray(np.asarray(self.instance, dtype=np.int32))
        if sem.ndim != 2 or sem.shape != inst.shape:
            raise ValueError(f"inconsistent map shapes {sem.shape} / {inst.shape}")
        if inst.min(initial=0) < 0:
            raise ValueError("instance ids must be >= 0")
        on_instance = inst > 0
        if np.any(on_instance & ~np.isin(sem, self.taxonomy.thing_ids)):
            raise ValueError("instance ids > 0 are only allowed on thing-class pixels")
        ids = np.unique(inst[on_instance])
        if ids.size and (ids[0] != 1 or ids[-1] != ids.size):
            raise ValueError("instance ids must be dense 1..M")
        object.__setattr__(self, "semantic", sem)
        object.__setattr__(self, "instance", inst)

    @property
    def shape(self) -> tuple[int, int]:
        return self.semantic.shape

    def num_instances(self) -> int:
        return int(self.instance.max(initial=0))


def relabel_instances_canonical(
    semantic: np.ndarray, instance: np.ndarray
) -> np.ndarray:
    """Renumber instance ids densely 1..M by first raster occurrence."""
    instance = np.asarray(instance)
    flat = instance.ravel()
    out = np.zeros_like(flat)
    ids, first = np.unique(flat, return_index=True)
    order = [i for _, i in sorted((first[k], ids[k]) for k in range(len(ids)) if ids[k] > 0)]
    lut = {old: new + 1 for new, old in enumerate(order)}
    for old, new in lut.items():
        out[flat == old] = new
    return out.reshape(instance.shape)


def thing_mask(semantic: np.ndarray, taxonomy: ClassTaxonomy) -> np.ndarray:
    return np.isin(np.asarray(semantic), taxonomy.thing_ids)


def photometric_exclusion_mask(pmap: PanopticMap) -> np.ndarray:
    """Pixels to drop from photometric losses: sky, ego-car and void."""
    drop = [
        c
        for c in (pmap.taxonomy.sky_id, pmap.taxonomy.ego_car_id, pmap.taxonomy.void_id)
        if c is not None
    ]
    return np.isin(pmap.semantic, drop)
