"""Shared array conventions and validation helpers.

Images, depth maps, heatmaps, offset fields and masks are plain numpy
arrays in row-major (row, col) layout:

  * intensity images: float64, (H, W) or (H, W, C), values nominally in [0, 1]
  * depth maps: float64, (H, W), meters, > 0 where valid (0 marks invalid)
  * heatmaps: float64, (H, W), values in [0, 1]
  * offset fields: float64, (H, W, 2), channels are (delta_row, delta_col)
  * masks: bool, (H, W)

Pixel (u, v) refers to the exact point (col=u, row=v); there is no +0.5
center offset anywhere.
"""

from __future__ import annotations

import numpy as np

# Coordinates this close to an image border still count as inside.  Keeps
# exact round trips (e.g. identity-pose warps) from losing border pixels to
# float roundoff.
BOUNDARY_TOL = 1e-9


def as_grid(a, name: str = "grid") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim not in (2, 3):
        raise ValueError(f"{name} must be (H, W) or (H, W, C), got shape {a.shape}")
    return a


def as_mask(m, name: str = "mask") -> np.ndarray:
    m = np.asarray(m)
    if m.dtype != bool:
        raise ValueError(f"{name} must be boolean, got dtype {m.dtype}")
    if m.ndim != 2:
        raise ValueError(f"{name} must be (H, W), got shape {m.shape}")
    return m


def require_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def require_same_hw(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"{what}: spatial shape mismatch {a.shape[:2]} vs {b.shape[:2]}")


def require_positive_depth(depth: np.ndarray, valid: np.ndarray | None = None) -> None:
    """Depth grids must be strictly positive wherever flagged valid."""
    if valid is None:
        bad = depth <= 0
    else:
        bad = valid & ~(depth > 0)
    if np.any(bad):
        raise ValueError("depth must be > 0 where valid")


def pixel_coords(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """(rows, cols) float64 grids of pixel coordinates."""
    rows, cols = np.meshgrid(
        np.arange(height, dtype=np.float64),
        np.arange(width, dtype=np.float64),
        indexing="ij",
    )
    return rows, cols
