"""Homoscedastic uncertainty weighting of the five loss components.

Log-variances s_i rescale each fixed-weight term; the 0.5 * sum(s_i)
regularizer keeps them from running away.  The semantic term carries no
0.5 factor while all others do; that asymmetry is intentional here and is
reproduced exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual as dm

# Fixed per-term factors (seg, mse, l1, phot, smooth).
FIXED_WEIGHTS = (1.0, 200.0, 0.01, 1.0, 0.001)


@dataclass(frozen=True)
class UncertaintyParams:
    s: tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        s = tuple(float(v) for v in self.s)
        if len(s) != 5:
            raise ValueError("need exactly 5 log-variance parameters")
        if not all(np.isfinite(s)):
            raise ValueError("log-variances must be finite")
        object.__setattr__(self, "s", s)

    def to_dict(self) -> dict:
        return {"s": list(self.s)}

    @classmethod
    def from_dict(cls, d: dict) -> "UncertaintyParams":
        return cls(tuple(d["s"]))


def combined_loss(l_seg, l_mse, l_l1, l_phot, l_smooth, s):
    """Uncertainty-weighted total loss.

    s may be an UncertaintyParams, a plain 5-vector, or a Dual 5-vector
    (for gradient checks).  With all s_i = 0 this reduces to the
    fixed-weight sum (with the 0.5 factors on every term but the semantic
    one).
    """
    if isinstance(s, UncertaintyParams):
        s = np.asarray(s.s)
    for name, l in (("seg", l_seg), ("mse", l_mse), ("l1", l_l1), ("phot", l_phot), ("smooth", l_smooth)):
        v = dm.value(l)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"loss component {name} is not finite")
    sv = dm.value(s)
    if sv.shape != (5,):
        raise ValueError("s must have 5 entries")
    if not np.all(np.isfinite(sv)):
        raise ValueError("log-variances must be finite")
    total = (
        dm.exp(-s[0]) * l_seg
        + 0.5 * dm.exp(-s[1]) * (200.0 * l_mse)
        + 0.5 * dm.exp(-s[2]) * (0.01 * l_l1)
        + 0.5 * dm.exp(-s[3]) * l_phot
        + 0.5 * dm.exp(-s[4]) * (0.001 * l_smooth)
    )
    return total + 0.5 * dm.dsum(s)
