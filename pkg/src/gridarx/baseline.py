"""Voltage limit-checking, the conventional comparator method.

A stateless window test on the measured dq voltage: each axis must stay
strictly inside its user-defined band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VoltageLimits:
    vd_min: float
    vd_max: float
    vq_min: float
    vq_max: float

    def __post_init__(self):
        if not (self.vd_min < self.vd_max and self.vq_min < self.vq_max):
            raise ValueError("each axis needs min < max")

    @classmethod
    def around(cls, v_dq, fraction: float = 0.1) -> "VoltageLimits":
        """Symmetric band of +/- fraction (of the base, 1 p.u.) per axis."""
        v_dq = np.asarray(v_dq, float)
        return cls(
            vd_min=float(v_dq[0] - fraction),
            vd_max=float(v_dq[0] + fraction),
            vq_min=float(v_dq[1] - fraction),
            vq_max=float(v_dq[1] + fraction),
        )


@dataclass(frozen=True)
class Violation:
    axis: str  # "d" | "q"
    side: str  # "lower" | "upper"


def limit_check(v_dq, limits: VoltageLimits):
    """Strict-inequality window test; None means within limits.

    Boundary values count as violations (the band is open).
    """
    v_dq = np.asarray(v_dq, float)
    if not np.all(np.isfinite(v_dq)):
        raise ValueError("non-finite voltage sample")
    if v_dq[0] <= limits.vd_min:
        return Violation("d", "lower")
    if v_dq[0] >= limits.vd_max:
        return Violation("d", "upper")
    if v_dq[1] <= limits.vq_min:
        return Violation("q", "lower")
    if v_dq[1] >= limits.vq_max:
        return Violation("q", "upper")
    return None
