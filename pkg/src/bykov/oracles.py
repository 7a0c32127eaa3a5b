"""Independent oracles: map compositions, flight-time checks, pulse replay.

Everything here deliberately avoids the closed-form shortcuts of
:mod:`bykov.returncurve`; the exit curve is rebuilt step by step through the
elementary maps so the two routes can be compared against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .localmaps import (
    IN_V,
    OUT_W,
    BumpSpec,
    WallPoint,
    circle_dist,
    phi_v,
    phi_w,
    polar_rect,
    psi_vw,
    psi_wv,
    rect_polar,
)
from .params import SaddleParams, derive_constants

__all__ = ["eta_composed", "composed_return", "PulseReplay", "replay_pulse"]


def eta_composed(t: float, s: float, p: SaddleParams) -> tuple[float, float]:
    """Exit-wall image of (t, s) built through the elementary maps.

    The angle branch after the shear is resolved with the pre-shear angle as
    hint: the shear maps each open quadrant to itself, so the unwound image
    angle stays within a quarter turn of the input.
    """
    k = derive_constants(p)
    disk = phi_v(WallPoint(section=IN_V, x=t, y=s), k)
    sheared = psi_vw(polar_rect(disk), p.a)
    unwound = rect_polar(sheared, branch_hint=disk.phi)
    out = phi_w(unwound, k)
    return out.x, out.y


def composed_return(point: WallPoint, p: SaddleParams, bump: BumpSpec | None = None) -> WallPoint:
    """First-return image built through the elementary maps only."""
    x_w, y_w = eta_composed(point.x, point.y, p)
    return psi_wv(WallPoint(section=OUT_W, x=x_w, y=y_w), bump)


@dataclass(frozen=True)
class PulseReplay:
    """Forward replay of a candidate multi-pulse connection."""

    s0: float
    out_w_crossings: int
    residual: float
    heights: tuple[float, ...]


def replay_pulse(s0: float, n: int, p: SaddleParams, x0: float = 0.0) -> PulseReplay:
    """Follow beta(s0) through n-1 exit-wall crossings and measure the final miss.

    A genuine n-pulse connection crosses the exit wall n times in total: the
    first crossing happens on the local unstable manifold itself (height
    zero), the remaining n-1 are produced by loops around the cycle, and at
    the last one the angle must agree with the stable-manifold trace x0 on
    the circle.  Raises if an intermediate return leaves the section.
    """
    if n < 2:
        raise ValueError(f"pulse count must be at least 2, got {n}")
    point = WallPoint(section=IN_V, x=0.0, y=s0)
    heights = []
    x_w = y_w = math.nan
    for _ in range(n - 1):
        x_w, y_w = eta_composed(point.x, point.y, p)
        heights.append(y_w)
        point = psi_wv(WallPoint(section=OUT_W, x=x_w, y=y_w))
        if not 0.0 < point.y <= p.eps and len(heights) < n - 1:
            raise ValueError(
                f"pulse replay left the section after crossing {len(heights)}: height {point.y}"
            )
    return PulseReplay(
        s0=s0,
        out_w_crossings=1 + len(heights),
        residual=circle_dist(x_w, x0),
        heights=tuple(heights),
    )
