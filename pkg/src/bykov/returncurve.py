"""Closed-form exit curve on the outgoing wall and its turning analysis.

A vertical segment beta_t(s) = (t, s) on the incoming wall is carried by the
composition of the two local maps and the disk shear to a curve
(x_w(s), y_w(s)) on the outgoing wall.  With the shear stretch
C(phi) = a^2 cos^2(phi) + sin^2(phi)/a^2 and the sheared angle Phi(phi)
unwound to the quarter turn containing phi, the curve is

    phi      = -g_v ln s + t + c2
    x_w(s)   = -g_w delta_v ln s - (g_w/2) ln C(phi) + Phi(phi) + c3 - g_w ln c1
    y_w(s)   = c4 c1^delta_w s^delta C(phi)^(delta_w/2)

Differentiating (Phi' = 1/C, C' = -2(a^2 - a^-2) sin phi cos phi) gives

    dx_w/ds  = -(1/s) [ g_w delta_v
                        + (g_v g_w (a^2 - a^-2) sin phi cos phi + g_v) / C(phi) ]

which vanishes exactly where the turning function

    A(phi)   = C_v a^2 cos^2 phi + (C_v/a^2) sin^2 phi
               + alpha_v (a^2 - a^-2) sin phi cos phi

crosses the level K = alpha_v E_w / alpha_w; indeed
sign(dx_w/ds) = sign(A(phi) - K) pointwise.  Turning points come in a
geometric sequence s_n = s_0 exp(-n pi / g_v) and satisfy the rotation
identity x_w(s_n) = x_w(s_0) + n pi (1 - gamma), which drives the density
and tangency analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .localmaps import BumpSpec, circle_dist, wrap_pi
from .params import DerivedConstants, SaddleParams, classify_region, derive_constants

__all__ = [
    "NoReversalsError",
    "ReturnCurveSample",
    "TurningExtrema",
    "ReversalSequence",
    "TangencyReport",
    "stretch_sq",
    "sheared_angle",
    "turning_function",
    "turning_level",
    "turning_gradient_form",
    "turning_extrema",
    "turning_extrema_closed_form",
    "turning_crossings",
    "curve_sample",
    "curve_arrays",
    "dxw_ds",
    "reversal_sequence",
    "reversal_angle_set",
    "rotation_identity_residual",
    "find_tangency",
]

TWO_PI = 2.0 * math.pi
S_UNDERFLOW = 1e-300


class NoReversalsError(ValueError):
    """Requested reversal-based construction on a parameter point without reversals."""


def stretch_sq(phi, a: float):
    """Squared radial stretch of a unit vector at angle phi under diag(a, 1/a)."""
    c = np.cos(phi)
    s = np.sin(phi)
    return (a * a) * c * c + (s * s) / (a * a)


def sheared_angle(phi, a: float):
    """Angle of (a cos phi, sin phi / a), unwound to the quarter turn containing phi.

    The shear preserves the open quadrants, so the image angle lies in the
    same interval [k pi/2, (k+1) pi/2] as phi; that pins the 2*pi branch.
    """
    arr = np.asarray(phi, dtype=float)
    k = np.floor(2.0 * arr / np.pi)
    base = np.arctan2(np.sin(arr) / a, a * np.cos(arr))
    out = base + TWO_PI * np.round(((k + 0.5) * (np.pi / 2.0) - base) / TWO_PI)
    return float(out) if out.ndim == 0 else out


def turning_function(phi, p: SaddleParams):
    """Function whose crossings of :func:`turning_level` mark the exit-curve turnings."""
    a = p.a
    c = np.cos(phi)
    s = np.sin(phi)
    return (
        p.C_v * a * a * c * c
        + (p.C_v / (a * a)) * s * s
        + p.alpha_v * (a * a - 1.0 / (a * a)) * s * c
    )


def turning_level(p: SaddleParams) -> float:
    """Crossing level K = alpha_v * E_w / alpha_w (equals C_v / gamma)."""
    return p.alpha_v * p.E_w / p.alpha_w


def turning_gradient_form(phi, p: SaddleParams):
    """Quadratic form proportional to the phi-derivative of the turning function."""
    return p.alpha_v * np.cos(2.0 * np.asarray(phi, dtype=float)) - p.C_v * np.sin(
        2.0 * np.asarray(phi, dtype=float)
    )


@dataclass(frozen=True)
class TurningExtrema:
    """Extrema of the turning function over one period [0, pi)."""

    a_min: float
    a_max: float
    phi_min: float
    phi_max: float
    method: str = "grid+refine"

    def to_dict(self) -> dict:
        return {
            "a_min": self.a_min,
            "a_max": self.a_max,
            "phi_min": self.phi_min,
            "phi_max": self.phi_max,
            "method": self.method,
        }


def _golden_refine(f, lo: float, hi: float, minimize: bool, tol: float = 1e-12) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    if not minimize:
        f1, f2 = -f1, -f2
    while hi - lo > tol:
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = f(x1) if minimize else -f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = f(x2) if minimize else -f(x2)
    return 0.5 * (lo + hi)


def turning_extrema(p: SaddleParams, n_grid: int = 100_001, residual_tol: float = 1e-8) -> TurningExtrema:
    """Global extrema of the turning function by dense grid plus golden-section refinement.

    The refined argmin/argmax must leave the gradient form residual below
    ``residual_tol`` (scaled); a violation indicates a broken refinement
    bracket and raises.
    """
    if p.a == 1.0:
        return TurningExtrema(a_min=p.C_v, a_max=p.C_v, phi_min=0.0, phi_max=0.0)
    grid = np.linspace(0.0, math.pi, n_grid)
    vals = turning_function(grid, p)
    i_min = int(np.argmin(vals))
    i_max = int(np.argmax(vals))
    step = math.pi / (n_grid - 1)

    def f(x: float) -> float:
        return float(turning_function(x, p))

    def polish(x: float) -> float:
        # value-based refinement saturates at sqrt(machine eps) around a
        # quadratic extremum; a bisection on the gradient form nails it
        half = 2.0 * step
        g_lo = float(turning_gradient_form(x - half, p))
        g_hi = float(turning_gradient_form(x + half, p))
        if (g_lo < 0.0) == (g_hi < 0.0):
            return x
        lo, hi = x - half, x + half
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            g_mid = float(turning_gradient_form(mid, p))
            if (g_lo < 0.0) != (g_mid < 0.0):
                hi = mid
            else:
                lo, g_lo = mid, g_mid
        return 0.5 * (lo + hi)

    phi_min = polish(_golden_refine(f, grid[i_min] - step, grid[i_min] + step, minimize=True))
    phi_max = polish(_golden_refine(f, grid[i_max] - step, grid[i_max] + step, minimize=False))
    a_min, a_max = f(phi_min), f(phi_max)
    guard = 1e-12 * max(1.0, abs(a_min), abs(a_max))
    if a_min > float(vals[i_min]) + guard or a_max < float(vals[i_max]) - guard:
        raise RuntimeError("extremum refinement escaped its bracketing interval")
    a_min = min(a_min, float(vals[i_min]))
    a_max = max(a_max, float(vals[i_max]))
    scale = max(p.alpha_v, p.C_v)
    for phi_star in (phi_min, phi_max):
        if abs(float(turning_gradient_form(phi_star, p))) > residual_tol * scale:
            raise RuntimeError(
                f"gradient-form residual too large at refined extremum phi={phi_star}"
            )
    return TurningExtrema(a_min=a_min, a_max=a_max, phi_min=phi_min % math.pi, phi_max=phi_max % math.pi)


def turning_extrema_closed_form(p: SaddleParams) -> tuple[float, float]:
    """Exact extrema from the harmonic form: mean -/+ amplitude.

    A(phi) = C_v (a^2 + a^-2)/2 + (a^2 - a^-2)/2 * (C_v cos 2phi + alpha_v sin 2phi)
    so the amplitude is (a^2 - a^-2)/2 * hypot(C_v, alpha_v).
    """
    a2 = p.a * p.a
    mean = p.C_v * (a2 + 1.0 / a2) / 2.0
    amp = 0.5 * (a2 - 1.0 / a2) * math.hypot(p.C_v, p.alpha_v)
    return mean - amp, mean + amp


def turning_crossings(p: SaddleParams, n_grid: int = 10_000, tol: float = 1e-13) -> list[float]:
    """Transversal roots of A(phi) = K in [0, pi), by sign-change bracketing and bisection.

    Returns an empty list when the level does not cross (outside or tangent
    within the grid resolution); at most two roots exist because A is a
    degree-two trigonometric polynomial.
    """
    level = turning_level(p)
    grid = np.linspace(0.0, math.pi, n_grid + 1)
    vals = np.asarray(turning_function(grid, p)) - level
    roots: list[float] = []
    sign = np.signbit(vals)
    change = np.nonzero(sign[:-1] != sign[1:])[0]
    for i in change:
        lo, hi = float(grid[i]), float(grid[i + 1])
        f_lo = float(vals[i])
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            f_mid = float(turning_function(mid, p)) - level
            if (f_lo < 0.0) != (f_mid < 0.0):
                hi = mid
            else:
                lo, f_lo = mid, f_mid
        roots.append(0.5 * (lo + hi))
    return sorted(r % math.pi for r in roots)


@dataclass(frozen=True)
class ReturnCurveSample:
    """One point of the exit curve, with the turning derivative attached."""

    s: float
    t: float
    phi: float
    x_w: float
    y_w: float
    dxw_ds: float

    @property
    def x_w_mod_2pi(self) -> float:
        return self.x_w % TWO_PI

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "t": self.t,
            "phi": self.phi,
            "x_w": self.x_w,
            "x_w_mod_2pi": self.x_w_mod_2pi,
            "y_w": self.y_w,
            "dxw_ds": self.dxw_ds,
        }


def curve_arrays(t: float, s, p: SaddleParams, k: DerivedConstants | None = None):
    """Vectorised exit-curve evaluation; returns (phi, x_w, y_w, dxw_ds) arrays.

    The height is computed in log space so that extremely small s degrades
    gracefully to a zero (not a NaN) height.
    """
    if k is None:
        k = derive_constants(p)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0):
        raise ValueError("curve parameter s must be strictly positive")
    ln_s = np.log(s_arr)
    phi = -k.g_v * ln_s + t + k.c2
    a = p.a
    shear2 = a * a - 1.0 / (a * a)
    c = stretch_sq(phi, a)
    arg = sheared_angle(phi, a)
    x_w = -k.g_w * k.delta_v * ln_s - 0.5 * k.g_w * np.log(c) + arg + k.c3 - k.g_w * math.log(k.c1)
    log_y = (
        math.log(k.c4)
        + k.delta_w * math.log(k.c1)
        + k.delta * ln_s
        + 0.5 * k.delta_w * np.log(c)
    )
    with np.errstate(under="ignore"):
        y_w = np.exp(log_y)
    sc = np.sin(phi) * np.cos(phi)
    dxw = -(k.g_w * k.delta_v + (k.g_v * k.g_w * shear2 * sc + k.g_v) / c) / s_arr
    return phi, x_w, y_w, dxw


def curve_sample(t: float, s: float, p: SaddleParams, k: DerivedConstants | None = None) -> ReturnCurveSample:
    """Image on the outgoing wall of the point (t, s) on the incoming wall."""
    if not 0.0 < s <= p.eps:
        raise ValueError(f"curve parameter s must lie in (0, eps], got {s}")
    phi, x_w, y_w, dxw = curve_arrays(t, s, p, k)
    return ReturnCurveSample(
        s=float(s), t=float(t), phi=float(phi), x_w=float(x_w), y_w=float(y_w), dxw_ds=float(dxw)
    )


def dxw_ds(t: float, s: float, p: SaddleParams, k: DerivedConstants | None = None) -> float:
    """Derivative of the exit angle along the vertical segment."""
    return float(curve_arrays(t, s, p, k)[3])


def _yw_from_log_s(log_s, phi, p: SaddleParams, k: DerivedConstants):
    """Exit heights from exact log-s values; underflow degrades to 0.0."""
    log_y = (
        math.log(k.c4)
        + k.delta_w * math.log(k.c1)
        + k.delta * np.asarray(log_s, dtype=float)
        + 0.5 * k.delta_w * np.log(np.asarray(stretch_sq(phi, p.a), dtype=float))
    )
    with np.errstate(under="ignore"):
        return np.exp(log_y)


def _xw_at_phi(phi_n: float, t: float, p: SaddleParams, k: DerivedConstants) -> float:
    """Exit angle at the curve parameter s where phi(s) = phi_n (any positive s)."""
    ln_s = (k.c2 + t - phi_n) / k.g_v
    a = p.a
    c = float(stretch_sq(phi_n, a))
    return (
        -k.g_w * k.delta_v * ln_s
        - 0.5 * k.g_w * math.log(c)
        + float(sheared_angle(phi_n, a))
        + k.c3
        - k.g_w * math.log(k.c1)
    )


@dataclass(frozen=True)
class ReversalSequence:
    """Turning points of the exit curve along one vertical segment.

    ``s_values`` stops at float underflow (1e-300); ``log_s_values`` is
    always exact.  ``x_values`` are the exit angles at the turning points,
    obtained from the rotation identity, and ``kinds`` labels each as a
    local maximum or minimum of the exit angle in s.
    """

    t: float
    s_values: np.ndarray
    log_s_values: np.ndarray
    phi_values: np.ndarray
    x_values: np.ndarray
    kinds: tuple[str, ...]
    reason: str | None = None
    inflection: bool = False

    def __len__(self) -> int:
        return len(self.s_values)


def _reversal_entries(
    t: float,
    n_max: int,
    p: SaddleParams,
    k: DerivedConstants,
    roots: list[float],
    stop_at_underflow: bool,
):
    """Shared enumeration of turning points phi_n = root + m*pi with s_n <= eps.

    The turning kind follows the crossing direction of the turning function:
    an upward crossing (positive gradient form) makes the exit angle switch
    from falling to rising as s decreases, i.e. a local maximum in s.
    """
    grad0 = float(turning_gradient_form(roots[0], p))
    kinds = ("maxima" if grad0 > 0 else "minima", "minima" if grad0 > 0 else "maxima")
    entries = []
    m = min(math.ceil((t - r) / math.pi) for r in roots)
    ln_floor = math.log(S_UNDERFLOW)
    while len(entries) < n_max:
        batch = sorted((r + m * math.pi, j) for j, r in enumerate(roots))
        for phi_n, j in batch:
            if phi_n < t:
                continue
            ln_s = (k.c2 + t - phi_n) / k.g_v
            if stop_at_underflow and ln_s < ln_floor:
                return entries
            entries.append((phi_n, ln_s, kinds[j]))
            if len(entries) >= n_max:
                break
        m += 1
    return entries


def _sequence_from_entries(t, p, k, entries, reason=None, inflection=False) -> ReversalSequence:
    if not entries:
        return ReversalSequence(
            t=t,
            s_values=np.empty(0),
            log_s_values=np.empty(0),
            phi_values=np.empty(0),
            x_values=np.empty(0),
            kinds=(),
            reason=reason,
            inflection=inflection,
        )
    phis = np.array([e[0] for e in entries])
    log_s = np.array([e[1] for e in entries])
    kinds = tuple(e[2] for e in entries)
    with np.errstate(under="ignore"):
        s_vals = np.exp(log_s)
    # exit angles via the rotation identity anchored at the first entry of
    # each parity class; direct evaluation would underflow in s
    x_vals = np.empty(len(entries))
    anchor: dict[int, tuple[float, float]] = {}
    for i, phi_n in enumerate(phis):
        parity = i % 2
        if parity not in anchor:
            anchor[parity] = (phi_n, _xw_at_phi(phi_n, t, p, k))
        phi_a, x_a = anchor[parity]
        m = round((phi_n - phi_a) / math.pi)
        x_vals[i] = x_a + m * math.pi * (1.0 - k.gamma)
    return ReversalSequence(
        t=t,
        s_values=s_vals,
        log_s_values=log_s,
        phi_values=phis,
        x_values=x_vals,
        kinds=kinds,
        reason=reason,
        inflection=inflection,
    )


def reversal_sequence(
    t: float,
    n_max: int,
    p: SaddleParams,
    rationality_tol: float = 1e-9,
    q_max: int = 10**6,
) -> ReversalSequence:
    """Turning points s_n of the exit curve, largest first, capped at underflow.

    Empty (with a reason) when the parameter point admits no reversals;
    a tangential crossing is reported as an inflection.
    """
    k = derive_constants(p)
    region = classify_region(p, rationality_tol=rationality_tol, q_max=q_max)
    if region.tag in ("NoReversal_aEq1", "OutsideB"):
        return _sequence_from_entries(t, p, k, [], reason=region.tag)
    if region.tag == "BoundaryB":
        return _sequence_from_entries(t, p, k, [], reason="BoundaryB", inflection=True)
    roots = turning_crossings(p)
    if len(roots) < 2:
        return _sequence_from_entries(t, p, k, [], reason="BoundaryB", inflection=True)
    entries = _reversal_entries(t, n_max, p, k, roots, stop_at_underflow=True)
    return _sequence_from_entries(t, p, k, entries)


def reversal_angle_set(t: float, n_max: int, p: SaddleParams) -> ReversalSequence:
    """Analytic continuation of the reversal sequence past s-underflow.

    The exit angles of the turning points obey the rotation identity
    exactly, so they stay computable long after the s-values themselves
    degrade to zero; ``log_s_values`` remains exact throughout.  Raises
    when no reversals exist.
    """
    k = derive_constants(p)
    roots = turning_crossings(p)
    if len(roots) < 2:
        raise NoReversalsError("parameter point has no transversal turning points")
    entries = _reversal_entries(t, n_max, p, k, roots, stop_at_underflow=False)
    return _sequence_from_entries(t, p, k, entries)


def rotation_identity_residual(s0: float, n: int, t: float, p: SaddleParams) -> float:
    """|x_w(s0 e^{-n pi/g_v}) - x_w(s0) - n pi (1 - gamma)|, both points evaluated directly."""
    k = derive_constants(p)
    if not 0.0 < s0 <= p.eps:
        raise ValueError(f"s0 must lie in (0, eps], got {s0}")
    s_n = s0 * math.exp(-n * math.pi / k.g_v)
    if not 0.0 < s_n <= p.eps:
        raise ValueError(f"shifted parameter {s_n} left (0, eps]")
    x0 = curve_sample(t, s0, p, k).x_w
    xn = curve_sample(t, s_n, p, k).x_w
    return abs(xn - x0 - n * math.pi * (1.0 - k.gamma))


@dataclass(frozen=True)
class TangencyReport:
    """Constructive tangency data: nearest reversal and the bump realising it."""

    x0: float
    t: float
    n_max: int
    n_best: int
    x_best: float
    log_s_best: float
    amplitude: float
    bump: BumpSpec
    region_tag: str
    warning: str | None
    history: tuple[tuple[int, float], ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "x0": self.x0,
            "t": self.t,
            "n_max": self.n_max,
            "n_best": self.n_best,
            "x_best": self.x_best,
            "log_s_best": self.log_s_best,
            "amplitude": self.amplitude,
            "bump": {
                "amplitude": self.bump.amplitude,
                "center": list(self.bump.center),
                "radius": self.bump.radius,
            },
            "region_tag": self.region_tag,
            "warning": self.warning,
            "history": [list(h) for h in self.history],
        }


def find_tangency(
    x0: float,
    t: float,
    n_max: int,
    p: SaddleParams,
    default_radius: float = 0.05,
) -> TangencyReport:
    """Nearest reversal to the stable-manifold trace and the bump moving the trace onto it.

    Scans the first ``n_max`` turning points, picks the one whose exit
    angle is closest to ``x0`` on the circle, and returns a compactly
    supported displacement of that exact amplitude whose support excludes
    the neighbouring turning points.  The recorded history of running
    minima shows how the distance shrinks as more turning points are
    admitted.
    """
    region = classify_region(p)
    warning = None
    if region.tag == "InteriorB_GammaRational":
        warning = "gamma is rational within tolerance; reversal angles form a finite set"
    elif region.tag not in ("DenseReversals_D",):
        # OutsideB / boundary / a=1 have no reversal points at all
        seq = reversal_sequence(t, 1, p)
        if len(seq) == 0:
            raise NoReversalsError(
                f"no reversal points available for tangency construction (region {region.tag})"
            )
    angles = reversal_angle_set(t, n_max, p)
    k = derive_constants(p)
    dist = np.abs(np.remainder(angles.x_values - x0 + math.pi, TWO_PI) - math.pi)
    best = int(np.argmin(dist))
    history = []
    running = math.inf
    for i, d in enumerate(dist):
        if d < running:
            running = float(d)
            history.append((i + 1, running))
    x_best = float(angles.x_values[best])
    signed = wrap_pi(x0 - x_best)
    # cylinder position of the chosen reversal point
    center_x = wrap_pi(x0 - signed)
    heights = _yw_from_log_s(angles.log_s_values, angles.phi_values, p, k)
    center_y = float(heights[best])
    # keep the support clear of the other turning points
    sep = math.inf
    for i in range(len(angles.x_values)):
        if i == best:
            continue
        gap = math.hypot(circle_dist(float(angles.x_values[i]), x_best), float(heights[i]) - center_y)
        sep = min(sep, gap)
    radius = max(min(default_radius, 0.45 * sep), 1e-12)
    bump = BumpSpec(amplitude=signed, center=(center_x, center_y), radius=radius)
    return TangencyReport(
        x0=x0,
        t=t,
        n_max=n_max,
        n_best=best,
        x_best=x_best,
        log_s_best=float(angles.log_s_values[best]),
        amplitude=abs(signed),
        bump=bump,
        region_tag=region.tag,
        warning=warning,
        history=tuple(history),
    )
