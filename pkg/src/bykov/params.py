"""Model parameters, derived constants and parameter-region classification.

The model near the cycle is fully determined by the six linearisation rates
at the two saddle-foci, the transition shear ``a`` and the cross-section
radius ``eps``.  Reversals of the exit curve exist exactly when the crossing
level K = alpha_v * E_w / alpha_w lies between the extrema of the turning
function (see :mod:`bykov.returncurve`); this module classifies a parameter
point accordingly and decides rationality of the twist ratio gamma with a
continued-fraction surrogate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

__all__ = [
    "ParameterError",
    "SaddleParams",
    "DerivedConstants",
    "GammaRationality",
    "Region",
    "REGION_TAGS",
    "derive_constants",
    "is_gamma_rational",
    "classify_region",
    "load_saddle_params",
]

SADDLE_FIELDS = ("alpha_v", "C_v", "E_v", "alpha_w", "C_w", "E_w", "a", "eps")

REGION_TAGS = (
    "NoReversal_aEq1",
    "OutsideB",
    "BoundaryB",
    "InteriorB_GammaRational",
    "DenseReversals_D",
)


class ParameterError(ValueError):
    """Invalid model parameter; the message names the offending field."""


@dataclass(frozen=True)
class SaddleParams:
    """Linearisation rates at the two nodes plus shear and section size.

    ``alpha_*`` are angular frequencies, ``C_*`` contraction rates and
    ``E_*`` expansion rates (all strictly positive).  ``a >= 1`` is the
    transition shear between the two disk sections and ``eps`` the
    radius/half-height of the cylindrical section neighbourhoods.
    """

    alpha_v: float
    C_v: float
    E_v: float
    alpha_w: float
    C_w: float
    E_w: float
    a: float = 2.0
    eps: float = 0.5

    def __post_init__(self) -> None:
        for name in ("alpha_v", "C_v", "E_v", "alpha_w", "C_w", "E_w"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ParameterError(f"{name} must be a finite number, got {value!r}")
            if value <= 0:
                raise ParameterError(f"{name} must be strictly positive, got {value}")
        if not math.isfinite(self.a) or self.a < 1.0:
            raise ParameterError(f"a must satisfy a >= 1, got {self.a}")
        if not math.isfinite(self.eps) or self.eps <= 0:
            raise ParameterError(f"eps must be strictly positive, got {self.eps}")

    def to_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in SADDLE_FIELDS}


@dataclass(frozen=True)
class DerivedConstants:
    """All constants the closed-form local and composed maps need."""

    delta_v: float
    delta_w: float
    delta: float
    g_v: float
    g_w: float
    gamma: float
    c1: float
    c2: float
    c3: float
    c4: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def derive_constants(p: SaddleParams) -> DerivedConstants:
    """Compute saddle indices, twist rates and section constants.

    Pure function of the validated parameters.  ``g_w`` is negative: the
    two nodes have different chirality, so the angular rate at the second
    node enters with the opposite sign.
    """
    if not isinstance(p, SaddleParams):
        p = SaddleParams(**dict(p))
    delta_v = p.C_v / p.E_v
    delta_w = p.C_w / p.E_w
    log_eps = math.log(p.eps)
    return DerivedConstants(
        delta_v=delta_v,
        delta_w=delta_w,
        delta=delta_v * delta_w,
        g_v=p.alpha_v / p.E_v,
        g_w=-p.alpha_w / p.E_w,
        gamma=(p.alpha_w / p.alpha_v) * (p.C_v / p.E_w),
        c1=p.eps ** (1.0 - delta_v),
        c2=(p.alpha_v / p.E_v) * log_eps,
        c3=(-p.alpha_w / p.E_w) * log_eps,
        c4=p.eps ** (1.0 - delta_w),
    )


@dataclass(frozen=True)
class GammaRationality:
    """Best rational approximation of gamma with bounded denominator."""

    is_rational_within_tol: bool
    p: int
    q: int
    error: float
    tol: float
    q_max: int

    def to_dict(self) -> dict:
        return asdict(self)


def is_gamma_rational(gamma: float, tol: float = 1e-9, q_max: int = 10**6) -> GammaRationality:
    """Continued-fraction surrogate for the undecidable irrationality test.

    Walks the convergents p/q of gamma with q <= q_max and reports the best
    one; gamma counts as rational when the best error is below ``tol``.
    """
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    if q_max < 1:
        raise ParameterError(f"q_max must be >= 1, got {q_max}")
    p_prev, q_prev = 1, 0
    p_cur, q_cur = int(math.floor(gamma)), 1
    best_p, best_q = p_cur, q_cur
    best_err = abs(gamma - p_cur)
    x = gamma - math.floor(gamma)
    for _ in range(64):
        if best_err == 0.0 or x < 1e-18:
            break
        x = 1.0 / x
        digit = int(math.floor(x))
        x -= digit
        p_next = digit * p_cur + p_prev
        q_next = digit * q_cur + q_prev
        if q_next > q_max:
            break
        err = abs(gamma - p_next / q_next)
        if err < best_err:
            best_err, best_p, best_q = err, p_next, q_next
        p_prev, q_prev, p_cur, q_cur = p_cur, q_cur, p_next, q_next
    return GammaRationality(
        is_rational_within_tol=bool(best_err < tol),
        p=best_p,
        q=best_q,
        error=best_err,
        tol=tol,
        q_max=q_max,
    )


@dataclass(frozen=True)
class Region:
    """Classification of a parameter point against the reversal sets.

    ``a_min``/``a_max`` are the global extrema of the turning function over
    one period and ``k`` the crossing level alpha_v * E_w / alpha_w.
    """

    tag: str
    a_min: float
    a_max: float
    k: float
    gamma_rationality: GammaRationality

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gamma_rationality"] = self.gamma_rationality.to_dict()
        return d


def classify_region(
    p: SaddleParams,
    rationality_tol: float = 1e-9,
    q_max: int = 10**6,
    boundary_tol: float = 1e-9,
) -> Region:
    """Place the parameter point in one of the five reversal regions.

    Membership is decided by the extrema condition a_min <= K <= a_max with
    the extrema computed numerically (grid plus refinement); shear a = 1
    short-circuits to the no-reversal tag because the exit coordinates are
    then monotone regardless of K.
    """
    from .returncurve import turning_extrema, turning_level

    k = derive_constants(p)
    rationality = is_gamma_rational(k.gamma, tol=rationality_tol, q_max=q_max)
    ext = turning_extrema(p)
    level = turning_level(p)
    if p.a == 1.0:
        tag = "NoReversal_aEq1"
    elif min(abs(level - ext.a_min), abs(level - ext.a_max)) < boundary_tol:
        tag = "BoundaryB"
    elif level < ext.a_min or level > ext.a_max:
        tag = "OutsideB"
    elif rationality.is_rational_within_tol:
        tag = "InteriorB_GammaRational"
    else:
        tag = "DenseReversals_D"
    return Region(
        tag=tag,
        a_min=ext.a_min,
        a_max=ext.a_max,
        k=level,
        gamma_rationality=rationality,
    )


def load_saddle_params(source: str | Path | dict) -> SaddleParams:
    """Load parameters from JSON with exactly the eight canonical keys.

    Unknown keys are an error: a typo must not silently change the
    dynamics.  Missing keys are reported by name.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    else:
        data = dict(source)
    if not isinstance(data, dict):
        raise ParameterError("parameter document must be a JSON object")
    unknown = sorted(set(data) - set(SADDLE_FIELDS))
    if unknown:
        raise ParameterError(f"unknown parameter key(s): {', '.join(unknown)}")
    missing = sorted(set(SADDLE_FIELDS) - set(data))
    if missing:
        raise ParameterError(f"missing parameter key(s): {', '.join(missing)}")
    values = {}
    for name in SADDLE_FIELDS:
        value = data[name]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ParameterError(f"{name} must be a number, got {value!r}")
        values[name] = float(value)
    return SaddleParams(**values)
