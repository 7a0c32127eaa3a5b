"""Command-line front end: JSON configs in, CSV/JSON artifacts out.

Exit codes: 0 success, 1 invariant violation under --verify, 2 usage or
config error.  Data files carry no timestamps, so identical inputs produce
byte-identical output; run metadata (including wall-clock) goes to the
manifest instead.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .flow import (
    chirality_check,
    integrate,
    invariant_subspace_residuals,
    load_model_config,
    sojourn_analysis,
    sphere_residual,
)
from .horseshoe import (
    PeriodicTangencyError,
    ResonanceError,
    build_strips,
    find_multipulse,
    jacobian_report,
    strip_family_violations,
    strip_image_report,
)
from .oracles import eta_composed, replay_pulse
from .params import ParameterError, classify_region, derive_constants, load_saddle_params
from .returncurve import (
    NoReversalsError,
    curve_sample,
    find_tangency,
    reversal_sequence,
)

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2

CURVE_HEADER = "s,t,phi,x_w,x_w_mod_2pi,y_w,dxw_ds"
STRIPS_HEADER = "n,t,a_n,b_n"
JACOBIAN_HEADER = "x,y,det_fd,trace_fd,det_cf,trace_cf,class"
TRAJ_HEADER = "t,x1,x2,x3,x4,r2"


class VerifyFailure(RuntimeError):
    """An invariant replay failed under --verify."""


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _digest(path: str | None) -> str | None:
    if path is None:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(
    out_dir: Path,
    command: str,
    args: argparse.Namespace,
    outputs: list[Path],
    diagnostics: dict,
    started: float,
) -> Path:
    for f in outputs:
        if not f.exists() or f.stat().st_size == 0:
            raise RuntimeError(f"declared output {f} missing or empty")
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config_digest": _digest(getattr(args, "config", None)),
        "tolerances": {
            "rtol": getattr(args, "rtol", None),
            "atol": getattr(args, "atol", None),
        },
        "seed": getattr(args, "seed", None),
        "outputs": [str(f) for f in outputs],
        "wall_clock_s": time.monotonic() - started,
        "diagnostics": diagnostics,
    }
    path = out_dir / f"{command}_manifest.json"
    _atomic_write(path, json.dumps(manifest, indent=2) + "\n")
    return path


def _fmt(value: float) -> str:
    return repr(float(value))


def cmd_classify(args) -> int:
    started = time.monotonic()
    p = load_saddle_params(args.config)
    region = classify_region(p, rationality_tol=args.rationality_tol, q_max=args.q_max)
    doc = region.to_dict()
    doc["constants"] = derive_constants(p).to_dict()
    print(json.dumps(doc, indent=2))
    out_dir = Path(args.out)
    path = out_dir / "region.json"
    _atomic_write(path, json.dumps(doc, indent=2) + "\n")
    if args.verify:
        from .returncurve import turning_extrema_closed_form

        lo, hi = turning_extrema_closed_form(p)
        if abs(lo - region.a_min) > 1e-8 or abs(hi - region.a_max) > 1e-8:
            raise VerifyFailure("numeric extrema disagree with the harmonic closed form")
    _write_manifest(out_dir, "classify", args, [path], {"tag": region.tag}, started)
    return EXIT_OK


def cmd_curve(args) -> int:
    started = time.monotonic()
    p = load_saddle_params(args.config)
    if not (0.0 < args.s_min < args.s_max <= p.eps):
        raise ParameterError(
            f"need 0 < s_min < s_max <= eps, got s_min={args.s_min}, s_max={args.s_max}, eps={p.eps}"
        )
    if args.n_samples < 1:
        raise ParameterError(f"n_samples must be >= 1, got {args.n_samples}")
    if args.n_samples == 1:
        s_values = [args.s_min]
    else:
        s_values = list(np.geomspace(args.s_min, args.s_max, args.n_samples))
    rows = [CURVE_HEADER]
    for s in s_values:
        c = curve_sample(args.t, float(s), p)
        rows.append(
            ",".join(
                _fmt(v)
                for v in (c.s, c.t, c.phi, c.x_w, c.x_w_mod_2pi, c.y_w, c.dxw_ds)
            )
        )
        if args.verify:
            x_c, y_c = eta_composed(args.t, float(s), p)
            y_ok = abs(y_c) < 1e-250 or abs(c.y_w / y_c - 1.0) < 1e-9
            if abs(c.x_w - x_c) > 1e-9 or not y_ok:
                raise VerifyFailure(f"curve row at s={s} disagrees with the composition oracle")
    out_dir = Path(args.out)
    path = out_dir / (args.out_csv or "curve.csv")
    _atomic_write(path, "\n".join(rows) + "\n")
    _write_manifest(out_dir, "curve", args, [path], {"n_samples": args.n_samples}, started)
    return EXIT_OK


def cmd_reversals(args) -> int:
    started = time.monotonic()
    p = load_saddle_params(args.config)
    seq = reversal_sequence(args.t, args.n_max, p)
    rows = ["n,s,log_s,phi,x_w,x_w_mod_2pi,kind"]
    for i in range(len(seq)):
        rows.append(
            ",".join(
                [
                    str(i),
                    _fmt(seq.s_values[i]),
                    _fmt(seq.log_s_values[i]),
                    _fmt(seq.phi_values[i]),
                    _fmt(seq.x_values[i]),
                    _fmt(seq.x_values[i] % (2 * math.pi)),
                    seq.kinds[i],
                ]
            )
        )
    if args.verify and len(seq) >= 3:
        k = derive_constants(p)
        for i in range(len(seq) - 2):
            ratio = seq.s_values[i + 2] / seq.s_values[i]
            if seq.s_values[i + 2] > 0 and abs(ratio / math.exp(-math.pi / k.g_v) - 1.0) > 1e-10:
                raise VerifyFailure("period ratio s_{n+2}/s_n violated")
        for i in range(min(len(seq), 32)):
            s = float(seq.s_values[i])
            if s > 1e-280:
                d = abs(curve_sample(args.t, s, p).dxw_ds)
                if d > 1e-8 / s:
                    raise VerifyFailure(f"nonzero turning derivative at reversal {i}")
    out_dir = Path(args.out)
    path = out_dir / "reversals.csv"
    _atomic_write(path, "\n".join(rows) + "\n")
    _write_manifest(
        out_dir, "reversals", args, [path], {"count": len(seq), "reason": seq.reason}, started
    )
    return EXIT_OK


def cmd_tangency(args) -> int:
    started = time.monotonic()
    p = load_saddle_params(args.config)
    report = find_tangency(args.x0, args.t, args.n_max, p)
    print(json.dumps(report.to_dict(), indent=2))
    if args.verify:
        history = report.history
        if any(b[1] > a[1] for a, b in zip(history, history[1:])):
            raise VerifyFailure("running minimum distance is not non-increasing")
    out_dir = Path(args.out)
    path = out_dir / "tangency.json"
    _atomic_write(path, json.dumps(report.to_dict(), indent=2) + "\n")
    _write_manifest(out_dir, "tangency", args, [path], {"amplitude": report.amplitude}, started)
    return EXIT_OK


def cmd_strips(args) -> int:
    started = time.monotonic()
    p = load_saddle_params(args.config)
    family = build_strips(args.tau, args.n_limit, p)
    rows = [STRIPS_HEADER]
    for strip in family.strips:
        for i, t in enumerate(strip.t_grid):
            rows.append(
                ",".join(
                    [str(strip.index), _fmt(t), _fmt(strip.a_of_t[i]), _fmt(strip.b_of_t[i])]
                )
            )
    diagnostics = {
        "case": family.case,
        "tau": family.tau,
        "count": len(family),
        "notes": list(family.notes),
    }
    if args.verify:
        violations = strip_family_violations(family, p)
        if violations:
            raise VerifyFailure("; ".join(violations[:5]))
        images = strip_image_report(family, p)
        bad = [r for r in images if not (r["spans_vertically"] and r["within_width"])]
        if bad:
            raise VerifyFailure(f"strip image fails to stand across the rectangle: {bad[0]}")
        diagnostics["image_checks"] = len(images)
    out_dir = Path(args.out)
    path = out_dir / "strips.csv"
    _atomic_write(path, "\n".join(rows) + "\n")
    _write_manifest(out_dir, "strips", args, [path], diagnostics, started)
    return EXIT_OK


def cmd_jacobian(args) -> int:
    started = time.monotonic()
    p = load_saddle_params(args.config)
    rows = [JACOBIAN_HEADER]
    flagged = 0
    for kk in range(args.k_min, args.k_max + 1):
        y = 2.0**-kk
        if y > p.eps:
            continue
        rep = jacobian_report(args.x, y, p)
        flagged += (not rep.det_agrees) + (not rep.trace_agrees)
        if args.verify:
            scale = max(abs(rep.det_fd), abs(rep.trace_fd), 1.0)
            if rep.fd_refinement_gap > 1e-4 * scale:
                raise VerifyFailure(
                    f"finite-difference stencil not converged at y={y}: gap {rep.fd_refinement_gap}"
                )
        rows.append(
            ",".join(
                [
                    _fmt(rep.x),
                    _fmt(rep.y),
                    _fmt(rep.det_fd),
                    _fmt(rep.trace_fd),
                    _fmt(rep.det_cf),
                    _fmt(rep.trace_cf),
                    rep.eigen_class,
                ]
            )
        )
    out_dir = Path(args.out)
    path = out_dir / "jacobian.csv"
    _atomic_write(path, "\n".join(rows) + "\n")
    _write_manifest(
        out_dir, "jacobian", args, [path], {"closed_form_flags": flagged}, started
    )
    return EXIT_OK


def cmd_multipulse(args) -> int:
    started = time.monotonic()
    p = load_saddle_params(args.config)
    if (args.s_min is None) != (args.s_max is None):
        raise ParameterError("--s-min and --s-max must be given together")
    window = (args.s_min, args.s_max) if args.s_min is not None else None
    points = find_multipulse(args.n, p, x0=args.x0, s_window=window)
    doc = [
        {"s": pt.s, "n": pt.n, "residual": pt.residual, "trace": [list(x) for x in pt.trace]}
        for pt in points
    ]
    print(json.dumps(doc, indent=2))
    if args.verify:
        for pt in points:
            replay = replay_pulse(pt.s, pt.n, p, x0=args.x0)
            if replay.residual > 1e-8:
                raise VerifyFailure(f"pulse replay misses the trace by {replay.residual}")
    out_dir = Path(args.out)
    path = out_dir / "multipulse.json"
    _atomic_write(path, json.dumps(doc, indent=2) + "\n")
    _write_manifest(out_dir, "multipulse", args, [path], {"count": len(points)}, started)
    return EXIT_OK


def _simulate(args):
    config = load_model_config(args.config)
    x0 = [float(v) for v in args.x0.split(",")]
    series = integrate(x0, T=args.T, rtol=args.rtol, atol=args.atol, config=config)
    return config, series


def cmd_simulate(args) -> int:
    started = time.monotonic()
    config, series = _simulate(args)
    rows = [TRAJ_HEADER if config.dim == 4 else "t,x,y,z,r2"]
    r2 = series.r2()
    for i, t in enumerate(series.times):
        state = series.states[i]
        rows.append(",".join([_fmt(t)] + [_fmt(v) for v in state] + [_fmt(r2[i])]))
    diagnostics: dict = {
        "accepted": series.accepted,
        "rejected": series.rejected,
        "max_error_estimate": series.max_error_estimate,
        "failure": series.failure,
        "renormalized": series.renormalized,
    }
    if config.dim == 4:
        diagnostics["sphere_residual"] = sphere_residual(series)
        diagnostics["chirality"] = chirality_check(config, series).verdict
    if args.verify:
        if series.failure is not None:
            raise VerifyFailure(series.failure)
        if config.dim == 4 and config.lam == 0.0 and series.states[0][2] == 0.0:
            resid = invariant_subspace_residuals(series, config)["x3=0"]
            diagnostics["x3_residual"] = resid
            if resid > 1e-12:
                raise VerifyFailure(f"x3 = 0 subspace drift {resid}")
        spacing = float(np.max(np.linalg.norm(np.diff(series.states, axis=0), axis=1)))
        if spacing > 0.05:
            raise VerifyFailure(f"sample spacing {spacing} exceeds 0.05")
    out_dir = Path(args.out)
    path = out_dir / "trajectory.csv"
    _atomic_write(path, "\n".join(rows) + "\n")
    _write_manifest(out_dir, "simulate", args, [path], diagnostics, started)
    return EXIT_OK


def cmd_sojourn(args) -> int:
    started = time.monotonic()
    config, series = _simulate(args)
    report = sojourn_analysis(series, neighborhood_radius=args.radius)
    print(json.dumps(report.to_dict(), indent=2))
    if args.verify:
        # self-test of the analyzer on a synthetic series with known ratio
        from .flow import synthetic_dwell_series

        durations = []
        dur = 1.0
        for i in range(10):
            durations.append(("v" if i % 2 == 0 else "w", dur))
            dur *= 1.5
        syn = sojourn_analysis(synthetic_dwell_series(durations), neighborhood_radius=0.3)
        if abs(syn.median_ratio - 1.5**2) > 1e-6:
            raise VerifyFailure(f"analyzer self-test recovered {syn.median_ratio}, wanted 2.25")
    out_dir = Path(args.out)
    path = out_dir / "sojourn.json"
    _atomic_write(path, json.dumps(report.to_dict(), indent=2) + "\n")
    _write_manifest(
        out_dir, "sojourn", args, [path], {"median_ratio": report.median_ratio}, started
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bykov",
        description="Numerics near a Bykov heteroclinic cycle with nodes of different chirality",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, flow: bool = False):
        sp.add_argument("--config", required=True, help="JSON parameter file")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--verify", action="store_true", help="replay invariants, exit 1 on failure")
        sp.add_argument("--seed", type=int, default=0, help="seed for sampling-based checks")
        sp.add_argument("--rtol", type=float, default=1e-10)
        sp.add_argument("--atol", type=float, default=1e-12)

    sp = sub.add_parser("classify", help="region classification of a parameter point")
    common(sp)
    sp.add_argument("--rationality-tol", type=float, default=1e-9)
    sp.add_argument("--q-max", type=int, default=10**6)
    sp.set_defaults(fn=cmd_classify)

    sp = sub.add_parser("curve", help="exit-curve samples as CSV")
    common(sp)
    sp.add_argument("--t", type=float, default=0.0)
    sp.add_argument("--s-min", type=float, required=True)
    sp.add_argument("--s-max", type=float, required=True)
    sp.add_argument("--n-samples", type=int, default=200)
    sp.add_argument("--out-csv", default=None)
    sp.set_defaults(fn=cmd_curve)

    sp = sub.add_parser("reversals", help="turning points of the exit curve")
    common(sp)
    sp.add_argument("--t", type=float, default=0.0)
    sp.add_argument("--n-max", type=int, default=10**4)
    sp.set_defaults(fn=cmd_reversals)

    sp = sub.add_parser("tangency", help="nearest reversal and tangency-creating bump")
    common(sp)
    sp.add_argument("--x0", type=float, default=0.0)
    sp.add_argument("--t", type=float, default=0.0)
    sp.add_argument("--n-max", type=int, default=10**4)
    sp.set_defaults(fn=cmd_tangency)

    sp = sub.add_parser("strips", help="horizontal strip construction")
    common(sp)
    sp.add_argument("--tau", type=float, default=0.4)
    sp.add_argument("--n-limit", type=int, default=5)
    sp.set_defaults(fn=cmd_strips)

    sp = sub.add_parser("jacobian", help="return-map derivative sweep along y = 2^-k")
    common(sp)
    sp.add_argument("--x", type=float, default=0.1)
    sp.add_argument("--k-min", type=int, default=4)
    sp.add_argument("--k-max", type=int, default=20)
    sp.set_defaults(fn=cmd_jacobian)

    sp = sub.add_parser("multipulse", help="n-pulse connection search")
    common(sp)
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--x0", type=float, default=0.0)
    sp.add_argument("--s-min", type=float, default=None)
    sp.add_argument("--s-max", type=float, default=None)
    sp.set_defaults(fn=cmd_multipulse)

    sp = sub.add_parser("simulate", help="integrate the explicit vector field")
    common(sp, flow=True)
    sp.add_argument("--x0", default="-0.5,-0.139,-0.8807,0.3013", help="comma-separated state")
    sp.add_argument("--T", type=float, default=500.0)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("sojourn", help="dwell-time table and growth-ratio estimate")
    common(sp, flow=True)
    sp.add_argument("--x0", default="-0.5,-0.139,-0.8807,0.3013")
    sp.add_argument("--T", type=float, default=500.0)
    sp.add_argument("--radius", type=float, default=0.3)
    sp.set_defaults(fn=cmd_sojourn)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; normalise other codes
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.fn(args)
    except VerifyFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ParameterError, ResonanceError, PeriodicTangencyError, NoReversalsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
