import math

import numpy as np
import pytest

from bykov.localmaps import (
    IN_V,
    IN_W,
    OUT_V,
    OUT_W,
    BumpSpec,
    DiskPoint,
    OnManifoldError,
    RectPoint,
    WallPoint,
    circle_dist,
    flight_map_v,
    flight_map_w,
    phi_v,
    phi_w,
    polar_rect,
    psi_vw,
    psi_wv,
    rect_polar,
    wrap_pi,
)
from bykov.params import SaddleParams, derive_constants
from conftest import random_admissible


def test_phi_v_unit_section(unit_params):
    k = derive_constants(unit_params)
    out = phi_v(WallPoint(section=IN_V, x=0.0, y=1.0), k)
    assert (out.r, out.phi) == (1.0, 0.0)
    out = phi_v(WallPoint(section=IN_V, x=0.0, y=math.exp(-1.0)), k)
    assert out.r == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert out.phi == pytest.approx(1.0, rel=1e-15)


def test_phi_v_against_flight_oracle_frozen():
    # eps=0.5, delta_v=1.2, g_v=0.8 realised by C_v=1.2, E_v=1, alpha_v=0.8
    p = SaddleParams(alpha_v=0.8, C_v=1.2, E_v=1.0, alpha_w=1.0, C_w=1.0, E_w=1.0, a=2.0, eps=0.5)
    out = phi_v(WallPoint(section=IN_V, x=0.3, y=0.1), derive_constants(p))
    assert out.r == pytest.approx(0.07247796636776957, rel=1e-13)
    assert out.phi == pytest.approx(1.5875503299472804, rel=1e-13)
    oracle = flight_map_v(0.3, 0.1, p)
    assert out.r == pytest.approx(oracle.r, rel=1e-12)
    assert out.phi == pytest.approx(oracle.phi, abs=1e-12)


def test_phi_w_unit_section(unit_params):
    k = derive_constants(unit_params)
    out = phi_w(DiskPoint(section=IN_W, r=1.0, phi=0.0), k)
    assert (out.x, out.y) == (0.0, 1.0)
    out = phi_w(DiskPoint(section=IN_W, r=math.exp(-1.0), phi=0.0), k)
    assert out.x == pytest.approx(-1.0, rel=1e-15)
    assert out.y == pytest.approx(math.exp(-1.0), rel=1e-15)


def test_phi_w_against_flight_oracle_frozen():
    p = SaddleParams(alpha_v=1.0, C_v=1.0, E_v=1.0, alpha_w=0.7, C_w=1.3, E_w=1.0, a=2.0, eps=0.5)
    out = phi_w(DiskPoint(section=IN_W, r=0.05, phi=2.1), derive_constants(p))
    assert out.x == pytest.approx(0.48819043490416814, rel=1e-13)
    assert out.y == pytest.approx(0.025059361681363603, rel=1e-13)
    oracle = flight_map_w(0.05, 2.1, p)
    assert out.x == pytest.approx(oracle.x, abs=1e-12)
    assert out.y == pytest.approx(oracle.y, rel=1e-12)


def test_local_maps_match_flight_oracle_random():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        p = random_admissible(rng)
        k = derive_constants(p)
        y = float(p.eps * 10 ** rng.uniform(-8, 0))
        x = float(rng.uniform(-10, 10))
        got = phi_v(WallPoint(section=IN_V, x=x, y=y), k)
        want = flight_map_v(x, y, p)
        assert got.r == pytest.approx(want.r, rel=1e-12)
        assert got.phi == pytest.approx(want.phi, abs=1e-12)
        r = float(p.eps * 10 ** rng.uniform(-8, 0))
        phi = float(rng.uniform(-50, 50))
        got_w = phi_w(DiskPoint(section=IN_W, r=r, phi=phi), k)
        want_w = flight_map_w(r, phi, p)
        assert got_w.x == pytest.approx(want_w.x, abs=1e-12)
        assert got_w.y == pytest.approx(want_w.y, rel=1e-12)


def test_stable_manifold_errors(unit_params):
    k = derive_constants(unit_params)
    with pytest.raises(OnManifoldError):
        phi_v(WallPoint(section=IN_V, x=0.0, y=0.0), k)
    with pytest.raises(OnManifoldError):
        phi_w(DiskPoint(section=IN_W, r=0.0, phi=1.0), k)
    with pytest.raises(OnManifoldError):
        rect_polar(RectPoint(X=0.0, Y=0.0), branch_hint=0.0)


def test_shear_trivial_and_simple():
    assert psi_vw(RectPoint(X=0.3, Y=-0.2), a=1.0) == RectPoint(X=0.3, Y=-0.2)
    out = psi_vw(RectPoint(X=1.0, Y=1.0), a=2.0)
    assert (out.X, out.Y) == (2.0, 0.5)


def test_shear_maps_circle_to_ellipse():
    a, r = 2.0, 0.37
    radii = []
    for theta in np.linspace(0.0, 2.0 * math.pi, 360, endpoint=False):
        out = psi_vw(RectPoint(X=r * math.cos(theta), Y=r * math.sin(theta)), a=a)
        radii.append(math.hypot(out.X, out.Y))
    assert max(radii) == pytest.approx(a * r, abs=1e-12)
    assert min(radii) == pytest.approx(r / a, abs=1e-12)


def test_shear_jacobian_determinant_is_one():
    a, h = 1.7, 1e-6
    for X, Y in ((0.2, 0.1), (-0.5, 0.3)):
        d_xx = (psi_vw(RectPoint(X + h, Y), a).X - psi_vw(RectPoint(X - h, Y), a).X) / (2 * h)
        d_xy = (psi_vw(RectPoint(X, Y + h), a).X - psi_vw(RectPoint(X, Y - h), a).X) / (2 * h)
        d_yx = (psi_vw(RectPoint(X + h, Y), a).Y - psi_vw(RectPoint(X - h, Y), a).Y) / (2 * h)
        d_yy = (psi_vw(RectPoint(X, Y + h), a).Y - psi_vw(RectPoint(X, Y - h), a).Y) / (2 * h)
        assert d_xx * d_yy - d_xy * d_yx == pytest.approx(1.0, abs=1e-8)


def test_wall_transition_quarter_turn():
    out = psi_wv(WallPoint(section=OUT_W, x=0.0, y=0.1))
    assert (out.x, out.y) == (0.1, 0.0)
    out = psi_wv(WallPoint(section=OUT_W, x=-0.2, y=0.05))
    assert out.x == pytest.approx(0.05)
    assert out.y == pytest.approx(0.2)
    # the unstable-manifold trace {y=0} lands on the vertical segment {x=0}
    for xw in (-0.4, -0.1, -0.01):
        img = psi_wv(WallPoint(section=OUT_W, x=xw, y=0.0))
        assert img.x == 0.0
        assert img.y == pytest.approx(-xw)


def test_wall_transition_is_chart_isometry():
    rng = np.random.default_rng(8)
    for _ in range(200):
        x1, y1 = rng.uniform(-0.5, 0.5), rng.uniform(0, 0.5)
        x2, y2 = x1 + rng.uniform(-0.3, 0.3), y1 + rng.uniform(-0.3, 0.3)
        p1 = psi_wv(WallPoint(section=OUT_W, x=x1, y=y1))
        p2 = psi_wv(WallPoint(section=OUT_W, x=x2, y=y2))
        before = math.hypot(wrap_pi(x2 - x1), y2 - y1)
        after = math.hypot(wrap_pi(p2.x - p1.x), p2.y - p1.y)
        assert after == pytest.approx(before, abs=1e-12)


def test_bump_zero_amplitude_is_identity():
    bump = BumpSpec(amplitude=0.0, center=(1.0, 0.2), radius=0.05)
    for x, y in ((1.0, 0.2), (0.99, 0.21), (2.0, 0.1)):
        assert psi_wv(WallPoint(section=OUT_W, x=x, y=y), bump) == psi_wv(
            WallPoint(section=OUT_W, x=x, y=y)
        )


def test_bump_local_support_and_center_value():
    bump = BumpSpec(amplitude=0.01, center=(1.0, 0.2), radius=0.05)
    far = WallPoint(section=OUT_W, x=1.2, y=0.2)
    assert psi_wv(far, bump) == psi_wv(far)
    at_center = psi_wv(WallPoint(section=OUT_W, x=1.0, y=0.2), bump)
    plain = psi_wv(WallPoint(section=OUT_W, x=1.0, y=0.2))
    assert at_center.x == plain.x
    assert plain.y - at_center.y == pytest.approx(0.01, rel=1e-12)


def test_bump_rejects_bad_radius():
    with pytest.raises(ValueError):
        BumpSpec(amplitude=0.1, center=(0.0, 0.0), radius=0.0)


def test_polar_rect_trivial():
    assert polar_rect(DiskPoint(section=OUT_V, r=1.0, phi=0.0)) == RectPoint(X=1.0, Y=0.0)


def test_rect_polar_unwinding_roundtrip():
    p = DiskPoint(section=OUT_V, r=2.0, phi=5.0 * math.pi / 2.0)
    rect = polar_rect(p)
    assert rect.X == pytest.approx(0.0, abs=1e-12)
    assert rect.Y == pytest.approx(2.0, rel=1e-12)
    back = rect_polar(rect, branch_hint=5.0 * math.pi / 2.0)
    assert back.phi == pytest.approx(5.0 * math.pi / 2.0, abs=1e-12)


def test_polar_roundtrip_random():
    rng = np.random.default_rng(17)
    for _ in range(1000):
        r = float(10 ** rng.uniform(-6, 0))
        phi = float(rng.uniform(-50, 50))
        back = rect_polar(polar_rect(DiskPoint(section=IN_W, r=r, phi=phi)), branch_hint=phi)
        assert back.r == pytest.approx(r, rel=1e-12)
        assert back.phi == pytest.approx(phi, abs=1e-12)


def test_segment_maps_to_spiral(case1_params):
    """The image of a vertical segment spirals: radius down to 0, angle unbounded."""
    k = derive_constants(case1_params)
    s = np.geomspace(case1_params.eps, 1e-12, 10_000)
    rs, phis = [], []
    for y in s:
        out = phi_v(WallPoint(section=IN_V, x=0.0, y=float(y)), k)
        rs.append(out.r)
        phis.append(out.phi)
    rs, phis = np.array(rs), np.array(phis)
    assert np.all(np.diff(rs) < 0)
    assert np.all(np.diff(np.abs(phis[10:])) > 0)
    assert rs[-1] < 1e-10
    assert abs(phis[-1]) > 5.0


def test_points_serialize_with_section_tags():
    assert WallPoint(section=OUT_W, x=1.0, y=0.1).to_dict() == {
        "section": "Out_w",
        "x": 1.0,
        "y": 0.1,
    }
    assert DiskPoint(section=IN_W, r=0.2, phi=7.0).to_dict()["section"] == "In_w"


def test_wrap_helpers():
    assert wrap_pi(math.pi) == pytest.approx(math.pi)
    assert wrap_pi(-math.pi) == pytest.approx(math.pi)
    assert wrap_pi(3.0 * math.pi) == pytest.approx(math.pi)
    assert circle_dist(0.1, 2.0 * math.pi - 0.1) == pytest.approx(0.2, abs=1e-12)
