import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ellipse_lemma51, ellipse_perimeter_agm, ellipse_torsion
from shapeflow import curvature as cv
from shapeflow.curvature import (
    FlowConfig,
    SupportBody,
    body_area,
    body_perimeter,
    csf_step,
    imcf_step,
    lemma51_value,
    rho,
    run_flow,
    sample,
    to_polygon,
    torsion_step,
)
from shapeflow.errors import ConvexityLost, OriginEscaped
from shapeflow.fem import boundary_flux_sq, solve_torsion
from shapeflow.mesh import triangulate


def torsion_trace(b, m=128, h=0.04):
    poly = to_polygon(b, m)
    u = solve_torsion(triangulate(poly, h * poly.diameter))
    return poly, u, boundary_flux_sq(u, method="element")


def test_rho_examples():
    assert np.allclose(rho(SupportBody.circle(1.7)), 1.7, atol=1e-12)
    e = SupportBody.ellipse(2.0, 1.0)
    r = rho(e)
    assert abs(r.min() - 0.5) <= 1e-6 and abs(r.max() - 4.0) <= 1e-6
    assert math.isclose(np.sum(r) * e.dtheta, body_perimeter(e), rel_tol=1e-12)


def test_area_and_perimeter():
    c = SupportBody.circle(1.5)
    assert math.isclose(body_area(c), math.pi * 2.25, rel_tol=1e-13)
    assert math.isclose(body_perimeter(c), 3 * math.pi, rel_tol=1e-13)
    e = SupportBody.ellipse(2.0, 1.0)
    assert abs(body_area(e) - 2 * math.pi) <= 1e-8
    assert abs(body_perimeter(e) - ellipse_perimeter_agm(2.0, 1.0)) <= 1e-8


def test_invalid_bodies():
    with pytest.raises(OriginEscaped):
        SupportBody.circle(1.0, center=(1.5, 0.0))
    with pytest.raises(ValueError):
        SupportBody(np.ones(100))
    th = 2 * np.pi * np.arange(64) / 64
    with pytest.raises(ConvexityLost):
        SupportBody(1.0 + 0.2 * np.cos(4 * th))  # ρ = 1 - 3 cos 4θ changes sign


def test_to_polygon():
    c = SupportBody.circle(1.0)
    p = to_polygon(c, 256)
    assert abs(p.area - math.pi) <= 1e-3
    assert p.is_convex()
    e = SupportBody.ellipse(2.0, 1.0, angle=0.3, center=(0.2, -0.1))
    q = to_polygon(e, 100)
    th = 2 * np.pi * np.arange(100) / 100
    h = np.sqrt((2 * np.cos(th - 0.3)) ** 2 + np.sin(th - 0.3) ** 2) + 0.2 * np.cos(th) - 0.1 * np.sin(th)
    x_dot_gamma = q.vertices[:, 0] * np.cos(th) + q.vertices[:, 1] * np.sin(th)
    assert np.max(np.abs(x_dot_gamma - h)) <= 1e-8
    assert q.is_convex()


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.5, 3.0), b=st.floats(0.5, 3.0), ang=st.floats(0, math.pi), cx=st.floats(-0.3, 0.3))
def test_spectral_reconstruction(a, b, ang, cx):
    e = SupportBody.ellipse(a, b, angle=ang, center=(cx, 0.1))
    again = SupportBody.from_points(e.boundary_points())
    assert np.max(np.abs(again.h - e.h)) <= 1e-10
    assert np.allclose(e.centroid, (cx, 0.1), atol=1e-10)


def test_csf_circle_radius():
    R0, dt = 1.0, 1e-4
    b = SupportBody.circle(R0)
    for k in range(100):
        b = csf_step(b, dt)
    R = np.mean(b.h)
    assert abs(R - math.sqrt(R0 ** 2 - 2 * 100 * dt)) <= 1e-6
    assert np.ptp(b.h) <= 1e-12


def test_csf_ellipse_area_and_rounding():
    s = run_flow("csf", SupportBody.ellipse(2.0, 1.0), FlowConfig(t_end=0.2, sample_every=0, record_every=50))
    t, A = s.column("t"), s.column("area")
    assert np.max(np.abs(A - (2 * math.pi - 2 * math.pi * t)) / A) <= 1e-4
    assert s.failure is None and t[-1] == pytest.approx(0.2)


def test_csf_eccentricity_decreases():
    b = SupportBody.ellipse(2.0, 1.0)
    ratios = []
    dt = 0.5 * cv.stable_dt("csf", b)
    for k in range(2000):
        b = csf_step(b, dt)
        if k % 200 == 0:
            ratios.append(b.h[0] / b.h[b.n // 4])
    assert np.all(np.diff(ratios) < 0)


def test_imcf_circle_and_perimeter_law():
    b = SupportBody.circle(0.8)
    dt = 1e-4
    for _ in range(200):
        b = imcf_step(b, dt)
    assert np.max(np.abs(b.h - 0.8 * math.exp(200 * dt))) <= 1e-8
    s = run_flow("imcf", SupportBody.ellipse(2.0, 1.0), FlowConfig(t_end=0.3, sample_every=0, record_every=20))
    t, P = s.column("t"), s.column("perimeter")
    assert np.max(np.abs(P / P[0] - np.exp(t))) <= 1e-6
    assert np.all(np.diff(s.column("isoper")) <= 0)


def test_torsion_step_disk_radial_law():
    b = SupportBody.circle(1.0)
    t, dt = 0.0, 2e-4
    for _ in range(10):
        _, _, tr = torsion_trace(b, 64, 0.08)
        b = torsion_step(b, tr, dt)
        t += dt
    R = np.mean(b.h)
    assert abs(R * R - (1 - 8 * t)) <= 1e-3
    assert np.ptp(b.h) <= 1e-6


def test_disk_deficit_and_lemma_equality():
    b = SupportBody.circle(1.0)
    s = sample(b, 0.0, FlowConfig())
    assert abs(s.deficit) <= 1e-3 * s.T
    assert 0 <= s.area / 2 - s.lemma51 <= 1e-3 * s.area


def test_lemma51_ellipse_strict_and_oracle():
    e = SupportBody.ellipse(2.0, 1.0)
    poly, u, tr = torsion_trace(e)
    val = lemma51_value(tr, e)
    assert val < e.area / 2 - 0.1
    assert abs(val - ellipse_lemma51(2.0, 1.0)) <= 1e-2 * val
    assert abs(u.integral() - ellipse_torsion(2.0, 1.0)) <= 3e-3 * u.integral()


@pytest.mark.parametrize("k", [1, 32, 45])
def test_lemma51_rotation_invariant(k):
    # rotations by multiples of 2π/M move the sampled polygon onto itself
    m = 128
    e0 = SupportBody.ellipse(2.0, 1.0)
    e1 = SupportBody.ellipse(2.0, 1.0, angle=2 * math.pi * k / m)
    v0 = lemma51_value(torsion_trace(e0, m)[2], e0)
    v1 = lemma51_value(torsion_trace(e1, m)[2], e1)
    assert abs(v0 - v1) <= 1e-6 * v0


def test_lemma51_gap_shrinks_toward_disk():
    gaps = []
    for eps in (0.2, 0.1, 0.05):
        e = SupportBody.ellipse(1 + eps, 1.0)
        gaps.append(e.area / 2 - lemma51_value(torsion_trace(e)[2], e))
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_run_flow_records_failure(monkeypatch):
    def boom(b, dt):
        raise ConvexityLost("forced")

    monkeypatch.setattr(cv, "csf_step", boom)
    s = run_flow("csf", SupportBody.circle(1.0), FlowConfig(t_end=0.1, sample_every=0, max_halvings=2))
    assert s.failure is not None and "ConvexityLost" in s.failure
    assert s.steps == 0 and len(s.samples) == 1


def test_run_flow_area_stop_and_sampling():
    cfg = FlowConfig(t_end=10.0, area_stop=0.5 * math.pi, sample_every=0, record_every=100)
    s = run_flow("csf", SupportBody.circle(1.0), cfg)
    assert s.samples[-1].area <= 0.5 * math.pi
    assert np.all(np.diff(s.column("t")) > 0)
    assert not any(x.sampled for x in s.samples)


def test_flow_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(dt_safety=0.0)
    with pytest.raises(ValueError):
        run_flow("mcf", SupportBody.circle(1.0))
