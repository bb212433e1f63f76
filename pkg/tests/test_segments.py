import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trackloc.errors import DegenerateFitError, DomainError
from trackloc.filters import KinematicState
from trackloc.geom import Shape
from trackloc.segments import (EventKind, SegmentConfig, classify_segments, fit_arc_params, fit_circle,
                               fit_straight_params)


def mu_history(n, straight=0.0, arc=0.0):
    mu = np.zeros((n, 3))
    mu[:, 0] = straight
    mu[:, 1] = arc
    mu[:, 2] = 1.0 - mu[:, 0] - mu[:, 1]
    return mu


def states(xy, var=1.0):
    return [KinematicState([x, y, 10.0, 0.0, 0.0], var * np.eye(5)) for x, y in xy]


def test_constant_straight_probability():
    t = np.arange(60.0)
    ev = classify_segments(t, mu_history(60, straight=0.95))
    assert len(ev) == 1
    assert ev[0].kind is EventKind.ENTER_STRAIGHT and (ev[0].t, ev[0].closing_t) == (0.0, 59.0)


def test_yaw_rate_step_splits_an_arc():
    n = 60
    t = np.arange(float(n))
    omega = np.where(t < 30, 0.05, 0.08)
    ev = classify_segments(t, mu_history(n, arc=0.95), omega, np.full(n, 1e-3))
    assert [e.kind for e in ev] == [EventKind.ENTER_ARC, EventKind.ENTER_ARC]
    assert ev[0].closing_t == 29.0 and ev[1].t == 30.0


def test_single_epoch_spike_opens_nothing():
    mu = mu_history(30, straight=0.3)
    mu[12] = (0.92, 0.0, 0.08)
    assert classify_segments(np.arange(30.0), mu) == []
    assert classify_segments([], np.zeros((0, 3))) == []


def test_hysteresis_gap_becomes_unknown():
    mu = mu_history(40, straight=0.95)
    mu[15:25] = (0.2, 0.0, 0.8)
    ev = classify_segments(np.arange(40.0), mu)
    assert [e.kind for e in ev] == [EventKind.ENTER_STRAIGHT, EventKind.ENTER_UNKNOWN, EventKind.ENTER_STRAIGHT]
    assert (ev[1].t, ev[1].closing_t) == (14.0, 25.0)


@given(st.lists(st.floats(0.0, 1.0), min_size=5, max_size=80))
def test_events_are_ordered_and_disjoint(p):
    n = len(p)
    mu = mu_history(n, straight=np.array(p) * 0.5, arc=(1 - np.array(p)) * 0.99)
    ev = classify_segments(np.arange(float(n)), mu, cfg=SegmentConfig(min_epochs=1))
    for a, b in zip(ev, ev[1:]):
        assert a.t <= a.closing_t <= b.t
    with pytest.raises(DomainError):
        classify_segments(np.zeros(n), mu)


def test_straight_fit_exact_line():
    s = np.linspace(0, 100, 20)
    seg = fit_straight_params(states(np.column_stack([s, s]) / math.sqrt(2) + 3.0))
    assert seg.anchor.heading == pytest.approx(math.pi / 4, abs=1e-12)
    assert seg.fit_rms == pytest.approx(0.0, abs=1e-9)
    assert seg.length == pytest.approx(100.0)


def test_straight_fit_principal_axis_oracle(rng):
    s = np.linspace(0, 200, 80)
    xy = np.column_stack([s * math.cos(0.3), s * math.sin(0.3)]) + rng.normal(0, 1.0, (80, 2))
    seg = fit_straight_params(states(xy))
    _, _, vt = np.linalg.svd(xy - xy.mean(axis=0))
    ang = math.atan2(vt[0, 1], vt[0, 0])
    diff = math.remainder(seg.anchor.heading - ang, math.pi)
    assert abs(diff) <= 1e-9


def test_straight_fit_needs_three_points():
    with pytest.raises(DomainError):
        fit_straight_params(states([(0, 0), (1, 1)]))


def circumcenter(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    return ux, uy


def test_three_points_on_a_circle():
    ang = np.array([0.1, 0.5, 0.9])
    pts = np.column_stack([20 + 213 * np.cos(ang), -40 + 213 * np.sin(ang)])
    fit = fit_circle(pts)
    ux, uy = circumcenter(*pts)
    assert fit.radius == pytest.approx(213.0, abs=1e-6)
    assert fit.radius == pytest.approx(math.hypot(pts[0, 0] - ux, pts[0, 1] - uy), abs=1e-6)
    assert (fit.cx, fit.cy) == pytest.approx((ux, uy), abs=1e-6)


def test_collinear_points_are_degenerate():
    with pytest.raises(DegenerateFitError):
        fit_circle(np.column_stack([np.linspace(0, 100, 10), np.zeros(10)]))


def test_noisy_arc_radius_within_three_sigma():
    inside = 0
    for seed in range(100):
        r = np.random.default_rng(seed)
        ang = np.linspace(0.0, 1.0, 50)
        pts = np.column_stack([376 * np.cos(ang), 376 * np.sin(ang)]) + r.normal(0, 0.5, (50, 2))
        fit = fit_circle(pts)
        inside += abs(fit.radius - 376.0) <= 3 * fit.radius_sigma
    assert inside >= 97


def test_arc_fit_sign_and_length():
    ang = np.linspace(0.0, -0.8, 30)           # clockwise travel: right turn
    pts = np.column_stack([197 * np.sin(-ang), 197 * np.cos(ang) - 197])
    seg = fit_arc_params(states(pts))
    assert seg.shape is Shape.CIRCULAR_ARC
    assert seg.curvature == pytest.approx(-1 / 197, rel=1e-9)
    assert seg.length == pytest.approx(0.8 * 197, rel=1e-9)
    assert seg.anchor.heading == pytest.approx(0.0, abs=1e-9)
