import math

import numpy as np
import pytest
from scipy.optimize import least_squares

from trackloc.errors import DomainError
from trackloc.refine import levenberg_marquardt, map_objective, refine_map
from trackloc.sim import build_track

from conftest import ORIGIN

ROWS = [("st", 200.0), ("ta", 60.0), ("ca", 180.0, 213.0), ("ta", 40.0), ("st", 150.0)]


def truth_map():
    return build_track(ROWS, ORIGIN, 20.0)


def trace_of(track, spacing=2.0, noise=0.0, rng=None):
    _, x, y, _, _ = track.chain().sample(spacing)
    if noise:
        x = x + rng.normal(0, noise, x.size)
        y = y + rng.normal(0, noise, y.size)
    return np.column_stack([x, y, np.ones(x.size)])


def perturbed(track, dpsi_deg=0.5, scale=1.02):
    els = []
    for e in track.elements:
        els.append(type(e)(e.shape, e.length * scale, e.k0, e.k1))
    return track.with_elements(els, start_heading=track.start_heading + dpsi_deg)


def test_lm_matches_scipy_on_a_curve_fit(rng):
    t = np.linspace(0, 4, 60)
    y = 2.5 * np.exp(-1.3 * t) + 0.4 + rng.normal(0, 0.01, t.size)

    def res(p):
        return p[0] * np.exp(-p[1] * t) + p[2] - y

    def jac(p, r=None):
        e = np.exp(-p[1] * t)
        return np.column_stack([e, -p[0] * t * e, np.ones_like(t)])

    ours, hist = levenberg_marquardt(res, jac, np.array([1.0, 0.5, 0.0]), rtol=1e-15)
    ref = least_squares(res, [1.0, 0.5, 0.0], jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    assert np.allclose(ours, ref.x, rtol=1e-7, atol=1e-9)
    assert all(b < a for a, b in zip(hist, hist[1:]))


def test_noiseless_recovery():
    truth = truth_map()
    trace = trace_of(truth)
    refined, hist = refine_map(perturbed(truth), trace, ORIGIN)
    assert hist[-1] <= 1e-6
    assert map_objective(refined, trace, ORIGIN) <= 1e-6
    for a, b in zip(refined.elements, truth.elements):
        assert a.shape is b.shape
        assert a.length == pytest.approx(b.length, rel=1e-3)
    assert refined.start_heading == pytest.approx(truth.start_heading, abs=1e-4)


def test_optimal_map_is_a_fixed_point():
    truth = truth_map()
    refined, hist = refine_map(truth, trace_of(truth), ORIGIN)
    assert len(hist) <= 2
    for a, b in zip(refined.elements, truth.elements):
        assert a.length == pytest.approx(b.length, abs=1e-6)


def test_history_strictly_decreasing_on_noisy_trace(rng):
    truth = truth_map()
    refined, hist = refine_map(perturbed(truth, 1.0, 0.97), trace_of(truth, 1.0, 1.5, rng), ORIGIN)
    assert len(hist) > 2
    assert all(b < a for a, b in zip(hist, hist[1:]))
    assert refined.fit_rms == pytest.approx(1.5, rel=0.15)


def test_continuity_after_refinement(rng):
    truth = truth_map()
    refined, _ = refine_map(perturbed(truth), trace_of(truth, 1.0, 1.0, rng), ORIGIN)
    els = refined.elements
    for a, b in zip(els, els[1:]):
        assert abs(a.k1 - b.k0) <= 1e-12


def test_bad_traces():
    truth = truth_map()
    trace = trace_of(truth)
    trace[3, 0] = math.nan
    with pytest.raises(DomainError):
        refine_map(truth, trace, ORIGIN)
    with pytest.raises(DomainError):
        refine_map(truth, trace_of(truth)[:5], ORIGIN)


def test_short_arc_between_transitions_is_merged():
    from trackloc.geom import TrackElement
    from trackloc.refine import _merge_short
    k = 1 / 300
    els = [TrackElement.straight(100.0), TrackElement.transition(30.0, 0.0, k), TrackElement.arc(0.05, k),
           TrackElement.transition(30.0, k, 0.0), TrackElement.straight(80.0)]
    out = _merge_short(els, np.array([e.length >= 0.1 for e in els]))
    assert [e.shape.value for e in out] == ["st", "ta", "st"]
    assert out[1].length == 60.0 and (out[1].k0, out[1].k1) == (0.0, 0.0)
