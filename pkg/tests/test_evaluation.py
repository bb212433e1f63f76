import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trackloc.ecdf import ecdf_at, ecdf_table, nearest_rank
from trackloc.errors import DomainError
from trackloc.evaluation import (ErrorSet, cdf, compare_methods, covariance_ellipse, decompose_errors,
                                 ellipse_export, evaluate, improvement, improvement_rows, table1_rows,
                                 table2_rows)
from trackloc.filters import StateLog
from trackloc.sim import TruthArrays

from table_fixture import QUANTILES, THRESHOLDS, error_sets


def one_epoch_log(cov, x=(0.0, 0.0), available=True):
    P = np.zeros((1, 5, 5))
    P[0, :2, :2] = cov
    X = np.zeros((1, 5))
    X[0, :2] = x
    return StateLog("m", np.array([0.0]), X, P, np.array([available]))


def truth_at(heading, t=(0.0,), x=0.0, y=0.0):
    n = len(t)
    z = np.zeros(n)
    return TruthArrays(np.array(t, float), z + x, z + y, z + heading, z, z, z, z)


def test_nearest_rank_example():
    assert ecdf_at([1, 2, 3], 2) == pytest.approx(2 / 3)
    assert nearest_rank([1, 2, 3], 2 / 3) == 2
    assert nearest_rank([3, 1, 2], 1.0) == 3
    with pytest.raises(ValueError):
        nearest_rank([], 0.5)


def test_unavailable_epochs_saturate_the_cdf():
    v = np.concatenate([np.linspace(1, 50, 95), np.full(5, np.inf)])
    vals, prob = ecdf_table(v)
    assert prob[-1] == pytest.approx(0.95)
    assert ecdf_at(v, 1e9) <= 0.95
    assert nearest_rank(v, 0.99) == math.inf


@given(arrays(float, st.integers(1, 60), elements=st.floats(0, 1e3) | st.just(math.inf)))
def test_cdf_monotone_and_bounded(v):
    vals, prob = ecdf_table(v)
    assert np.all(np.diff(vals) > 0)
    assert np.all(np.diff(prob) > 0)
    if len(prob):
        assert prob[-1] <= np.mean(np.isfinite(v)) + 1e-12
    qs = [nearest_rank(v, p) for p in (0.1, 0.5, 0.9, 0.99, 1.0)]
    assert all(a <= b for a, b in zip(qs, qs[1:]))


def test_isotropic_covariance_any_heading():
    for h in (0.0, 0.4, 2.0, -2.9):
        e = decompose_errors(one_epoch_log(4.0 * np.eye(2)), truth_at(h))
        assert e.sigma3_along[0] == pytest.approx(6.0)
        assert e.sigma3_cross[0] == pytest.approx(6.0)
        assert e.sigma3_max[0] == pytest.approx(6.0)


def test_axis_aligned_covariance():
    e = decompose_errors(one_epoch_log(np.diag([4.0, 1.0])), truth_at(0.0))
    assert (e.sigma3_along[0], e.sigma3_cross[0], e.sigma3_max[0]) == pytest.approx((6.0, 3.0, 6.0))


def test_rotated_covariance_against_matrix_oracle():
    h = math.radians(30.0)
    cov = np.diag([4.0, 1.0])
    e = decompose_errors(one_epoch_log(cov, x=(1.0, 2.0)), truth_at(h))
    R = np.array([[math.cos(h), math.sin(h)], [-math.sin(h), math.cos(h)]])
    T = R @ cov @ R.T
    assert e.sigma3_along[0] == pytest.approx(3 * math.sqrt(T[0, 0]), abs=1e-12)
    assert e.sigma3_cross[0] == pytest.approx(3 * math.sqrt(T[1, 1]), abs=1e-12)
    err = R @ np.array([1.0, 2.0])
    assert (e.err_along[0], e.err_cross[0]) == pytest.approx(tuple(err), abs=1e-12)


@given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(-0.99, 0.99), st.floats(-math.pi, math.pi))
def test_decomposition_preserves_total_variance(a, d, rho, h):
    b = rho * math.sqrt(a * d)
    cov = np.array([[a, b], [b, d]])
    e = decompose_errors(one_epoch_log(cov), truth_at(h))
    assert e.sigma3_along[0] ** 2 + e.sigma3_cross[0] ** 2 == pytest.approx(9 * (a + d), rel=1e-9)
    assert e.sigma3_max[0] >= max(e.sigma3_along[0], e.sigma3_cross[0]) - 1e-9
    lam = np.linalg.eigvalsh(cov)[-1]
    assert e.sigma3_max[0] == pytest.approx(3 * math.sqrt(lam), rel=1e-9)


def test_misaligned_epochs_are_dropped_and_counted():
    log = StateLog("m", np.array([0.0, 1.0, 2.3]), np.zeros((3, 5)), np.tile(np.eye(5), (3, 1, 1)),
                   np.ones(3, bool))
    e = decompose_errors(log, truth_at(0.0, t=(0.0, 1.02, 2.0)))
    assert len(e) == 2 and e.dropped == 1


def test_unavailable_epochs_are_infinite():
    e = decompose_errors(one_epoch_log(np.eye(2), available=False), truth_at(0.0))
    assert e.sigma3_cross[0] == math.inf
    assert cdf(e, "cross").availability == 0.0


def test_improvement_arithmetic():
    assert improvement(204.5, 35.3) == pytest.approx(82.7, abs=0.05)
    assert improvement(182.9, 76.5) == pytest.approx(58.2, abs=0.05)
    assert improvement(10.0, 10.0) == 0.0
    assert improvement(math.inf, 3.0) == 100.0
    assert math.isnan(improvement(math.inf, math.inf))


@given(st.floats(0.1, 1e3), st.floats(0.1, 1e3))
def test_improvement_sign_is_antisymmetric(a, b):
    fwd, back = improvement(a, b), improvement(b, a)
    assert (fwd > 0) == (back < 0) or (fwd == 0 and back == 0)


def test_identical_reports_give_zero_improvement():
    sets = error_sets()
    r = evaluate(sets["standard"])
    cmp = compare_methods({"a": r, "b": evaluate(sets["standard"])})
    assert all(v == 0.0 for v in cmp.improvements[("a", "b")].values())


def test_swapping_roles_flips_the_sign():
    sets = error_sets()
    a, b = evaluate(sets["standard"]), evaluate(sets["new"])
    fwd = compare_methods({"a": a, "b": b}).improvements[("a", "b")]
    back = compare_methods({"b": b, "a": a}).improvements[("b", "a")]
    for key in fwd:
        assert np.sign(fwd[key]) == -np.sign(back[key])


def test_mismatched_epochs_raise():
    sets = error_sets()
    a = evaluate(sets["standard"])
    short = evaluate(ErrorSet("x", sets["new"].t[:-1], *(getattr(sets["new"], f)[:-1] for f in (
        "err_along", "err_cross", "sigma3_along", "sigma3_cross", "sigma3_max", "available"))))
    with pytest.raises(DomainError, match="different epochs"):
        compare_methods({"a": a, "b": short})
    with pytest.raises(DomainError):
        compare_methods({"a": a})


def test_tables_reproduce_the_fixture():
    reports = {k: evaluate(v) for k, v in error_sets().items()}
    cmp = compare_methods(reports)
    for ch, p, vals in cmp.table1:
        assert tuple(vals.values()) == QUANTILES[(ch, p)]
    for ch, x, vals in cmp.table2:
        assert tuple(vals.values()) == pytest.approx(THRESHOLDS[(ch, x)], abs=1e-12)
    rows = table1_rows(cmp)
    assert rows[0] == ["channel", "cdf", "gnss", "standard", "new"]
    assert ["CT", "0.99", "inf", "204.5", "35.3"] in rows
    assert ["AT", "5", "0.314", "0.523", "0.833"] in table2_rows(cmp)
    imp = improvement_rows(cmp)
    assert ["standard", "new", "CT", "0.99", "82.7"] in imp
    assert ["standard", "new", "AT", "0.99", "58.2"] in imp
    assert reports["gnss"].availability == pytest.approx(0.95)


def test_ellipse_closed_forms():
    a, b, ang, ok = covariance_ellipse(np.diag([9.0, 1.0]))
    assert (a, b, ang, ok) == (9.0, 3.0, 0.0, True)
    a, b, ang, ok = covariance_ellipse(4.0 * np.eye(2))
    assert (a, b, ang) == (6.0, 6.0, 0.0)
    assert not covariance_ellipse(np.array([[1.0, 2.0], [2.0, 1.0]]))[3]


@given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(-0.99, 0.99))
def test_ellipse_against_eigendecomposition(a, d, rho):
    b = rho * math.sqrt(a * d)
    cov = np.array([[a, b], [b, d]])
    major, minor, ang, ok = covariance_ellipse(cov)
    w, V = np.linalg.eigh(cov)
    assert ok
    assert major == pytest.approx(3 * math.sqrt(w[1]), rel=1e-9)
    assert minor == pytest.approx(3 * math.sqrt(max(w[0], 0)), rel=1e-6, abs=1e-9)
    # the major axis direction is an eigenvector of the largest eigenvalue
    u = np.array([math.cos(math.radians(ang)), math.sin(math.radians(ang))])
    if w[1] - w[0] > 1e-9 * w[1]:
        assert abs(u @ V[:, 1]) == pytest.approx(1.0, abs=1e-6)
    assert -90.0 < ang <= 90.0


def test_ellipse_export_stride():
    P = np.tile(np.diag([9.0, 1.0, 1, 1, 1]), (6, 1, 1))
    log = StateLog("m", np.arange(6.0), np.zeros((6, 5)), P, np.array([1, 1, 0, 1, 1, 1], bool))
    rows = ellipse_export(log, every=2)
    assert [r.t for r in rows] == [0.0, 4.0]
    with pytest.raises(DomainError):
        ellipse_export(log, every=0)


def test_consistency_fraction():
    e = ErrorSet("m", np.arange(4.0), np.zeros(4), np.array([0.5, 1.0, 2.5, -4.0]), np.ones(4),
                 np.full(4, 3.0), np.full(4, 3.0), np.ones(4, bool))
    assert e.consistency("cross") == 0.75
