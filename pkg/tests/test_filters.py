import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trackloc.filters import (ARC, STRAIGHT, UNCONSTRAINED, FilterConfig, ImmState, KinematicState, StepInput,
                              _scalar1, _step_inputs, check_psd, imm_init, imm_step, initial_state, kf_step,
                              run_imm, run_kf)
from trackloc.geom import wrap_angle
from trackloc.sim import RunConfig, build_track, simulate_run

from conftest import ORIGIN, short_config, short_track

CFG = FilterConfig()


def straight_run(seed=0, noiseless=False, **kw):
    cfg = RunConfig(speed_profile=((0.0, 12.0),), seed=seed, **kw)
    return simulate_run(build_track([("st", 1200.0)], ORIGIN, 0.0), cfg.noiseless() if noiseless else cfg)


def assert_valid_cov(P):
    assert np.max(np.abs(P - P.T)) <= 1e-12 * max(1.0, np.abs(P).max())
    assert np.linalg.eigvalsh(P).min() >= -1e-9


def test_scalar_update_textbook_case():
    x = np.zeros(5)
    p = np.eye(5)
    ll = _scalar1(x, p, 4, 2.0, 1.0)
    assert x[4] == 1.0 and p[4, 4] == 0.5
    assert ll == pytest.approx(-0.5 * (4.0 / 2.0 + math.log(2 * math.pi * 2.0)))
    assert np.array_equal(x[:4], np.zeros(4))


def _oracle_steady_state(cfg: FilterConfig, r_pos: float, n_periods: int):
    """Covariance recursion of the stationary filter written out in matrix form."""
    dt = cfg.dt
    F = np.eye(5)
    F[0, 2] = dt
    F[3, 4] = dt
    b = np.array([0.5 * dt * dt, 0.0, dt, 0.0, 0.0])
    Q = cfg.accel_var * np.outer(b, b) + np.diag([cfg.q_position * dt, cfg.q_position * dt, cfg.q_speed * dt,
                                                   cfg.q_heading * dt, cfg.q_omega[UNCONSTRAINED] * dt])

    def update(P, H, R):
        S = H @ P @ H.T + R
        K = P @ H.T @ np.linalg.inv(S)
        return (np.eye(5) - K @ H) @ P

    Hg = np.zeros((1, 5))
    Hg[0, 4] = 1.0
    Hf = np.eye(5)[:3]
    Rf = np.diag([r_pos, r_pos, cfg.gnss_speed_sigma ** 2])
    P = np.diag([25.0, 25.0, 1.0, 1e-2, 1e-4])
    steps = round(1.0 / dt)
    for _ in range(n_periods):
        for k in range(steps):
            P = F @ P @ F.T + Q
            P = update(P, Hg, np.array([[cfg.gyro_var]]))
        P = update(P, Hf, Rf)
    return P


def test_stationary_filter_reaches_riccati_fixed_point():
    r_pos = 4.0
    fix = (0.0, 0.0, 0.0, r_pos * np.eye(2))
    steps = round(1.0 / CFG.dt)

    def run(x0, n):
        s = KinematicState(x0, np.diag([25.0, 25.0, 1.0, 1e-2, 1e-4]))
        for _ in range(n):
            for k in range(steps):
                s = kf_step(s, StepInput(0.0, 0.0, fix if k == steps - 1 else None), CFG)
        return s

    s = run(np.zeros(5), 100)
    assert np.allclose(s.P, _oracle_steady_state(CFG, r_pos, 100), rtol=1e-9, atol=1e-15)
    P_inf = _oracle_steady_state(CFG, r_pos, 1000)
    assert s.P[0, 0] == pytest.approx(P_inf[0, 0], rel=1e-4)
    assert s.P[1, 1] == pytest.approx(P_inf[1, 1], rel=1e-4)
    off = run(np.array([3.0, -2.0, 0.0, 0.0, 0.0]), 100)
    sig = 3 * math.sqrt(P_inf[0, 0])
    assert abs(off.x[0]) <= sig and abs(off.x[1]) <= sig


def test_prediction_only_trace_is_nondecreasing():
    run = straight_run(seed=1, outages=((40.0, 70.0),))
    t0, s = initial_state(run.gnss, run.imu, CFG)
    traces = []
    for t, inp in _step_inputs(run.gnss, run.imu, CFG, t0, 70.0):
        s = kf_step(s, inp, CFG)
        if t > 40.0 + 1e-9:
            assert inp.fix is None
            traces.append(np.trace(s.P))
    assert len(traces) > 200
    assert np.all(np.diff(traces) >= 0.0)


def test_singular_innovation_is_skipped_and_flagged():
    s = KinematicState(np.zeros(5), np.diag([0.0, 0.0, 0.0, 1e-3, 1e-4]))
    flags = set()
    cfg = FilterConfig(gnss_speed_sigma=0.0, q_position=0.0, q_speed=0.0, accel_bias_allowance=0.0,
                       accel_noise_density=0.0)
    out = kf_step(s, StepInput(0.0, 0.0, (1.0, 1.0, 0.0, np.zeros((2, 2)))), cfg, flags)
    assert "singular_innovation" in flags
    assert out.x[0] == 0.0


def test_imm_pinned_to_unconstrained_is_the_ekf():
    run = simulate_run(short_track(), short_config(seed=3, speed_profile=((0.0, 2.0),)))
    t0, s0 = initial_state(run.gnss, run.imu, CFG)
    kf = KinematicState(s0.x.copy(), s0.P.copy())
    imm = imm_init(s0, mu=(0.0, 0.0, 1.0), transition=np.eye(3), cfg=CFG)
    epochs = 0
    for t, inp in _step_inputs(run.gnss, run.imu, CFG, t0, run.imu.t[-1]):
        kf = kf_step(kf, inp, CFG)
        imm = imm_step(imm, inp, CFG)
        assert np.array_equal(imm.fused.x, kf.x)
        assert np.array_equal(imm.fused.P, kf.P)
        epochs += inp.fix is not None
        if epochs >= 500:
            break
    assert epochs == 500


def moment_match(models, mu):
    ref = int(np.argmax(mu))
    X = np.array([m.x for m in models])
    X[:, 3] = X[ref, 3] + np.array([wrap_angle(h - X[ref, 3]) for h in X[:, 3]])
    mean = mu @ X
    cov = sum(w * (m.P + np.outer(x - mean, x - mean)) for w, m, x in zip(mu, models, X))
    return mean, cov


def test_imm_probabilities_and_fusion_over_a_run():
    run = simulate_run(short_track(), short_config(seed=5))
    t0, s0 = initial_state(run.gnss, run.imu, CFG)
    imm = imm_init(s0, cfg=CFG)
    for _, inp in _step_inputs(run.gnss, run.imu, CFG, t0, run.imu.t[-1]):
        imm = imm_step(imm, inp, CFG)
        assert abs(imm.mu.sum() - 1.0) <= 1e-12
        assert np.all((imm.mu >= 0) & (imm.mu <= 1))
        for m in imm.models:
            assert_valid_cov(m.P)
        mean, cov = moment_match(imm.models, imm.mu)
        assert np.allclose(imm.fused.x, mean, atol=1e-9, rtol=0)
        assert np.allclose(imm.fused.P, cov, atol=1e-9, rtol=1e-9)


@given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3), st.floats(-50, 50), st.floats(-50, 50),
       st.floats(-0.05, 0.05), st.floats(0.5, 30.0))
def test_mu_normalised_for_any_input(w, fx, fy, gyro, sigma):
    mu = np.array(w) / sum(w)
    s = KinematicState([0.0, 0.0, 10.0, 0.3, 0.0], np.diag([4.0, 4.0, 0.1, 1e-3, 1e-4]))
    imm = imm_init(s, mu=mu, cfg=CFG)
    for k in range(3):
        imm = imm_step(imm, StepInput(0.1, gyro, (fx, fy, 10.0, sigma ** 2 * np.eye(2)) if k == 2 else None), CFG)
        assert abs(imm.mu.sum() - 1.0) <= 1e-12
        check_psd(imm.fused.P)


def test_underflow_keeps_mu_and_flags():
    s = KinematicState([0.0, 0.0, 10.0, 0.0, 0.0], np.diag([0.01, 0.01, 0.01, 1e-4, 1e-6]))
    imm = imm_init(s, mu=(0.2, 0.3, 0.5), cfg=CFG)
    out = imm_step(imm, StepInput(0.0, 0.0, (1e6, 1e6, 10.0, 0.01 * np.eye(2))), CFG)
    assert "likelihood_underflow" in out.flags
    assert np.array_equal(out.mu, imm.mu)


def _first_epoch_above(log, model, level=0.9):
    idx = np.flatnonzero(log.mu[:, model] > level)
    return idx[0] if idx.size else None


def test_noiseless_straight_locks_quickly():
    run = straight_run(noiseless=True)
    log = run_imm(run.gnss, run.imu, CFG, t_end=CFG.warmup + 30.0)
    k = _first_epoch_above(log, STRAIGHT)
    assert k is not None and k <= 10


def test_noiseless_arc_locks_quickly():
    track = build_track([("ca", 900.0, 213.0)], ORIGIN, 0.0)
    run = simulate_run(track, RunConfig(speed_profile=((0.0, 12.0),)).noiseless())
    log = run_imm(run.gnss, run.imu, CFG, t_end=CFG.warmup + 30.0)
    k = _first_epoch_above(log, ARC)
    assert k is not None and k <= 10


def test_straight_model_cross_track_grows_slower_in_outage():
    # lock on the straight with normal mixing, then let each model run the
    # outage on its own so the growth reflects the model, not the mixing
    run = straight_run(seed=2, outages=((50.0, 65.0),))
    t0, s0 = initial_state(run.gnss, run.imu, CFG)
    imm = imm_init(s0, cfg=CFG)
    growth = []
    for t, inp in _step_inputs(run.gnss, run.imu, CFG, t0, 65.0):
        imm = imm_step(imm, inp, CFG)
        if abs(t - 50.0) < 1e-9:
            assert imm.mu[STRAIGHT] > 0.9
            imm = ImmState(imm.models, imm.mu, np.eye(3), imm.fused)
            start = [m.P[1, 1] for m in imm.models]
        elif t > 50.0 and abs(t - round(t)) < 1e-6:
            growth.append([m.P[1, 1] - s for m, s in zip(imm.models, start)])
    growth = np.array(growth)
    assert len(growth) == 15
    assert np.all(growth[:, STRAIGHT] < growth[:, UNCONSTRAINED])
    assert np.all(np.diff(growth[:, UNCONSTRAINED] - growth[:, STRAIGHT]) > 0)


def test_logs_share_the_epoch_grid_and_stay_valid():
    run = simulate_run(short_track(), short_config(seed=6, outages=((30.0, 40.0),)))
    kf = run_kf(run.gnss, run.imu, CFG)
    imm = run_imm(run.gnss, run.imu, CFG)
    assert np.array_equal(kf.t, imm.t)
    assert np.allclose(imm.mu.sum(axis=1), 1.0, atol=1e-12, rtol=0)
    for P in np.concatenate([kf.P, imm.P]):
        assert_valid_cov(P)


def test_transition_matrix_validation():
    from trackloc.errors import DomainError
    with pytest.raises(DomainError):
        FilterConfig(transition=((0.5, 0.5, 0.1), (0, 1, 0), (0, 0, 1)))
