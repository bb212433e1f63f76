"""Kalman and interacting-multiple-model filters for planar train motion.

State vector ``[x, y, v, psi, omega]``: position (m, local east/north),
speed (m/s), heading (rad, CCW from east) and yaw rate (rad/s).  The
prediction is a constant-turn-rate motion driven by the averaged forward
acceleration; the averaged gyro is a measurement of ``omega``; GNSS fixes
update ``(x, y, v)``.

The three IMM models share this structure and differ only in how ``omega``
may evolve:

* straight:       ``omega`` is pulled to zero by a pseudo-measurement
* circular arc:   ``omega`` is (almost) constant and must be clearly nonzero
* unconstrained:  ``omega`` follows a loose random walk (the plain EKF)

All models are advanced together as stacked arrays.  A single-model filter
is the same code with a stack of one, which is why the IMM reduces exactly
to the EKF when it is pinned to the unconstrained model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.special import log_ndtr

from .errors import DomainError, NumericalError
from .geom import wrap_angle

STRAIGHT, ARC, UNCONSTRAINED = 0, 1, 2
MODEL_NAMES = ("straight", "arc", "unconstrained")
LIKELIHOOD_FLOOR = 1e-300
PSD_TOL = 1e-9
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FilterConfig:
    dt: float = 0.1
    warmup: float = 10.0                   # s of GNSS used to initialise
    imu_rate: float = 500.0
    gyro_noise_density: float = 1e-4       # rad/s/sqrt(Hz)
    gyro_bias_allowance: float = 2e-4      # rad/s, unmodelled constant bias
    accel_noise_density: float = 2e-3      # m/s^2/sqrt(Hz)
    accel_bias_allowance: float = 0.03     # m/s^2
    gnss_speed_sigma: float = 0.1          # m/s
    q_position: float = 0.01               # m^2/s, unmodelled lateral motion
    q_speed: float = 0.0025                # m^2/s^3
    q_heading: float = 1e-6                # rad^2/s, covers the unmodelled gyro bias drift
    q_omega: tuple = (1e-8, 1e-12, 1e-3)   # rad^2/s^3 per model
    straight_omega_sigma: float = 5e-5     # rad/s, pseudo-measurement omega = 0
    arc_min_curvature: float = 1.0 / 2000  # 1/m, arcs flatter than this count as straight
    transition: tuple = ((0.98, 0.005, 0.015), (0.005, 0.98, 0.015), (0.01, 0.01, 0.98))
    closed_loop_map: bool = False

    def __post_init__(self):
        pi = np.asarray(self.transition, dtype=float)
        if pi.shape != (3, 3) or np.any(pi < 0) or not np.allclose(pi.sum(axis=1), 1.0, atol=1e-12):
            raise DomainError("transition matrix must be 3x3 row-stochastic")
        if not self.dt > 0.0:
            raise DomainError("filter step must be positive")

    @property
    def imu_per_step(self) -> int:
        return max(int(round(self.dt * self.imu_rate)), 1)

    @property
    def gyro_var(self) -> float:
        return self.gyro_noise_density ** 2 * self.imu_rate / self.imu_per_step + self.gyro_bias_allowance ** 2

    @property
    def accel_var(self) -> float:
        return self.accel_noise_density ** 2 * self.imu_rate / self.imu_per_step + self.accel_bias_allowance ** 2


@dataclass
class KinematicState:
    x: np.ndarray        # (5,)
    P: np.ndarray        # (5, 5)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(5)
        self.P = np.asarray(self.P, dtype=float).reshape(5, 5)

    @property
    def position(self) -> np.ndarray:
        return self.x[:2]

    @property
    def position_cov(self) -> np.ndarray:
        return self.P[:2, :2]


@dataclass
class ImmState:
    models: list          # three KinematicState
    mu: np.ndarray        # (3,)
    transition: np.ndarray
    fused: KinematicState
    flags: set = field(default_factory=set)


@dataclass(frozen=True)
class StepInput:
    """IMU average over one filter step plus an optional GNSS fix."""

    accel: float                 # forward, m/s^2
    gyro: float                  # yaw rate, rad/s
    fix: tuple | None = None     # (x, y, speed, cov 2x2)


# ---------------------------------------------------------------------------
# per-model arithmetic (compiled; explicit loops keep every model's numbers
# independent of how many models are advanced together)


@njit(cache=True)
def _wrap(a):
    return a - TWO_PI * math.floor((a + math.pi) / TWO_PI)


@njit(cache=True)
def _symmetrize1(p):
    for i in range(5):
        for j in range(i + 1, 5):
            v = 0.5 * (p[i, j] + p[j, i])
            p[i, j] = v
            p[j, i] = v


@njit(cache=True)
def _sandwich(A, p, out):
    """out = A p A^T for 5x5 matrices."""
    tmp = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            acc = 0.0
            for k in range(5):
                acc += A[i, k] * p[k, j]
            tmp[i, j] = acc
    for i in range(5):
        for j in range(5):
            acc = 0.0
            for k in range(5):
                acc += tmp[i, k] * A[j, k]
            out[i, j] = acc


@njit(cache=True)
def _predict1(x, p, accel, dt, q_pos, qa, q_speed, q_head, q_om):
    v, psi, om = x[2], x[3], x[4]
    psi_mid = psi + 0.5 * om * dt
    c, s = math.cos(psi_mid), math.sin(psi_mid)
    dist = v * dt + 0.5 * accel * dt * dt
    x[0] += dist * c
    x[1] += dist * s
    x[2] = v + accel * dt
    x[3] = psi + om * dt
    F = np.eye(5)
    F[0, 2] = dt * c
    F[0, 3] = -dist * s
    F[0, 4] = -0.5 * dt * dist * s
    F[1, 2] = dt * s
    F[1, 3] = dist * c
    F[1, 4] = 0.5 * dt * dist * c
    F[3, 4] = dt
    pn = np.empty((5, 5))
    _sandwich(F, p, pn)
    g = 0.5 * dt * dt
    # acceleration noise enters position and speed coherently along the heading
    b = np.array([g * c, g * s, dt, 0.0, 0.0])
    for i in range(5):
        for j in range(5):
            p[i, j] = pn[i, j] + qa * b[i] * b[j]
    p[0, 0] += q_pos * dt
    p[1, 1] += q_pos * dt
    p[2, 2] += q_speed * dt
    p[3, 3] += q_head * dt
    p[4, 4] += q_om * dt
    _symmetrize1(p)


@njit(cache=True)
def _scalar1(x, p, idx, z, r):
    """Joseph-form update of component ``idx``; returns the log-likelihood."""
    innov = z - x[idx]
    S = p[idx, idx] + r
    K = np.empty(5)
    for i in range(5):
        K[i] = p[i, idx] / S
    for i in range(5):
        x[i] += K[i] * innov
    A = np.eye(5)
    for i in range(5):
        A[i, idx] -= K[i]
    pn = np.empty((5, 5))
    _sandwich(A, p, pn)
    for i in range(5):
        for j in range(5):
            p[i, j] = pn[i, j] + r * K[i] * K[j]
    _symmetrize1(p)
    return -0.5 * (innov * innov / S + math.log(TWO_PI * S))


@njit(cache=True)
def _gnss1(x, p, z, R):
    """Joint (x, y, v) update; returns (ok, log-likelihood)."""
    S = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            S[i, j] = p[i, j] + R[i, j]
    det = (S[0, 0] * (S[1, 1] * S[2, 2] - S[1, 2] * S[2, 1])
           - S[0, 1] * (S[1, 0] * S[2, 2] - S[1, 2] * S[2, 0])
           + S[0, 2] * (S[1, 0] * S[2, 1] - S[1, 1] * S[2, 0]))
    if not (det > 0.0) or not math.isfinite(det):
        return False, 0.0
    Si = np.empty((3, 3))
    Si[0, 0] = (S[1, 1] * S[2, 2] - S[1, 2] * S[2, 1]) / det
    Si[0, 1] = (S[0, 2] * S[2, 1] - S[0, 1] * S[2, 2]) / det
    Si[0, 2] = (S[0, 1] * S[1, 2] - S[0, 2] * S[1, 1]) / det
    Si[1, 0] = (S[1, 2] * S[2, 0] - S[1, 0] * S[2, 2]) / det
    Si[1, 1] = (S[0, 0] * S[2, 2] - S[0, 2] * S[2, 0]) / det
    Si[1, 2] = (S[0, 2] * S[1, 0] - S[0, 0] * S[1, 2]) / det
    Si[2, 0] = (S[1, 0] * S[2, 1] - S[1, 1] * S[2, 0]) / det
    Si[2, 1] = (S[0, 1] * S[2, 0] - S[0, 0] * S[2, 1]) / det
    Si[2, 2] = (S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]) / det
    innov = np.empty(3)
    for i in range(3):
        innov[i] = z[i] - x[i]
    K = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += p[i, k] * Si[k, j]
            K[i, j] = acc
    maha = 0.0
    for i in range(3):
        for j in range(3):
            maha += innov[i] * Si[i, j] * innov[j]
    for i in range(5):
        for j in range(3):
            x[i] += K[i, j] * innov[j]
    A = np.eye(5)
    for i in range(5):
        for j in range(3):
            A[i, j] -= K[i, j]
    pn = np.empty((5, 5))
    _sandwich(A, p, pn)
    for i in range(5):
        for j in range(5):
            acc = 0.0
            for k in range(3):
                for m in range(3):
                    acc += K[i, k] * R[k, m] * K[j, m]
            p[i, j] = pn[i, j] + acc
    _symmetrize1(p)
    return True, -0.5 * (maha + math.log(det) + 3.0 * math.log(TWO_PI))


@njit(cache=True)
def _cycle(X, P, accel, gyro, has_fix, z, R, dt, q_pos, qa, q_speed, q_head, q_om, pseudo_r, gyro_var):
    """Predict and update each model of the stack; returns (X, P, loglik, singular)."""
    M = X.shape[0]
    Xo = X.copy()
    Po = P.copy()
    ll = np.zeros(M)
    singular = False
    for m in range(M):
        x = Xo[m]
        p = Po[m]
        _predict1(x, p, accel, dt, q_pos, qa, q_speed, q_head, q_om[m])
        if math.isfinite(pseudo_r[m]):
            _scalar1(x, p, 4, 0.0, pseudo_r[m])
        ll[m] = _scalar1(x, p, 4, gyro, gyro_var)
        if has_fix:
            ok, l = _gnss1(x, p, z, R)
            if ok:
                ll[m] += l
            else:
                singular = True
        if x[2] < 0.0:
            # a train does not reverse; keep the speed variance honest about the clamp
            x[2] = 0.0
            p[2, 2] = max(p[2, 2], 0.01)
    return Xo, Po, ll, singular


@njit(cache=True)
def _moments(X, P, w):
    """Weighted mean and covariance; headings are averaged about the heaviest model."""
    M = X.shape[0]
    ref = 0
    for m in range(1, M):
        if w[m] > w[ref]:
            ref = m
    D = X.copy()
    for m in range(M):
        D[m, 3] = _wrap(X[m, 3] - X[ref, 3])
    mean = np.zeros(5)
    for m in range(M):
        for i in range(5):
            mean[i] += w[m] * D[m, i]
    cov = np.zeros((5, 5))
    for m in range(M):
        for i in range(5):
            for j in range(5):
                cov[i, j] += w[m] * (P[m, i, j] + (D[m, i] - mean[i]) * (D[m, j] - mean[j]))
    mean[3] += X[ref, 3]
    _symmetrize1(cov)
    return mean, cov


@njit(cache=True)
def _mix(X, P, mu, pi):
    M = X.shape[0]
    Xm = X.copy()
    Pm = P.copy()
    for j in range(M):
        c = 0.0
        for i in range(M):
            c += pi[i, j] * mu[i]
        if c > 0.0:
            w = np.empty(M)
            for i in range(M):
                w[i] = pi[i, j] * mu[i] / c
            Xm[j], Pm[j] = _moments(X, P, w)
    return Xm, Pm


def _noise_args(cfg: FilterConfig):
    return (cfg.dt, cfg.q_position, cfg.accel_var, cfg.q_speed, cfg.q_heading)


def _fix_args(inp: StepInput, cfg: FilterConfig):
    if inp.fix is None:
        return False, _NO_Z, _NO_R
    fx, fy, fv, cov = inp.fix
    R = np.zeros((3, 3))
    R[:2, :2] = cov
    R[2, 2] = cfg.gnss_speed_sigma ** 2
    return True, np.array([fx, fy, fv], dtype=float), R


_NO_Z = np.zeros(3)
_NO_R = np.eye(3)


def _run_cycle(X, P, inp: StepInput, cfg: FilterConfig, q_om, pseudo_r, flags: set):
    has_fix, z, R = _fix_args(inp, cfg)
    Xn, Pn, ll, singular = _cycle(X, P, float(inp.accel), float(inp.gyro), has_fix, z, R, *_noise_args(cfg),
                                  q_om, pseudo_r, cfg.gyro_var)
    if singular:
        flags.add("singular_innovation")
    return Xn, Pn, ll


def check_psd(P, tol: float = PSD_TOL) -> None:
    ev = np.linalg.eigvalsh(P)
    if np.any(ev < -tol):
        raise NumericalError(f"covariance lost positive semi-definiteness (eigenvalue {ev.min():.3e})")


def kf_step(state: KinematicState, inp: StepInput, cfg: FilterConfig = FilterConfig(), flags: set | None = None
            ) -> KinematicState:
    """One predict/update cycle of the single-model (unconstrained) EKF."""
    q = np.array([cfg.q_omega[UNCONSTRAINED]])
    X, P, _ = _run_cycle(state.x[None], state.P[None], inp, cfg, q, np.array([np.inf]),
                         flags if flags is not None else set())
    return KinematicState(X[0], P[0])


# ---------------------------------------------------------------------------
# IMM


def _model_params(cfg: FilterConfig):
    q = np.array(cfg.q_omega, dtype=float)
    pr = np.array([cfg.straight_omega_sigma ** 2, np.inf, np.inf])
    return q, pr


def imm_init(state: KinematicState, mu=(1 / 3, 1 / 3, 1 / 3), transition=None,
             cfg: FilterConfig = FilterConfig()) -> ImmState:
    pi = np.asarray(cfg.transition if transition is None else transition, dtype=float)
    models = [KinematicState(state.x.copy(), state.P.copy()) for _ in range(3)]
    return ImmState(models, np.asarray(mu, dtype=float), pi, KinematicState(state.x.copy(), state.P.copy()))


def _imm_arrays(X, P, mu, pi, inp: StepInput, cfg: FilterConfig, flags: set):
    """IMM cycle on raw arrays; returns (X, P, mu, fused x, fused P)."""
    Xm, Pm = _mix(X, P, mu, pi)
    q, pr = _model_params(cfg)
    Xn, Pn, loglik = _run_cycle(Xm, Pm, inp, cfg, q, pr, flags)

    # the arc model also has to explain a clearly nonzero yaw rate
    om_min = cfg.arc_min_curvature * max(Xn[ARC, 2], 0.0)
    sd = math.sqrt(max(Pn[ARC, 4, 4], 1e-30))
    loglik[ARC] += float(np.logaddexp(log_ndtr((Xn[ARC, 4] - om_min) / sd),
                                      log_ndtr((-Xn[ARC, 4] - om_min) / sd)))

    # probability update in the log domain with a floor against underflow
    c = mu @ pi
    floor = math.log(LIKELIHOOD_FLOOR)
    if np.all(loglik < floor):
        flags.add("likelihood_underflow")
        mu_new = mu.copy()
    else:
        with np.errstate(divide="ignore"):
            logpost = np.maximum(loglik, floor) + np.log(c)
        e = np.exp(logpost - np.max(logpost))
        mu_new = e / e.sum()
    fx, fP = _moments(Xn, Pn, mu_new)
    return Xn, Pn, mu_new, fx, fP


def imm_step(imm: ImmState, inp: StepInput, cfg: FilterConfig = FilterConfig()) -> ImmState:
    """One IMM cycle: mix, per-model filter, probability update, fuse."""
    X = np.stack([m.x for m in imm.models])
    P = np.stack([m.P for m in imm.models])
    flags: set = set()
    Xn, Pn, mu, fx, fP = _imm_arrays(X, P, imm.mu, imm.transition, inp, cfg, flags)
    models = [KinematicState(Xn[j], Pn[j]) for j in range(3)]
    return ImmState(models, mu, imm.transition, KinematicState(fx, fP), flags)


# ---------------------------------------------------------------------------
# running over streams


@dataclass
class StateLog:
    """Filter output on the 1 Hz evaluation grid."""

    method: str
    t: np.ndarray
    x: np.ndarray            # (N, 5) state; NaN rows where unavailable
    P: np.ndarray            # (N, 5, 5)
    available: np.ndarray    # bool
    mu: np.ndarray | None = None          # (N, 3)
    omega_arc: np.ndarray | None = None   # arc-model yaw rate and its σ
    sigma_omega_arc: np.ndarray | None = None
    flags: list = field(default_factory=list)
    fused: dict | None = None             # map-fusion columns, if any

    def __len__(self):
        return len(self.t)

    def states(self, idx=None):
        idx = range(len(self.t)) if idx is None else idx
        return [KinematicState(self.x[i], self.P[i]) for i in idx]

    def select(self, mask) -> "StateLog":
        def pick(a):
            return None if a is None else a[mask]
        fused = None if self.fused is None else {k: v[mask] for k, v in self.fused.items()}
        return replace(self, t=self.t[mask], x=self.x[mask], P=self.P[mask], available=self.available[mask],
                       mu=pick(self.mu), omega_arc=pick(self.omega_arc),
                       sigma_omega_arc=pick(self.sigma_omega_arc), fused=fused)


def _step_inputs(gnss, imu, cfg: FilterConfig, t0: float, t_end: float):
    """Yield ``(t, StepInput)`` on the filter grid after ``t0``."""
    k0 = int(round(t0 / cfg.dt))
    k1 = int(math.floor(t_end / cfg.dt + 1e-9))
    fix_index = {int(round(t / cfg.dt)): i for i, t in enumerate(gnss.t)
                 if abs(t / cfg.dt - round(t / cfg.dt)) < 1e-6}
    # per-step IMU means over (t_{k-1}, t_k]
    idx_end = np.searchsorted(imu.t, np.arange(k0, k1 + 1) * cfg.dt + 1e-9, side="left")
    for k in range(k0 + 1, k1 + 1):
        a, b = idx_end[k - 1 - k0], idx_end[k - k0]
        if b <= a:
            raise DomainError(f"no IMU samples between {(k - 1) * cfg.dt:.3f} s and {k * cfg.dt:.3f} s")
        accel = float(np.mean(imu.accel[a:b, 0]))
        gyro = float(np.mean(imu.gyro[a:b, 2]))
        fix = None
        i = fix_index.get(k)
        if i is not None:
            fix = (float(gnss.x[i]), float(gnss.y[i]), float(gnss.speed[i]), gnss.cov[i])
        yield k * cfg.dt, StepInput(accel, gyro, fix)


def initial_state(gnss, imu, cfg: FilterConfig = FilterConfig()) -> tuple[float, KinematicState]:
    """Start time and state from a straight-line fit to the warm-up fixes."""
    t0 = cfg.warmup
    sel = gnss.t <= t0 + 1e-9
    if np.count_nonzero(sel) < 3:
        raise DomainError("fewer than 3 GNSS fixes in the warm-up window")
    t = gnss.t[sel]
    tm = t.mean()
    sxx = float(np.sum((t - tm) ** 2))
    bx, ax = np.polyfit(t - tm, gnss.x[sel], 1)
    by, ay = np.polyfit(t - tm, gnss.y[sel], 1)
    var = float(np.mean(gnss.cov[sel][:, [0, 1], [0, 1]]))
    speed = math.hypot(bx, by)
    # heading of the chord, carried from the window midpoint to t0 by the gyro
    m = (imu.t > tm) & (imu.t <= t0)
    turn = float(np.sum(imu.gyro[m, 2])) / cfg.imu_rate
    psi = wrap_angle(math.atan2(by, bx) + turn)
    omega = float(np.mean(imu.gyro[(imu.t > t0 - cfg.dt) & (imu.t <= t0), 2]))
    # quadratic drift of a curving chord over half the window
    x = np.array([ax + bx * (t0 - tm), ay + by * (t0 - tm), speed, psi, omega])
    pos_var = var * (1.0 / len(t) + (t0 - tm) ** 2 / sxx)
    v_var = var / sxx
    P = np.diag([4.0 * pos_var, 4.0 * pos_var, 4.0 * v_var + cfg.gnss_speed_sigma ** 2,
                 4.0 * v_var / max(speed, 1.0) ** 2 + 1e-4, cfg.gyro_var])
    return t0, KinematicState(x, P)


def run_kf(gnss, imu, cfg: FilterConfig = FilterConfig(), t_end: float | None = None,
           constraint=None) -> StateLog:
    """Single-model filter over the streams, logged on whole seconds.

    ``constraint(X, P)`` (optional) updates stacked states in place once per
    logged epoch; it is how a map is fed back into the filter.
    """
    t_end = float(imu.t[-1]) if t_end is None else t_end
    t0, state = initial_state(gnss, imu, cfg)
    rows_t, rows_x, rows_p = [t0], [state.x], [state.P]
    flags: list = []
    for t, inp in _step_inputs(gnss, imu, cfg, t0, t_end):
        f: set = set()
        state = kf_step(state, inp, cfg, f)
        if f:
            flags.append((t, sorted(f)))
        if constraint is not None and _on_epoch(t):
            X, P = state.x[None].copy(), state.P[None].copy()
            constraint(X, P)
            state = KinematicState(X[0], P[0])
        if _on_epoch(t):
            rows_t.append(t)
            rows_x.append(state.x)
            rows_p.append(state.P)
    return _log("kf", rows_t, rows_x, rows_p, flags)


def run_imm(gnss, imu, cfg: FilterConfig = FilterConfig(), t_end: float | None = None,
            constraint=None) -> StateLog:
    """Three-model IMM over the streams; ``constraint`` as for :func:`run_kf`."""
    t_end = float(imu.t[-1]) if t_end is None else t_end
    t0, state = initial_state(gnss, imu, cfg)
    imm = imm_init(state, cfg=cfg)
    X = np.stack([m.x for m in imm.models])
    P = np.stack([m.P for m in imm.models])
    mu, pi = imm.mu, imm.transition
    rows_t, rows_x, rows_p = [t0], [state.x], [state.P]
    rows_mu, rows_om, rows_som = [mu], [state.x[4]], [math.sqrt(state.P[4, 4])]
    flags: list = []
    for t, inp in _step_inputs(gnss, imu, cfg, t0, t_end):
        f: set = set()
        X, P, mu, fx, fP = _imm_arrays(X, P, mu, pi, inp, cfg, f)
        if f:
            flags.append((t, sorted(f)))
        if constraint is not None and _on_epoch(t):
            constraint(X, P)
            fx, fP = _moments(X, P, mu)
        if _on_epoch(t):
            rows_t.append(t)
            rows_x.append(fx)
            rows_p.append(fP)
            rows_mu.append(mu)
            rows_om.append(X[ARC, 4])
            rows_som.append(math.sqrt(P[ARC, 4, 4]))
    log = _log("imm", rows_t, rows_x, rows_p, flags)
    log.mu = np.array(rows_mu)
    log.omega_arc = np.array(rows_om)
    log.sigma_omega_arc = np.array(rows_som)
    return log


def gnss_log(gnss, t_grid: np.ndarray) -> StateLog:
    """Fixes placed on the evaluation grid; epochs without a fix are unavailable."""
    n = len(t_grid)
    X = np.full((n, 5), np.nan)
    P = np.full((n, 5, 5), np.nan)
    avail = np.zeros(n, dtype=bool)
    lookup = {round(float(t), 6): i for i, t in enumerate(gnss.t)}
    for k, t in enumerate(t_grid):
        i = lookup.get(round(float(t), 6))
        if i is None:
            continue
        X[k, :3] = (gnss.x[i], gnss.y[i], gnss.speed[i])
        P[k] = 0.0
        P[k, :2, :2] = gnss.cov[i]
        avail[k] = True
    return StateLog("gnss", np.asarray(t_grid, dtype=float), X, P, avail)


def _on_epoch(t: float) -> bool:
    return abs(t - round(t)) < 1e-6


def _log(method, ts, xs, ps, flags) -> StateLog:
    t = np.round(np.array(ts), 6)
    return StateLog(method, t, np.array(xs), np.array(ps), np.ones(len(t), dtype=bool), flags=flags)
