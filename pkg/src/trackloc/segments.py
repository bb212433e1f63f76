"""Geometry segments from IMM model probabilities, and straight/arc fits.

A segment opens once the straight or arc model has held a probability above
``open_level`` for ``open_epochs`` consecutive epochs and closes when that
probability falls below ``close_level``.  An arc is additionally split when
the arc model's yaw rate moves to a new level, which is how two arcs that
follow each other with only a short transition are told apart.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateFitError, DomainError
from .filters import ARC, STRAIGHT, KinematicState
from .geom import Pose2, Shape, wrap_angle
from .trackmap import IdentifiedSegment

MAX_RADIUS = 1.0e5  # m; flatter arcs are treated as straights


class EventKind(str, enum.Enum):
    ENTER_STRAIGHT = "enter_straight"
    ENTER_ARC = "enter_arc"
    ENTER_UNKNOWN = "enter_unknown"


@dataclass(frozen=True)
class GeometryEvent:
    kind: EventKind
    t: float
    closing_t: float

    @property
    def shape(self) -> Shape | None:
        return {EventKind.ENTER_STRAIGHT: Shape.STRAIGHT, EventKind.ENTER_ARC: Shape.CIRCULAR_ARC}.get(self.kind)


@dataclass(frozen=True)
class SegmentConfig:
    open_level: float = 0.9
    open_epochs: int = 3
    close_level: float = 0.5
    shift_sigmas: float = 3.0
    shift_epochs: int = 3
    omega_sigma_floor: float = 1e-3   # rad/s, added in quadrature to the arc model's σ
    min_epochs: int = 5               # shorter segments (mostly pieces of a transition) are dropped


def _runs(t, mu, cfg: SegmentConfig):
    """(model, first, last) epoch index triples of hysteresis segments."""
    n = len(t)
    out = []
    k = 0
    while k < n:
        opened = None
        for m in (STRAIGHT, ARC):
            if k + cfg.open_epochs <= n and np.all(mu[k:k + cfg.open_epochs, m] > cfg.open_level):
                opened = m
                break
        if opened is None:
            k += 1
            continue
        end = k + cfg.open_epochs - 1
        while end + 1 < n and mu[end + 1, opened] >= cfg.close_level:
            end += 1
        out.append((opened, k, end))
        k = end + 1
    return out


def _split_arc(first: int, last: int, omega, sigma, cfg: SegmentConfig):
    """Cut an arc run wherever the yaw rate leaves its running level for good."""
    pieces = []
    start = first
    run = 0
    for j in range(first + 1, last + 1):
        level = float(np.mean(omega[start:j - run]))
        s_eff = math.hypot(sigma[j], cfg.omega_sigma_floor)
        if abs(omega[j] - level) > cfg.shift_sigmas * s_eff:
            run += 1
            if run == cfg.shift_epochs:
                cut = j - run + 1
                pieces.append((start, cut - 1))
                start, run = cut, 0
        else:
            run = 0
    pieces.append((start, last))
    return pieces


def classify_segments(t, mu, omega_arc=None, sigma_omega_arc=None,
                      cfg: SegmentConfig = SegmentConfig()) -> list[GeometryEvent]:
    """Hysteresis segmentation of an IMM probability history.

    ``t`` are the epoch times, ``mu`` the ``(N, 3)`` probabilities of the
    straight, arc and unconstrained models; ``omega_arc`` and
    ``sigma_omega_arc`` (optional) drive the split of consecutive arcs.
    Segments spanning fewer than ``cfg.min_epochs`` epochs are dropped, and
    periods covered by no segment are reported as ``enter_unknown``.
    """
    t = np.asarray(t, dtype=float)
    if t.size == 0:
        return []
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (len(t), 3):
        raise DomainError("mu history must be (N, 3)")
    if np.any(np.diff(t) <= 0):
        raise DomainError("history must be strictly time-ordered")
    spans = []
    for m, a, b in _runs(t, mu, cfg):
        if m == ARC and omega_arc is not None:
            sig = np.zeros(len(t)) if sigma_omega_arc is None else np.asarray(sigma_omega_arc, dtype=float)
            for a2, b2 in _split_arc(a, b, np.asarray(omega_arc, dtype=float), sig, cfg):
                spans.append((m, a2, b2))
        else:
            spans.append((m, a, b))
    spans = [sp for sp in spans if sp[2] - sp[1] + 1 >= cfg.min_epochs]
    events = []
    prev_end = None
    for m, a, b in spans:
        if prev_end is not None and a > prev_end + 1:
            events.append(GeometryEvent(EventKind.ENTER_UNKNOWN, float(t[prev_end]), float(t[a])))
        kind = EventKind.ENTER_STRAIGHT if m == STRAIGHT else EventKind.ENTER_ARC
        events.append(GeometryEvent(kind, float(t[a]), float(t[b])))
        prev_end = b
    return events


# ---------------------------------------------------------------------------
# parameter fits


def _xy_weights(states: Sequence) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(states, np.ndarray):
        xy = np.asarray(states, dtype=float)[:, :2]
        return xy, np.ones(len(xy))
    xy = np.array([s.x[:2] for s in states], dtype=float)
    # isotropic weight from the mean position variance of each state
    var = np.array([0.5 * (s.P[0, 0] + s.P[1, 1]) for s in states], dtype=float)
    if np.any(~np.isfinite(var)) or np.any(var <= 0):
        return xy, np.ones(len(xy))
    return xy, 1.0 / var


def _times(states, times):
    n = len(states)
    if times is None:
        return 0.0, float(n - 1)
    return float(times[0]), float(times[-1])


def fit_straight_params(states, times=None) -> IdentifiedSegment:
    """Weighted total-least-squares line through the state positions.

    The anchor is the first position projected onto the line; the heading
    points in the direction of travel.
    """
    if len(states) < 3:
        raise DomainError("a straight fit needs at least 3 states")
    xy, w = _xy_weights(states)
    if not np.all(np.isfinite(xy)):
        raise DomainError("non-finite state positions")
    c = (w @ xy) / w.sum()
    d = xy - c
    scatter = (d * w[:, None]).T @ d
    _, vec = np.linalg.eigh(scatter)
    u = vec[:, 1]
    if (xy[-1] - xy[0]) @ u < 0:
        u = -u
    along = d @ u
    perp = d @ np.array([-u[1], u[0]])
    length = float(along[-1] - along[0])
    if not length > 0.0:
        raise DegenerateFitError("states do not progress along the fitted line")
    anchor = c + along[0] * u
    t0, t1 = _times(states, times)
    rms = float(np.sqrt(np.mean(perp * perp)))
    return IdentifiedSegment(Shape.STRAIGHT, t0, t1, Pose2(float(anchor[0]), float(anchor[1]),
                                                             math.atan2(u[1], u[0]), 0.0),
                             length, 0.0, rms)


@dataclass(frozen=True)
class CircleFit:
    cx: float
    cy: float
    radius: float
    radius_sigma: float
    rms: float


def fit_circle(xy: np.ndarray, w: np.ndarray | None = None, iterations: int = 50) -> CircleFit:
    """Geometric circle fit: algebraic seed, then Gauss-Newton on distances."""
    xy = np.asarray(xy, dtype=float)
    w = np.ones(len(xy)) if w is None else np.asarray(w, dtype=float)
    if len(xy) < 3:
        raise DomainError("a circle fit needs at least 3 points")
    m = (w @ xy) / w.sum()
    p = xy - m
    scale = float(np.sqrt(np.mean(np.sum(p * p, axis=1))))
    if scale == 0.0:
        raise DegenerateFitError("all points coincide")
    q = p / scale
    A = np.column_stack([q[:, 0], q[:, 1], np.ones(len(q))])
    b = -(q[:, 0] ** 2 + q[:, 1] ** 2)
    sw = np.sqrt(w)
    sol, _, rank, _ = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)
    if rank < 3:
        raise DegenerateFitError("points are collinear")
    cx, cy = -0.5 * sol[0], -0.5 * sol[1]
    r2 = cx * cx + cy * cy - sol[2]
    if not np.all(np.isfinite(sol)) or r2 <= 0 or math.sqrt(r2) * scale > MAX_RADIUS:
        raise DegenerateFitError("points are too close to collinear for an arc")
    theta = np.array([cx * scale, cy * scale, math.sqrt(r2) * scale])
    for _ in range(iterations):
        dx = p[:, 0] - theta[0]
        dy = p[:, 1] - theta[1]
        dist = np.hypot(dx, dy)
        if np.any(dist == 0):
            raise DegenerateFitError("a point sits on the fitted center")
        res = dist - theta[2]
        J = np.column_stack([-dx / dist, -dy / dist, -np.ones(len(p))])
        step, *_ = np.linalg.lstsq(J * sw[:, None], -res * sw, rcond=None)
        theta = theta + step
        if np.max(np.abs(step)) <= 1e-12 * max(1.0, abs(theta[2])):
            break
    if not np.all(np.isfinite(theta)) or abs(theta[2]) > MAX_RADIUS:
        raise DegenerateFitError("points are too close to collinear for an arc")
    dx = p[:, 0] - theta[0]
    dy = p[:, 1] - theta[1]
    dist = np.hypot(dx, dy)
    res = dist - abs(theta[2])
    J = np.column_stack([-dx / dist, -dy / dist, -np.ones(len(p))])
    dof = max(len(p) - 3, 1)
    s2 = float((w * res * res).sum()) / dof
    try:
        cov = np.linalg.inv((J * w[:, None]).T @ J) * s2
        r_sigma = float(math.sqrt(max(cov[2, 2], 0.0)))
    except np.linalg.LinAlgError:
        r_sigma = math.inf
    return CircleFit(float(theta[0] + m[0]), float(theta[1] + m[1]), float(abs(theta[2])), r_sigma,
                     float(np.sqrt(np.mean(res * res))))


def fit_arc_params(states, times=None) -> IdentifiedSegment:
    """Circular arc through the state positions.

    The curvature is positive for left turns (counter-clockwise travel);
    the length is the arc subtended between the first and last positions.
    Raises :class:`DegenerateFitError` when the points are nearly collinear.
    """
    if len(states) < 3:
        raise DomainError("an arc fit needs at least 3 states")
    xy, w = _xy_weights(states)
    if not np.all(np.isfinite(xy)):
        raise DomainError("non-finite state positions")
    fit = fit_circle(xy, w)
    ang = np.unwrap(np.arctan2(xy[:, 1] - fit.cy, xy[:, 0] - fit.cx))
    sweep = float(ang[-1] - ang[0])
    if sweep == 0.0:
        raise DegenerateFitError("states do not progress along the fitted arc")
    sign = 1.0 if sweep > 0 else -1.0
    kappa = sign / fit.radius
    a0 = float(ang[0])
    anchor = Pose2(fit.cx + fit.radius * math.cos(a0), fit.cy + fit.radius * math.sin(a0),
                   wrap_angle(a0 + sign * math.pi / 2), kappa)
    t0, t1 = _times(states, times)
    return IdentifiedSegment(Shape.CIRCULAR_ARC, t0, t1, anchor, abs(sweep) * fit.radius, kappa, fit.rms)


def identify_segments(log, events: Sequence[GeometryEvent], min_epochs: int = 3) -> list[IdentifiedSegment]:
    """Fit every straight/arc event against the fused states of ``log``.

    Arcs whose fit degenerates are fitted as straights instead.
    """
    out = []
    for ev in events:
        if ev.shape is None:
            continue
        sel = np.flatnonzero((log.t >= ev.t - 1e-9) & (log.t <= ev.closing_t + 1e-9) & log.available)
        if len(sel) < min_epochs:
            continue
        states = [KinematicState(log.x[i], log.P[i]) for i in sel]
        times = log.t[sel]
        try:
            if ev.shape is Shape.CIRCULAR_ARC:
                try:
                    seg = fit_arc_params(states, times)
                except DegenerateFitError:
                    seg = fit_straight_params(states, times)
            else:
                seg = fit_straight_params(states, times)
        except DegenerateFitError:
            continue
        out.append(seg)
    return out
