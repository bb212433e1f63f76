"""Map-constrained position fixes.

The track centreline is treated as a measurement of zero cross-track offset.
Only the cross-track component of the position is updated; the along-track
variance is kept and the along/cross correlation coefficient is preserved,
so the constraint adds no along-track information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .filters import StateLog
from .geodesy import GeoPoint
from .trackmap import TrackMap

MIN_MAP_SIGMA = 0.25      # m
GATE_FACTOR = 3.0         # times the cross-track 3-sigma
GATE_OFFSET = 20.0        # m
END_TOLERANCE = 1.0       # m past a chain end still counts as on the map


@dataclass(frozen=True)
class FusedPosition:
    t: float
    position: np.ndarray       # (2,)
    covariance: np.ndarray     # (2, 2)
    along_track: float         # m, map station of the foot point (NaN without a map)
    map_constrained: bool


def map_sigma(track: TrackMap | None, floor: float = MIN_MAP_SIGMA) -> float:
    """Cross-track σ assigned to a map.

    The larger of the map's own σ (when recorded) and its refinement RMS,
    floored at ``floor``.
    """
    if track is None:
        return floor
    vals = [v for v in (track.map_sigma, track.fit_rms) if v is not None and math.isfinite(v)]
    return max(vals + [floor])


def _fuse_arrays(pos, cov, station, offset, heading, beyond, sigma_m):
    """Vectorised cross-track update.

    ``offset`` is the signed distance of each position from the map (left
    positive), ``heading`` the track heading at the foot point.
    """
    n = len(pos)
    c, s = np.cos(heading), np.sin(heading)
    R = np.empty((n, 2, 2))
    R[:, 0, 0], R[:, 0, 1] = c, s      # rows: along, cross
    R[:, 1, 0], R[:, 1, 1] = -s, c
    T = R @ cov @ R.transpose(0, 2, 1)
    paa, pac, pcc = T[:, 0, 0], T[:, 0, 1], T[:, 1, 1]
    ok = np.isfinite(pcc) & np.isfinite(offset) & (pcc >= 0.0) & ~beyond
    gate = GATE_FACTOR * 3.0 * np.sqrt(np.where(ok, pcc, 0.0)) + GATE_OFFSET
    ok &= np.abs(np.nan_to_num(offset, nan=np.inf)) <= gate
    r = sigma_m * sigma_m
    with np.errstate(invalid="ignore", divide="ignore"):
        gain = np.where(ok, pcc / (pcc + r), 0.0)
        pcc_new = pcc * (1.0 - gain)
        rho = np.where(paa * pcc > 0.0, pac / np.sqrt(paa * pcc), 0.0)
        pac_new = rho * np.sqrt(paa * pcc_new)
    new_pos = pos - (gain * offset)[:, None] * np.column_stack([-s, c])
    Tn = np.empty_like(T)
    Tn[:, 0, 0] = paa
    Tn[:, 0, 1] = Tn[:, 1, 0] = pac_new
    Tn[:, 1, 1] = pcc_new
    new_cov = R.transpose(0, 2, 1) @ Tn @ R
    new_cov = 0.5 * (new_cov + new_cov.transpose(0, 2, 1))
    new_pos = np.where(ok[:, None], new_pos, pos)
    new_cov = np.where(ok[:, None, None], new_cov, cov)
    return new_pos, new_cov, ok


def fuse_with_map(state, track: TrackMap | None, sigma_m: float, frame: GeoPoint | None = None,
                  t: float = math.nan) -> FusedPosition:
    """Constrain one state to the map.

    ``frame`` is the tangent plane the state lives in (default: the map
    origin).  Passes the state through unconstrained when there is no map,
    when the state is past either end of the map, or when it is farther from
    the map than the gate.
    """
    if not sigma_m > 0.0:
        raise DomainError("map sigma must be positive")
    pos = np.asarray(state.x[:2], dtype=float)
    cov = np.asarray(state.P[:2, :2], dtype=float)
    if not np.all(np.isfinite(cov)) or np.linalg.eigvalsh(cov)[0] < -1e-9:
        raise DomainError("state covariance is not a valid covariance")
    if track is None or len(track.elements) == 0 or not np.all(np.isfinite(pos)):
        return FusedPosition(t, pos.copy(), cov.copy(), math.nan, False)
    chain = track.chain(frame)
    st, d = chain.project(pos[None, :])
    beyond = _beyond_ends(chain, pos[None, :], st)
    _, _, h, _ = chain.evaluate(st)
    p, P, ok = _fuse_arrays(pos[None, :], cov[None], st, d, h, beyond, sigma_m)
    return FusedPosition(t, p[0], P[0], float(st[0]), bool(ok[0]))


def _beyond_ends(chain, pos, st):
    """Positions whose foot point is a chain end and which lie past it."""
    x, y, h, _ = chain.evaluate(st)
    along = (pos[:, 0] - x) * np.cos(h) + (pos[:, 1] - y) * np.sin(h)
    at_start = (st <= 0.0) & (along < -END_TOLERANCE)
    at_end = (st >= chain.length) & (along > END_TOLERANCE)
    return at_start | at_end


def fuse_log(log: StateLog, track: TrackMap | None, sigma_m: float | None = None,
             frame: GeoPoint | None = None) -> StateLog:
    """Map-constrained copy of a state log.

    Positions and position covariances are replaced by the fused ones;
    ``fused`` gets the per-epoch columns ``along_track``, ``offset`` and
    ``map_constrained``.
    """
    sigma_m = map_sigma(track) if sigma_m is None else float(sigma_m)
    if not sigma_m > 0.0:
        raise DomainError("map sigma must be positive")
    n = len(log.t)
    x = log.x.copy()
    P = log.P.copy()
    station = np.full(n, np.nan)
    offset = np.full(n, np.nan)
    constrained = np.zeros(n, dtype=bool)
    sel = np.flatnonzero(log.available & np.all(np.isfinite(log.x[:, :2]), axis=1))
    if track is not None and len(track.elements) and len(sel):
        chain = track.chain(frame)
        pos = log.x[sel, :2]
        st, d = chain.project(pos)
        beyond = _beyond_ends(chain, pos, st)
        _, _, h, _ = chain.evaluate(st)
        p_new, c_new, ok = _fuse_arrays(pos, log.P[sel, :2, :2], st, d, h, beyond, sigma_m)
        x[sel, :2] = p_new
        P[sel, :2, :2] = c_new
        # cross terms with the rest of the state are no longer meaningful
        P[sel[ok], :2, 2:] = 0.0
        P[sel[ok], 2:, :2] = 0.0
        station[sel] = st
        offset[sel] = d
        constrained[sel] = ok
    fused = {"along_track": station, "offset": offset, "map_constrained": constrained,
             "map_sigma": np.full(n, sigma_m)}
    out = log.select(np.ones(n, dtype=bool))
    out.method = f"{log.method}+map"
    out.x, out.P, out.fused = x, P, fused
    return out


def map_constraint(track: TrackMap, sigma_m: float | None = None, frame: GeoPoint | None = None):
    """In-place cross-track update of stacked filter states, for feeding the
    map back into a running filter.

    Unlike :func:`fuse_log` this is a plain Kalman update on the full state,
    so correlated components (heading, along-track) move as well.
    """
    sigma_m = map_sigma(track) if sigma_m is None else float(sigma_m)
    chain = track.chain(frame)
    r = sigma_m * sigma_m

    def apply(X, P):
        st, d = chain.project(X[:, :2])
        beyond = _beyond_ends(chain, X[:, :2], st)
        _, _, h, _ = chain.evaluate(st)
        for m in range(X.shape[0]):
            H = np.zeros(5)
            H[0], H[1] = -math.sin(h[m]), math.cos(h[m])
            ph = P[m] @ H
            pcc = float(H @ ph)
            if beyond[m] or abs(d[m]) > GATE_FACTOR * 3.0 * math.sqrt(max(pcc, 0.0)) + GATE_OFFSET:
                continue
            k = ph / (pcc + r)
            X[m] = X[m] - k * d[m]
            A = np.eye(5) - np.outer(k, H)
            Pm = A @ P[m] @ A.T + r * np.outer(k, k)
            P[m] = 0.5 * (Pm + Pm.T)

    return apply
