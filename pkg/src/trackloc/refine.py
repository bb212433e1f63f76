"""Global refinement of a compact track map against a position trace.

The decision vector is the chain start (x, y, heading), every element
length, and one curvature per circular arc (plus any joint shared by two
transitions).  Transitions read their end curvatures from those variables,
so every candidate map is continuous by construction and the fit only has
to minimise the weighted squared perpendicular distances.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .geodesy import GeoPoint
from .geom import Chain, Pose2, Shape, TrackElement, _local, truncate
from .trackmap import TrackMap

log = logging.getLogger(__name__)

MIN_LENGTH = 0.1  # m; shorter elements are merged away


class ChainParameters:
    """Bijection between a map's free parameters and a flat vector."""

    def __init__(self, elements: Sequence[TrackElement]):
        self.shapes = [e.shape for e in elements]
        n = len(elements)
        kvals: list[float] = []
        start_ref: list[tuple] = [None] * n
        end_ref: list[tuple] = [None] * n
        for i, e in enumerate(elements):
            if e.shape is Shape.STRAIGHT:
                start_ref[i] = end_ref[i] = ("c", 0.0)
            elif e.shape is Shape.CIRCULAR_ARC:
                kvals.append(e.k0)
                start_ref[i] = end_ref[i] = ("v", len(kvals) - 1)
        for i, e in enumerate(elements):
            if e.shape is not Shape.TRANSITIONAL_ARC:
                continue
            start_ref[i] = end_ref[i - 1] if i > 0 else ("c", e.k0)
            if i + 1 < n and elements[i + 1].shape is not Shape.TRANSITIONAL_ARC:
                end_ref[i] = start_ref[i + 1]
            elif i + 1 < n:
                kvals.append(e.k1)
                end_ref[i] = ("v", len(kvals) - 1)
            else:
                end_ref[i] = ("c", e.k1)
        self.start_ref = start_ref
        self.end_ref = end_ref
        self.n = n
        self.n_curv = len(kvals)
        self.kvals0 = np.array(kvals)
        # guards the finite-difference and LM steps against runaway lengths
        self.max_total = 3.0 * sum(e.length for e in elements) + 1000.0

    @property
    def size(self) -> int:
        return 3 + self.n + self.n_curv

    def length_slice(self) -> slice:
        return slice(3, 3 + self.n)

    def element_params(self, i: int) -> list[int]:
        """Indices of the vector entries that shape element ``i``."""
        idx = [3 + i]
        for ref in (self.start_ref[i], self.end_ref[i]):
            if ref[0] == "v":
                j = 3 + self.n + ref[1]
                if j not in idx:
                    idx.append(j)
        return idx

    def touched(self, k: int) -> list[int]:
        """Elements whose own shape depends on vector entry ``k``."""
        if k < 3:
            return []
        return [i for i in range(self.n) if k in self.element_params(i)]

    def pack(self, start: Pose2, elements: Sequence[TrackElement]) -> np.ndarray:
        theta = np.empty(self.size)
        theta[:3] = (start.x, start.y, start.heading)
        theta[3:3 + self.n] = [e.length for e in elements]
        theta[3 + self.n:] = self.kvals0
        return theta

    def _k(self, ref, theta):
        return ref[1] if ref[0] == "c" else float(theta[3 + self.n + ref[1]])

    def unpack(self, theta: np.ndarray) -> tuple[Pose2, list[TrackElement]] | None:
        """Start pose and elements, or ``None`` when the vector is invalid."""
        if not np.all(np.isfinite(theta)):
            return None
        lengths = theta[3:3 + self.n]
        if np.any(lengths <= 0.0) or lengths.sum() > self.max_total:
            return None
        elements = []
        for i, shape in enumerate(self.shapes):
            k0 = self._k(self.start_ref[i], theta)
            k1 = self._k(self.end_ref[i], theta)
            if shape is Shape.CIRCULAR_ARC and k0 == 0.0:
                return None
            elements.append(TrackElement(shape, float(lengths[i]), k0, k1))
        k_start = elements[0].k0
        return Pose2(float(theta[0]), float(theta[1]), float(theta[2]), k_start), elements

    def steps(self, theta: np.ndarray) -> np.ndarray:
        h = np.empty(self.size)
        h[:2] = 1e-4
        h[2] = 1e-7
        h[3:3 + self.n] = 1e-4
        h[3 + self.n:] = 1e-8
        return h


def levenberg_marquardt(residual: Callable, jacobian: Callable, theta0: np.ndarray, *,
                        max_iter: int = 200, rtol: float = 1e-9, lam0: float = 1e-3):
    """Minimise ``||residual(theta)||^2``.

    ``residual`` returns ``None`` for infeasible vectors (treated as a
    rejected step).  Only strictly improving steps are accepted.  Returns
    ``(theta, history)`` where ``history`` holds the objective of the start
    vector and of every accepted iterate.
    """
    theta = np.array(theta0, dtype=float)
    r = residual(theta)
    if r is None:
        raise DomainError("initial parameters are infeasible")
    f = float(r @ r)
    history = [f]
    lam = lam0
    for _ in range(max_iter):
        if f == 0.0:
            break
        J = jacobian(theta, r)
        g = J.T @ r
        A = J.T @ J
        d = np.diag(A).copy()
        # parameters the residuals cannot see (e.g. the length of a final
        # element nobody projects onto) are held for this iteration
        active = d > 1e-12 * max(d.max(), 1e-300)
        Aa, ga, da = A[np.ix_(active, active)], g[active], d[active]
        accepted = False
        for _ in range(30):
            try:
                step = np.linalg.solve(Aa + lam * np.diag(da), -ga)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = theta.copy()
            cand[active] += step
            r_new = residual(cand)
            if r_new is not None:
                f_new = float(r_new @ r_new)
                if f_new < f:
                    accepted = True
                    break
            lam *= 10.0
            if lam > 1e16:
                break
        if not accepted:
            break
        decrease = (f - f_new) / f
        theta, r, f = cand, r_new, f_new
        history.append(f)
        lam = max(lam / 10.0, 1e-12)
        if decrease < rtol:
            break
    return theta, history


class _Problem:
    """Weighted projection residuals of trace points on a parameterised chain."""

    def __init__(self, params: ChainParameters, points: np.ndarray, weights: np.ndarray):
        self.params = params
        self.points = points
        self.sw = np.sqrt(weights)
        self._last = None

    def chain(self, theta):
        un = self.params.unpack(theta)
        if un is None:
            return None
        try:
            return Chain(*un)
        except DomainError:
            return None

    def residual(self, theta):
        chain = self.chain(theta)
        if chain is None:
            return None
        s, d = chain.project(self.points)
        self._last = (theta.copy(), chain, s, d)
        return self.sw * d

    def jacobian(self, theta, r, free=None):
        """Forward differences of the chain geometry at each point's foot.

        The foot point is held at a fixed element-local arclength: sliding
        along the track does not change the distance to first order, so
        only the perturbed joint poses (and the reshaped elements) matter
        and no re-projection is needed.
        """
        free = range(self.params.size) if free is None else free
        if self._last is None or not np.array_equal(self._last[0], theta):
            self.residual(theta)
        _, chain, s, d = self._last
        j = chain.locate(s)
        beyond = s >= chain.length - 1e-9
        local = np.clip(s - chain.stations[j], 0.0, chain.lengths[j])
        disp, dh, _ = _local(chain.kind[j], chain.lengths[j], chain.k0[j], chain.k1[j], local)
        foot = chain._pos[j] + disp * np.exp(1j * chain._heading[j])
        pz = self.points[:, 0] + 1j * self.points[:, 1]
        # gradient of the signed distance with respect to the foot point
        normal = 1j * np.exp(1j * (chain._heading[j] + dh))
        safe = np.where(np.abs(d) > 1e-9, d, 1.0)
        g = np.where(np.abs(d) > 1e-9, (pz - foot) / safe, normal)
        h = self.params.steps(theta)
        J = np.zeros((len(r), len(free)))
        last = len(chain.lengths) - 1
        for col, k in enumerate(free):
            t = theta.copy()
            step = h[k]
            t[k] += step
            other = self.chain(t)
            if other is None:
                step = -h[k]
                t[k] = theta[k] + step
                other = self.chain(t)
            touched = self.params.touched(k)
            moved = np.isin(j, touched) | beyond
            disp_k = disp
            if np.any(moved):
                disp_k = disp.copy()
                jm = j[moved]
                lk = np.where(beyond[moved], other.lengths[last], local[moved])
                disp_k[moved] = _local(other.kind[jm], other.lengths[jm], other.k0[jm], other.k1[jm], lk)[0]
            foot_k = other._pos[j] + disp_k * np.exp(1j * other._heading[j])
            dC = (foot_k - foot) / step
            J[:, col] = -self.sw * (g.real * dC.real + g.imag * dC.imag)
        return J


def _merge_short(elements: list[TrackElement], lengths_ok: np.ndarray) -> list[TrackElement]:
    """Drop elements flagged too short; two transitions left adjacent are fused."""
    kept = [e for e, ok in zip(elements, lengths_ok) if ok]
    out: list[TrackElement] = []
    for e in kept:
        if out and out[-1].shape is Shape.TRANSITIONAL_ARC and e.shape is Shape.TRANSITIONAL_ARC:
            prev = out.pop()
            e = TrackElement.transition(prev.length + e.length, prev.k0, e.k1)
        out.append(e)
    # a transition now touching a constant element must agree with its curvature
    for i, e in enumerate(out):
        if e.shape is not Shape.TRANSITIONAL_ARC:
            continue
        k0 = out[i - 1].k1 if i > 0 else e.k0
        k1 = out[i + 1].k0 if i + 1 < len(out) else e.k1
        out[i] = TrackElement.transition(e.length, k0, k1)
    return out


def _trim_to_trace(start: Pose2, elements: list[TrackElement], points: np.ndarray):
    """Cut the free ends of the chain back to the span the trace covers.

    Extending the first or last element beyond the data does not change the
    objective, so the fit leaves those ends undetermined.
    """
    chain = Chain(start, elements)
    s, _ = chain.project(points)
    lo, hi = float(s.min()), float(s.max())
    elements = list(elements)
    if 0.0 < hi < chain.length and chain.length - hi < elements[-1].length - MIN_LENGTH:
        last = elements[-1]
        keep = last.length - (chain.length - hi)
        if last.shape is Shape.TRANSITIONAL_ARC:
            k_end = last.k0 + (last.k1 - last.k0) * keep / last.length
            elements[-1] = TrackElement.transition(keep, last.k0, k_end)
        else:
            elements[-1] = TrackElement(last.shape, keep, last.k0, last.k1)
    if 0.0 < lo < elements[0].length - MIN_LENGTH:
        start = chain.pose(lo)
        elements[0] = truncate(elements[0], lo)
    return start, elements


def map_objective(track: TrackMap, trace, frame: GeoPoint | None = None) -> float:
    pts, w = _split_trace(trace)
    _, d = track.chain(frame).project(pts)
    return float(np.sum(w * d * d))


def _split_trace(trace):
    trace = np.asarray(trace, dtype=float)
    if trace.ndim != 2 or trace.shape[1] not in (2, 3):
        raise DomainError("trace must be an (N, 2) or (N, 3) array of x, y[, weight]")
    if not np.all(np.isfinite(trace)):
        raise DomainError("trace contains non-finite values")
    w = trace[:, 2] if trace.shape[1] == 3 else np.ones(len(trace))
    if np.any(w < 0):
        raise DomainError("negative trace weight")
    return trace[:, :2], w


def refine_map(track: TrackMap, trace, frame: GeoPoint | None = None, *, max_iter: int = 200,
               rtol: float = 1e-9):
    """Fit all map parameters to a weighted position trace.

    ``trace`` rows are ``(x, y, weight)`` in the tangent plane of ``frame``
    (default: the map origin).  Returns ``(refined_map, objective_history)``;
    the history starts with the objective of the input map and only contains
    strictly decreasing values.
    """
    points, weights = _split_trace(trace)
    if len(points) < 10:
        raise DomainError("refinement needs at least 10 trace points")
    frame = frame or track.origin
    start = track.start_pose(frame)
    elements = list(track.elements)
    history: list[float] = []
    restarted = False
    while True:
        params = ChainParameters(elements)
        problem = _Problem(params, points, weights)
        theta = params.pack(start, elements)
        if not history:
            r0 = problem.residual(theta)
            history.append(float(r0 @ r0))
        theta, hist = levenberg_marquardt(problem.residual, problem.jacobian, theta, max_iter=max_iter, rtol=rtol)
        for f in hist:
            if f < history[-1]:
                history.append(f)
        start, elements = params.unpack(theta)
        short = np.array([e.length < MIN_LENGTH for e in elements])
        if not short.any() or short.all():
            break
        log.info("merging %d element(s) shorter than %.1f m", int(short.sum()), MIN_LENGTH)
        elements = _merge_short(elements, ~short)
        if restarted:
            # only one restart; later short elements are dropped as they are
            break
        restarted = True
    start, elements = _trim_to_trace(start, elements, points)
    _, d = Chain(start, elements).project(points)
    rms = float(np.sqrt(np.mean(d * d)))
    refined = TrackMap.from_local(start, elements, frame, fit_rms=rms, notes=track.notes)
    return refined, history
