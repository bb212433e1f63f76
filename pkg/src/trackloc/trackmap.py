"""Compact geometric track maps.

A :class:`TrackMap` is a start point, a start heading and an ordered list of
elements.  Geometry is never stored explicitly: every position follows from
integrating the chain, so joints are continuous in position and heading by
construction, and transitional arcs take their end curvatures from their
neighbours.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .ecdf import nearest_rank
from .errors import DomainError, ParseError
from .geodesy import (GeoPoint, frame_rotation, geo_to_local, geo_to_local_arrays, local_to_geo,
                      local_to_geo_arrays)
from .geom import Chain, Pose2, Shape, TrackElement, element_pose_at, wrap_angle

GAP_THRESHOLD = 0.5  # m; smaller gaps between identified segments get no clothoid
MAP_ERROR_QUANTILES = (0.95, 0.99, 1.00)


@dataclass(frozen=True)
class TrackMap:
    origin: GeoPoint
    start_heading: float          # degrees, counter-clockwise from east in the origin's tangent plane
    elements: tuple[TrackElement, ...]
    fit_rms: float | None = None  # m, residual RMS of the refinement that produced the map
    map_sigma: float | None = None  # m, cross-track σ of the map line itself, if known
    notes: tuple[str, ...] = ()
    _chains: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not math.isfinite(self.start_heading):
            raise DomainError("non-finite start heading")
        if len(self.elements) == 0:
            raise DomainError("a track map needs at least one element")
        check_curvature_continuity(self.elements)

    @property
    def length(self) -> float:
        return float(sum(e.length for e in self.elements))

    def start_pose(self, frame: GeoPoint | None = None) -> Pose2:
        """Chain start in the tangent plane of ``frame`` (default: the origin)."""
        heading = math.radians(self.start_heading)
        k = self.elements[0].k0
        if frame is None or frame == self.origin:
            return Pose2(0.0, 0.0, heading, k)
        x, y = geo_to_local(self.origin, frame)
        return Pose2(x, y, heading + frame_rotation(self.origin, frame), k)

    def chain(self, frame: GeoPoint | None = None) -> Chain:
        key = frame if frame is not None else self.origin
        if key not in self._chains:
            self._chains[key] = Chain(self.start_pose(frame), self.elements)
        return self._chains[key]

    @classmethod
    def from_local(cls, start: Pose2, elements: Sequence[TrackElement], frame: GeoPoint, **kw) -> "TrackMap":
        """Build from a start pose expressed in the tangent plane of ``frame``."""
        origin = local_to_geo(start.x, start.y, frame)
        heading = start.heading - frame_rotation(origin, frame)
        return cls(origin, math.degrees(wrap_angle(heading)) % 360.0, tuple(elements), **kw)

    def with_elements(self, elements, **kw) -> "TrackMap":
        args = dict(origin=self.origin, start_heading=self.start_heading, elements=tuple(elements),
                    fit_rms=self.fit_rms, map_sigma=self.map_sigma, notes=self.notes)
        args.update(kw)
        return TrackMap(**args)


def check_curvature_continuity(elements: Sequence[TrackElement], tol: float = 1e-12) -> None:
    for i in range(len(elements) - 1):
        a, b = elements[i], elements[i + 1]
        touches_ta = Shape.TRANSITIONAL_ARC in (a.shape, b.shape)
        if touches_ta and abs(a.k1 - b.k0) > tol:
            raise DomainError(f"curvature jump {a.k1} -> {b.k0} at joint {i}/{i + 1}")


@dataclass(frozen=True)
class IdentifiedSegment:
    """A straight or circular arc fitted to the filter states of one
    geometry segment.  ``anchor`` is the fitted start pose."""

    shape: Shape
    start_time: float
    end_time: float
    anchor: Pose2
    length: float
    curvature: float
    fit_rms: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        if self.shape is Shape.TRANSITIONAL_ARC:
            raise DomainError("identified segments are straights or circular arcs")
        if not self.length > 0.0:
            raise DomainError("segment length must be positive")
        if self.shape is Shape.STRAIGHT and self.curvature != 0.0:
            raise DomainError("straight segment must have zero curvature")
        if self.end_time < self.start_time:
            raise DomainError("segment ends before it starts")

    def element(self) -> TrackElement:
        if self.shape is Shape.STRAIGHT:
            return TrackElement.straight(self.length)
        return TrackElement.arc(self.length, self.curvature)

    def end_pose(self) -> Pose2:
        return element_pose_at(self.anchor, self.element(), self.length)


def assemble_map(segments: Sequence[IdentifiedSegment], frame: GeoPoint,
                 gap_threshold: float = GAP_THRESHOLD) -> TrackMap:
    """Concatenate identified segments, bridging each gap with a clothoid.

    The clothoid joins the curvature of the preceding segment to that of the
    following one; its initial length is the chord between the fitted end
    point and the next fitted start point.  The chain is anchored at the
    first segment's fitted start pose (``frame`` is the local plane the
    segments were fitted in).
    """
    if len(segments) == 0:
        raise DomainError("no segments to assemble")
    for a, b in zip(segments, segments[1:]):
        if b.start_time < a.end_time:
            raise DomainError(f"segments overlap in time: {a.end_time} > {b.start_time}")
    elements: list[TrackElement] = [segments[0].element()]
    for a, b in zip(segments, segments[1:]):
        end = a.end_pose()
        gap = math.hypot(b.anchor.x - end.x, b.anchor.y - end.y)
        if gap >= gap_threshold:
            elements.append(TrackElement.transition(gap, a.curvature, b.curvature))
        elements.append(b.element())
    return TrackMap.from_local(segments[0].anchor, elements, frame)


# ---------------------------------------------------------------------------
# persistence


def _radius_token(k: float) -> str:
    return "inf" if k == 0.0 else f"{1.0 / k:.3f}"


def _ta_radius_curvature(e: TrackElement) -> float:
    # the curved end of a transition, following the compact-map table layout
    return e.k1 if e.k1 != 0.0 else e.k0


def map_save(track: TrackMap, path) -> None:
    """Write the compact CSV layout: header rows for the start point and
    heading, then one ``index,shape,length_m,radius_m`` row per element.
    Radii are signed (negative turns right); straights use ``inf``."""
    out = io.StringIO()
    for note in track.notes:
        out.write(f"# {note}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["p0_lat_deg", f"{track.origin.latitude:.9f}"])
    w.writerow(["p0_lon_deg", f"{track.origin.longitude:.9f}"])
    w.writerow(["psi0_deg", f"{track.start_heading % 360.0:.6f}"])
    if track.fit_rms is not None:
        w.writerow(["fit_rms_m", f"{track.fit_rms:.4f}"])
    if track.map_sigma is not None:
        w.writerow(["map_sigma_m", f"{track.map_sigma:.4f}"])
    w.writerow(["index", "shape", "length_m", "radius_m"])
    for i, e in enumerate(track.elements, start=1):
        k = _ta_radius_curvature(e) if e.shape is Shape.TRANSITIONAL_ARC else e.k0
        w.writerow([i, e.shape.value, f"{e.length:.3f}", _radius_token(k)])
    Path(path).write_text(out.getvalue(), encoding="utf-8")


def _parse_float(tok: str, row: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", row) from None


def map_load(path) -> TrackMap:
    text = Path(path).read_text(encoding="utf-8")
    notes: list[str] = []
    header: dict[str, float] = {}
    rows: list[tuple[int, str, float, float]] = []
    in_table = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            notes.append(line[1:].strip())
            continue
        cells = next(csv.reader([line]))
        if not in_table:
            if cells[0] == "index":
                in_table = True
                continue
            if len(cells) != 2:
                raise ParseError(f"expected 'key,value' header row, got {line!r}", lineno)
            header[cells[0]] = _parse_float(cells[1], lineno, cells[0])
            continue
        if len(cells) != 4:
            raise ParseError(f"expected 4 columns, got {len(cells)}", lineno)
        try:
            index = int(cells[0])
        except ValueError:
            raise ParseError(f"bad index {cells[0]!r}", lineno) from None
        if rows and index <= rows[-1][0]:
            raise ParseError(f"non-monotone element index {index}", lineno)
        shape = cells[1].strip()
        if shape not in ("st", "ta", "ca"):
            raise ParseError(f"unknown shape token {shape!r}", lineno)
        length = _parse_float(cells[2], lineno, "length")
        if not length > 0.0:
            raise ParseError(f"element length must be positive, got {length}", lineno)
        radius = cells[3].strip()
        k = 0.0 if radius in ("inf", "-inf", "∞") else 1.0 / _parse_float(radius, lineno, "radius")
        rows.append((index, shape, length, k, lineno))
    for key in ("p0_lat_deg", "p0_lon_deg", "psi0_deg"):
        if key not in header:
            raise ParseError(f"missing header row {key!r}")
    if not rows:
        raise ParseError("map has no elements")

    # constant-curvature elements first; transitions borrow from neighbours
    curv_start: list[float | None] = []
    curv_end: list[float | None] = []
    for _, shape, _, k, lineno in rows:
        if shape == "st" and k != 0.0:
            raise ParseError("straight with finite radius", lineno)
        if shape == "ca" and k == 0.0:
            raise ParseError("circular arc with infinite radius", lineno)
        fixed = None if shape == "ta" else k
        curv_start.append(fixed)
        curv_end.append(fixed)
    elements = []
    for i, (_, shape, length, k, lineno) in enumerate(rows):
        if shape == "st":
            elements.append(TrackElement.straight(length))
            continue
        if shape == "ca":
            elements.append(TrackElement.arc(length, k))
            continue
        k0 = curv_end[i - 1] if i > 0 else None
        k1 = curv_start[i + 1] if i + 1 < len(rows) else None
        if k0 is None and k1 is None:
            k0, k1 = 0.0, k
        elif k0 is None:
            k0 = k if k1 == 0.0 else 0.0
        elif k1 is None:
            k1 = k if k0 == 0.0 else 0.0
        if i > 0 and rows[i - 1][1] == "ta":
            raise ParseError("adjacent transitional arcs need an explicit joint curvature", lineno)
        expected = k1 if k1 != 0.0 else k0
        if _radius_token(expected) != _radius_token(k):
            raise ParseError(f"transition radius {_radius_token(k)} does not match its neighbours", lineno)
        elements.append(TrackElement.transition(length, k0, k1))
    try:
        return TrackMap(
            GeoPoint(header["p0_lat_deg"], header["p0_lon_deg"]),
            header["psi0_deg"],
            tuple(elements),
            fit_rms=header.get("fit_rms_m"),
            map_sigma=header.get("map_sigma_m"),
            notes=tuple(notes),
        )
    except DomainError as exc:
        raise ParseError(str(exc)) from exc


# ---------------------------------------------------------------------------
# reference polylines and map error


def load_reference(path) -> list[GeoPoint]:
    """Reference polyline from a GeoJSON LineString (lon, lat order) or a
    two-column ``lat,lon`` CSV."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".json", ".geojson") or text.lstrip().startswith("{"):
        obj = json.loads(text)
        if obj.get("type") == "FeatureCollection":
            obj = obj["features"][0]
        if obj.get("type") == "Feature":
            obj = obj["geometry"]
        if obj.get("type") != "LineString":
            raise ParseError(f"expected a GeoJSON LineString, got {obj.get('type')!r}")
        return [GeoPoint(float(c[1]), float(c[0])) for c in obj["coordinates"]]
    pts = []
    seen_row = False
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or row[0].startswith("#"):
            continue
        first, seen_row = not seen_row, True
        try:
            lat, lon = float(row[0]), float(row[1])
        except (ValueError, IndexError):
            if first:
                continue  # header
            raise ParseError(f"bad reference row {row!r}", lineno) from None
        pts.append(GeoPoint(lat, lon))
    return pts


def polyline_distance(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Unsigned distance from each point to a polyline (segment-wise)."""
    points = np.atleast_2d(points)
    a = vertices[:-1]
    b = vertices[1:]
    ab = b - a
    seg_len = np.hypot(ab[:, 0], ab[:, 1])
    mid = 0.5 * (a + b)
    # nearest vertex bounds the answer; only segments that can beat it are checked
    ub, _ = cKDTree(vertices).query(points)
    cand = cKDTree(mid).query_ball_point(points, ub + 0.5 * seg_len.max() + 1e-9)
    out = np.empty(len(points))
    for i, idx in enumerate(cand):
        idx = np.asarray(idx, dtype=int)
        if idx.size == 0:
            out[i] = ub[i]
            continue
        pa = points[i] - a[idx]
        denom = np.einsum("ij,ij->i", ab[idx], ab[idx])
        t = np.where(denom > 0, np.einsum("ij,ij->i", pa, ab[idx]) / np.where(denom > 0, denom, 1.0), 0.0)
        t = np.clip(t, 0.0, 1.0)
        diff = pa - t[:, None] * ab[idx]
        out[i] = min(float(np.min(np.hypot(diff[:, 0], diff[:, 1]))), ub[i])
    return out


@dataclass(frozen=True)
class MapErrorStats:
    samples: np.ndarray
    mean: float
    quantiles: dict
    max: float


def map_error_cdf(track: TrackMap, reference: Sequence[GeoPoint], spacing: float = 1.0,
                  max_gap: float = 1000.0) -> MapErrorStats:
    """Absolute perpendicular distance from the map, sampled every
    ``spacing`` meters of arclength, to a reference polyline."""
    if len(reference) < 2:
        raise DomainError("reference polyline needs at least two points")
    frame = track.origin
    lat = np.array([p.latitude for p in reference])
    lon = np.array([p.longitude for p in reference])
    rx, ry = geo_to_local_arrays(lat, lon, frame)
    chain = track.chain()
    n = max(int(math.floor(chain.length / spacing)), 1)
    st = np.linspace(0.0, n * spacing, n + 1)
    st = st[st <= chain.length]
    x, y, _, _ = chain.evaluate(st)
    eps = polyline_distance(np.column_stack([x, y]), np.column_stack([rx, ry]))
    if eps.min() > max_gap:
        raise DomainError(f"map and reference do not overlap (closest {eps.min():.1f} m)")
    q = {p: nearest_rank(eps, p) for p in MAP_ERROR_QUANTILES}
    return MapErrorStats(eps, float(eps.mean()), q, float(eps.max()))


def sample_polyline(track: TrackMap, spacing: float = 0.5, frame: GeoPoint | None = None) -> list[GeoPoint]:
    """Dense geodetic polyline of a map (for use as a reference)."""
    chain = track.chain(frame)
    st, x, y, _, _ = chain.sample(spacing)
    lat, lon = local_to_geo_arrays(x, y, frame or track.origin)
    return [GeoPoint(float(a), float(b)) for a, b in zip(lat, lon)]
