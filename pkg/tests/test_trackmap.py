import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trackloc.errors import DomainError, ParseError
from trackloc.geodesy import GeoPoint, local_to_geo_arrays
from trackloc.geom import Pose2, Shape, TrackElement
from trackloc.sim import build_track, reference_track
from trackloc.trackmap import (IdentifiedSegment, TrackMap, assemble_map, load_reference, map_error_cdf,
                               map_load, map_save, polyline_distance, sample_polyline)

from conftest import ORIGIN

HEADER = "p0_lat_deg,50.548000000\np0_lon_deg,12.913000000\npsi0_deg,231.200000\nindex,shape,length_m,radius_m\n"


def write(tmp_path, body, header=HEADER):
    p = tmp_path / "m.csv"
    p.write_text(header + body)
    return p


def test_round_trip_is_byte_identical(tmp_path):
    track = reference_track().with_elements(reference_track().elements, fit_rms=0.8123, map_sigma=1.5)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    map_save(track, a)
    map_save(map_load(a), b)
    assert a.read_bytes() == b.read_bytes()
    loaded = map_load(a)
    assert [e.shape for e in loaded.elements] == [e.shape for e in track.elements]
    assert loaded.fit_rms == 0.8123 and loaded.map_sigma == 1.5


@given(st.lists(st.tuples(st.floats(1.0, 500.0), st.floats(150.0, 3000.0), st.booleans()),
                min_size=1, max_size=4), st.floats(0.0, 359.9))
def test_round_trip_property(tmp_path_factory, arcs, heading):
    rows = [("st", 120.0)]
    for length, radius, left in arcs:
        rows += [("ta", 30.0), ("ca", length, radius if left else -radius), ("ta", 30.0), ("st", 50.0)]
    track = build_track(rows, ORIGIN, heading)
    d = tmp_path_factory.mktemp("rt")
    map_save(track, d / "a.csv")
    map_save(map_load(d / "a.csv"), d / "b.csv")
    assert (d / "a.csv").read_bytes() == (d / "b.csv").read_bytes()


def test_transition_row_parses(tmp_path):
    m = map_load(write(tmp_path, "1,st,100.000,inf\n2,ta,11,213\n3,ca,50,213\n"))
    ta = m.elements[1]
    assert ta.shape is Shape.TRANSITIONAL_ARC and ta.length == 11.0
    assert (ta.k0, ta.k1) == (0.0, pytest.approx(1 / 213))
    assert m.elements[0].k0 == 0.0


@pytest.mark.parametrize("body,row", [
    ("1,st,100,inf\n2,zz,10,inf\n", 6),
    ("1,st,100,inf\n1,st,10,inf\n", 6),
    ("1,st,-5,inf\n", 5),
    ("1,st,abc,inf\n", 5),
    ("1,ca,10,inf\n", 5),
])
def test_parse_errors_name_the_row(tmp_path, body, row):
    with pytest.raises(ParseError) as exc:
        map_load(write(tmp_path, body))
    assert exc.value.row == row
    assert f"row {row}" in str(exc.value)


def test_missing_header_row(tmp_path):
    with pytest.raises(ParseError, match="psi0_deg"):
        map_load(write(tmp_path, "1,st,10,inf\n", header="p0_lat_deg,50\np0_lon_deg,12\nindex,shape,length_m,radius_m\n"))


def test_build_track_curvature_profile():
    rows = [("st", 218.0), ("ta", 76.0), ("ca", 136.0, 376.0), ("ta", 37.0), ("ca", 87.0, 197.0)]
    t = build_track(rows, ORIGIN, 0.0)
    ks = [(e.k0, e.k1) for e in t.elements]
    assert ks == [(0, 0), (0, 1 / 376), (1 / 376, 1 / 376), (1 / 376, 1 / 197), (1 / 197, 1 / 197)]
    mid = build_track([("st", 10.0), ("ta", 40.0), ("ca", 10.0, 213.0)], ORIGIN, 0.0).chain()
    assert mid.evaluate([30.0])[3][0] == pytest.approx(1 / 426, abs=1e-15)
    assert len(build_track([("st", 10.0)], ORIGIN, 0.0).elements) == 1
    with pytest.raises(DomainError):
        build_track([("st", 10.0), ("ta", 40.0, 100.0), ("ca", 10.0, 213.0)], ORIGIN, 0.0)


def test_map_continuity():
    chain = reference_track().chain()
    for i, e in enumerate(chain.elements[:-1]):
        x, y, h, k = chain.evaluate([chain.stations[i + 1] - 1e-9 * 0])
        j = chain.joint_pose(i + 1)
        assert math.hypot(x[0] - j.x, y[0] - j.y) <= 1e-9
        if Shape.TRANSITIONAL_ARC in (e.shape, chain.elements[i + 1].shape):
            assert abs(e.k1 - chain.elements[i + 1].k0) <= 1e-12
    with pytest.raises(DomainError):
        TrackMap(ORIGIN, 0.0, (TrackElement.straight(10.0), TrackElement.transition(10.0, 0.01, 0.0)))


def segment(shape, t0, t1, x, y, h, length, k=0.0):
    return IdentifiedSegment(shape, t0, t1, Pose2(x, y, h, k), length, k)


def test_assemble_straight_arc_straight():
    k = 1 / 213
    a = segment(Shape.STRAIGHT, 0, 10, 0, 0, 0, 100)
    arc_start = Pose2(130.0, 1.0, 0.05, k)
    b = IdentifiedSegment(Shape.CIRCULAR_ARC, 12, 20, arc_start, 80.0, k)
    end = b.end_pose()
    c = segment(Shape.STRAIGHT, 22, 30, end.x + 20 * math.cos(end.heading) - 1.0,
                end.y + 20 * math.sin(end.heading), end.heading + 0.1, 100)
    m = assemble_map([a, b, c], ORIGIN)
    assert [e.shape.value for e in m.elements] == ["st", "ta", "ca", "ta", "st"]
    assert m.elements[1].length == pytest.approx(math.hypot(30.0, 1.0))
    assert (m.elements[1].k0, m.elements[1].k1) == (0.0, k)


def test_assemble_arc_pair_and_collinear_straights():
    r1, r2 = 376.0, 197.0
    a = IdentifiedSegment(Shape.CIRCULAR_ARC, 0, 10, Pose2(0, 0, 0, 1 / r1), 100.0, 1 / r1)
    e = a.end_pose()
    b = IdentifiedSegment(Shape.CIRCULAR_ARC, 11, 20, Pose2(e.x + 30 * math.cos(e.heading),
                                                            e.y + 30 * math.sin(e.heading), e.heading, 1 / r2),
                          80.0, 1 / r2)
    m = assemble_map([a, b], ORIGIN)
    assert [x.shape.value for x in m.elements] == ["ca", "ta", "ca"]
    assert (m.elements[1].k0, m.elements[1].k1) == (1 / r1, 1 / r2)
    s1 = segment(Shape.STRAIGHT, 0, 5, 0, 0, 0, 50)
    s2 = segment(Shape.STRAIGHT, 5, 9, 50, 0, 0, 40)
    assert [x.shape.value for x in assemble_map([s1, s2], ORIGIN).elements] == ["st", "st"]
    assert len(assemble_map([s1], ORIGIN).elements) == 1
    with pytest.raises(DomainError):
        assemble_map([s1, segment(Shape.STRAIGHT, 3, 9, 50, 0, 0, 40)], ORIGIN)


def test_polyline_distance_against_brute_force(rng):
    verts = np.cumsum(rng.normal(0, 10, (40, 2)), axis=0)
    pts = rng.uniform(verts.min(0) - 20, verts.max(0) + 20, (300, 2))
    a, b = verts[:-1], verts[1:]
    ab = b - a
    t = np.clip(np.einsum("pij,ij->pi", pts[:, None, :] - a[None], ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    foot = a[None] + t[..., None] * ab[None]
    brute = np.min(np.linalg.norm(pts[:, None, :] - foot, axis=2), axis=1)
    assert np.allclose(polyline_distance(pts, verts), brute, atol=1e-12)


def test_map_error_self_comparison():
    track = build_track([("st", 200.0), ("ta", 40.0), ("ca", 150.0, 213.0), ("ta", 40.0), ("st", 100.0)],
                        ORIGIN, 40.0)
    stats = map_error_cdf(track, sample_polyline(track, 0.5))
    # chords of a 0.5 m polyline sag by at most s²/(8r) = 0.15 mm on r = 213
    assert stats.mean <= 2e-4 and stats.max <= 2e-4
    straight = build_track([("st", 500.0)], ORIGIN, 0.0)
    exact = map_error_cdf(straight, sample_polyline(straight, 5.0))
    assert exact.max <= 1e-6
    qs = list(stats.quantiles.values())
    assert all(a <= b for a, b in zip(qs, qs[1:])) and stats.mean <= stats.max


def test_map_error_constant_offset():
    track = build_track([("st", 500.0)], ORIGIN, 0.0)
    x = np.linspace(-50, 550, 7)
    lat, lon = local_to_geo_arrays(x, np.full(7, 2.0), ORIGIN)
    ref = [GeoPoint(float(a), float(b)) for a, b in zip(lat, lon)]
    stats = map_error_cdf(track, ref)
    assert stats.mean == pytest.approx(2.0, abs=1e-9)
    assert len(stats.samples) == 501


def test_map_error_disjoint():
    track = build_track([("st", 100.0)], ORIGIN, 0.0)
    lat, lon = local_to_geo_arrays(np.array([5000.0, 5100.0]), np.array([5000.0, 5000.0]), ORIGIN)
    with pytest.raises(DomainError):
        map_error_cdf(track, [GeoPoint(float(a), float(b)) for a, b in zip(lat, lon)])


def test_load_reference_formats(tmp_path):
    csv_path = tmp_path / "r.csv"
    csv_path.write_text("# note\nlat,lon\n50.1,12.1\n50.2,12.2\n")
    assert load_reference(csv_path) == [GeoPoint(50.1, 12.1), GeoPoint(50.2, 12.2)]
    gj = tmp_path / "r.geojson"
    gj.write_text('{"type": "LineString", "coordinates": [[12.1, 50.1], [12.2, 50.2]]}')
    assert load_reference(gj) == [GeoPoint(50.1, 12.1), GeoPoint(50.2, 12.2)]
    bad = tmp_path / "bad.csv"
    bad.write_text("50.1,12.1\nx,y\n")
    with pytest.raises(ParseError):
        load_reference(bad)
