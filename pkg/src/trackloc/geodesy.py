"""WGS84 geodetic coordinates and east-north local tangent planes.

Points are assumed to lie on the ellipsoid (height 0).  ``geo_to_local``
drops the up component of the exact ENU vector; ``local_to_geo`` returns the
ellipsoid point whose ENU east/north equal the given pair, so the two are
exact inverses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)


@dataclass(frozen=True)
class GeoPoint:
    latitude: float   # degrees
    longitude: float  # degrees

    def __post_init__(self):
        lat, lon = self.latitude, self.longitude
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise DomainError(f"non-finite geodetic point ({lat}, {lon})")
        if abs(lat) > 90.0 or abs(lon) > 180.0:
            raise DomainError(f"geodetic point out of range ({lat}, {lon})")


def geodetic_to_ecef(lat, lon, h=0.0):
    lat = np.radians(lat)
    lon = np.radians(lon)
    sl, cl = np.sin(lat), np.cos(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sl * sl)
    return np.stack([(n + h) * cl * np.cos(lon), (n + h) * cl * np.sin(lon), (n * (1.0 - WGS84_E2) + h) * sl], axis=-1)


def ecef_to_geodetic(xyz):
    """(lat deg, lon deg, h m) by fixed-point iteration on latitude."""
    xyz = np.asarray(xyz, dtype=float)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    p = np.hypot(x, y)
    lon = np.arctan2(y, x)
    lat = np.arctan2(z, p * (1.0 - WGS84_E2))
    for _ in range(10):
        sl = np.sin(lat)
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sl * sl)
        lat_new = np.arctan2(z + WGS84_E2 * n * sl, p)
        if np.all(np.abs(lat_new - lat) < 1e-15):
            lat = lat_new
            break
        lat = lat_new
    sl, cl = np.sin(lat), np.cos(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sl * sl)
    # height from the component along the ellipsoid normal (stable at all latitudes)
    h = p * cl + z * sl - n * (1.0 - WGS84_E2 * sl * sl)
    return np.degrees(lat), np.degrees(lon), h


def enu_rotation(origin: GeoPoint) -> np.ndarray:
    """Rows are the east, north and up unit vectors of ``origin`` in ECEF."""
    lat = math.radians(origin.latitude)
    lon = math.radians(origin.longitude)
    sl, cl, so, co = math.sin(lat), math.cos(lat), math.sin(lon), math.cos(lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


def geo_to_local_arrays(lat, lon, origin: GeoPoint):
    r = enu_rotation(origin)
    o = geodetic_to_ecef(origin.latitude, origin.longitude)
    enu = (geodetic_to_ecef(np.asarray(lat, float), np.asarray(lon, float)) - o) @ r.T
    return enu[..., 0], enu[..., 1]


def local_to_geo_arrays(x, y, origin: GeoPoint):
    r = enu_rotation(origin)
    o = geodetic_to_ecef(origin.latitude, origin.longitude)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    # first guess for the up offset of the ellipsoid below (x, y)
    u = -(x * x + y * y) / (2.0 * WGS84_A)
    for _ in range(6):
        xyz = o + np.stack([x, y, u], axis=-1) @ r
        lat, lon, h = ecef_to_geodetic(xyz)
        # the ellipsoid normal at the point is nearly parallel to the origin's up
        up_here = geodetic_to_ecef(lat, lon, 1.0) - geodetic_to_ecef(lat, lon, 0.0)
        cosang = up_here @ r[2]
        u = u - h / cosang
        if np.all(np.abs(h) < 1e-9):
            break
    xyz = o + np.stack([x, y, u], axis=-1) @ r
    lat, lon, _ = ecef_to_geodetic(xyz)
    return lat, lon


def geo_to_local(p: GeoPoint, origin: GeoPoint) -> tuple[float, float]:
    x, y = geo_to_local_arrays(p.latitude, p.longitude, origin)
    return float(x), float(y)


def local_to_geo(x: float, y: float, origin: GeoPoint) -> GeoPoint:
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError("non-finite local coordinates")
    lat, lon = local_to_geo_arrays(x, y, origin)
    return GeoPoint(float(lat), float(lon))


def frame_rotation(src: GeoPoint, dst: GeoPoint) -> float:
    """Angle (rad) to add to a heading in the tangent plane of ``src`` to
    express it in the tangent plane of ``dst``."""
    east_src = enu_rotation(src)[0]
    e = enu_rotation(dst) @ east_src
    return math.atan2(e[1], e[0])
