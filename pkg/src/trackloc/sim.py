"""Ground-truth runs over a track map and synthetic GNSS / IMU streams.

The train is glued to the track.  Its speed follows piecewise-constant
targets over arclength, changing at a fixed acceleration whenever a new
target takes over, so the whole motion is known in closed form and the
truth can be evaluated at any time without numerical integration.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, DomainError
from .geodesy import GeoPoint, geo_to_local_arrays, local_to_geo_arrays
from .geom import Pose2, Shape, TrackElement
from .trackmap import TrackMap

GRAVITY = 9.80665
SPEED_RAMP = 0.3  # m/s^2, magnitude of every speed change


# ---------------------------------------------------------------------------
# track construction


def build_track(rows: Sequence, origin: GeoPoint, heading_deg: float) -> TrackMap:
    """Build a continuous map from ``(shape, length, radius)`` rows.

    ``radius`` is signed (left turns positive) and ignored for straights.
    A transitional arc takes its end curvatures from its neighbours; if it
    also states a radius, that radius must equal one of them.
    """
    parsed = []
    for i, row in enumerate(rows):
        if isinstance(row, dict):
            shape, length, radius = row.get("shape"), row.get("length"), row.get("radius")
        else:
            shape, length = row[0], row[1]
            radius = row[2] if len(row) > 2 else None
        try:
            shape = Shape(shape)
        except ValueError:
            raise DomainError(f"element {i + 1}: unknown shape {shape!r}") from None
        length = float(length)
        if not length > 0.0 or not math.isfinite(length):
            raise DomainError(f"element {i + 1}: length must be positive")
        k = None
        if radius is not None and not (isinstance(radius, str) and radius == "inf"):
            r = float(radius)
            k = 0.0 if math.isinf(r) else 1.0 / r
        if shape is Shape.CIRCULAR_ARC and not k:
            raise DomainError(f"element {i + 1}: circular arc needs a finite radius")
        parsed.append((shape, length, 0.0 if shape is Shape.STRAIGHT else k))
    elements = []
    for i, (shape, length, k) in enumerate(parsed):
        if shape is not Shape.TRANSITIONAL_ARC:
            elements.append(TrackElement(shape, length, k, k))
            continue
        before = parsed[i - 1] if i > 0 else None
        after = parsed[i + 1] if i + 1 < len(parsed) else None
        if (before and before[0] is Shape.TRANSITIONAL_ARC) or (after and after[0] is Shape.TRANSITIONAL_ARC):
            raise DomainError(f"element {i + 1}: adjacent transitional arcs need an explicit joint")
        k0 = before[2] if before else (k if k is not None else 0.0)
        k1 = after[2] if after else (k if k is not None else 0.0)
        if k is not None and before and after and not (math.isclose(k, k0, rel_tol=1e-9, abs_tol=1e-15)
                                                       or math.isclose(k, k1, rel_tol=1e-9, abs_tol=1e-15)):
            raise DomainError(f"element {i + 1}: transition radius does not match its neighbours")
        elements.append(TrackElement.transition(length, k0, k1))
    return TrackMap(origin, float(heading_deg) % 360.0, elements)


# ---------------------------------------------------------------------------
# configuration


def _intervals(items, what: str) -> tuple:
    out = []
    for it in items:
        lo, hi = float(it[0]), float(it[1])
        if not hi > lo:
            raise ConfigError(f"{what}: interval [{lo}, {hi}] is empty")
        out.append((lo, hi) + tuple(float(v) for v in it[2:]))
    out.sort()
    for a, b in zip(out, out[1:]):
        if b[0] < a[1]:
            raise ConfigError(f"{what}: intervals overlap at {b[0]}")
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    """Sensor and motion settings for one simulated run."""

    speed_profile: tuple = ((0.0, 10.0),)     # (station m, target speed m/s) breakpoints
    gnss_rate: float = 1.0
    imu_rate: float = 500.0
    truth_rate: float = 10.0
    gnss_sigma: float = 5.0                   # m per axis
    gnss_axis_ratio: float = 1.0              # major / minor σ; 1 is isotropic
    gnss_axis_angle: float = 0.0              # deg, major axis from east
    gnss_speed_sigma: float = 0.1             # m/s
    sigma_inflation: tuple = ()               # (t0, t1, scale)
    outages: tuple = ()                       # (t0, t1), both ends inclusive
    gyro_noise_density: float = 1e-4          # rad/s/sqrt(Hz)
    gyro_bias: float = 1e-4                   # rad/s
    accel_noise_density: float = 2e-3         # m/s^2/sqrt(Hz)
    accel_bias: float = 0.02                  # m/s^2
    gnss_noise: bool = True                   # False: fixes are exact, covariance still reported
    seed: int = 0

    def __post_init__(self):
        prof = tuple(sorted((float(s), float(v)) for s, v in self.speed_profile))
        if not prof or prof[0][0] > 0.0:
            raise ConfigError("speed_profile must start at station 0")
        if any(v <= 0.0 for _, v in prof):
            raise ConfigError("speed_profile speeds must be positive")
        object.__setattr__(self, "speed_profile", prof)
        object.__setattr__(self, "sigma_inflation", _intervals(self.sigma_inflation, "sigma_inflation"))
        object.__setattr__(self, "outages", _intervals(self.outages, "outages"))
        for name in ("gnss_rate", "imu_rate", "truth_rate", "gnss_sigma", "gnss_axis_ratio", "gnss_speed_sigma"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")
        for name in ("gyro_noise_density", "accel_noise_density"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")
        if any(sc <= 0.0 for _, _, sc in self.sigma_inflation):
            raise ConfigError("sigma_inflation scale factors must be positive")

    def with_seed(self, seed: int) -> "RunConfig":
        args = asdict(self)
        args["seed"] = int(seed)
        return RunConfig(**args)

    def noiseless(self) -> "RunConfig":
        """Same motion with every sensor error switched off (GNSS σ kept as reported)."""
        args = asdict(self)
        args.update(gyro_noise_density=0.0, gyro_bias=0.0, accel_noise_density=0.0, accel_bias=0.0,
                    gnss_noise=False)
        return RunConfig(**args)

    def gnss_covariance(self, t) -> np.ndarray:
        """(N, 2, 2) configured fix covariance at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        scale = np.ones_like(t)
        for lo, hi, sc in self.sigma_inflation:
            scale[(t >= lo) & (t <= hi)] = sc
        a = math.radians(self.gnss_axis_angle)
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        minor = self.gnss_sigma / math.sqrt(self.gnss_axis_ratio)
        major = self.gnss_sigma * math.sqrt(self.gnss_axis_ratio)
        base = rot @ np.diag([major ** 2, minor ** 2]) @ rot.T
        return base[None, :, :] * (scale ** 2)[:, None, None]


def config_from_dict(d: dict) -> RunConfig:
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown run config field(s): {', '.join(sorted(unknown))}")
    args = dict(d)
    if "speed_profile" in args:
        args["speed_profile"] = tuple(tuple(p) for p in args["speed_profile"])
    try:
        return RunConfig(**args)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# motion


@dataclass(frozen=True)
class MotionPhase:
    t0: float
    s0: float
    v0: float
    accel: float
    duration: float   # inf for the final phase


def motion_phases(profile: Sequence[tuple[float, float]], track_length: float) -> list[MotionPhase]:
    """Closed-form speed history: cruise until the next breakpoint, then ramp."""
    if profile[-1][0] >= track_length:
        raise DomainError("speed profile breakpoints must lie on the track")
    phases = []
    t, s, v = 0.0, 0.0, profile[0][1]
    for i in range(1, len(profile) + 1):
        s_next = profile[i][0] if i < len(profile) else math.inf
        target = profile[i][1] if i < len(profile) else v
        if math.isinf(s_next):
            phases.append(MotionPhase(t, s, v, 0.0, math.inf))
            break
        cruise = (s_next - s) / v
        phases.append(MotionPhase(t, s, v, 0.0, cruise))
        t, s = t + cruise, s_next
        if target != v:
            a = math.copysign(SPEED_RAMP, target - v)
            dur = abs(target - v) / SPEED_RAMP
            dist = v * dur + 0.5 * a * dur * dur
            seg_end = profile[i + 1][0] if i + 1 < len(profile) else track_length
            if s + dist > seg_end:
                raise DomainError(f"speed change at station {s_next:.1f} does not fit before the next breakpoint")
            phases.append(MotionPhase(t, s, v, a, dur))
            t, s, v = t + dur, s + dist, target
    return phases


def motion_at(phases: list[MotionPhase], t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arclength, speed and acceleration at times ``t``."""
    t = np.asarray(t, dtype=float)
    starts = np.array([p.t0 for p in phases])
    idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(phases) - 1)
    t0 = starts[idx]
    s0 = np.array([p.s0 for p in phases])[idx]
    v0 = np.array([p.v0 for p in phases])[idx]
    a = np.array([p.accel for p in phases])[idx]
    tau = t - t0
    return s0 + v0 * tau + 0.5 * a * tau * tau, v0 + a * tau, a


def end_time(phases: list[MotionPhase], track_length: float) -> float:
    last = phases[-1]
    return last.t0 + (track_length - last.s0) / last.v0


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class TruthSample:
    t: float
    pose: Pose2
    speed: float
    yaw_rate: float
    arclength: float


@dataclass(frozen=True)
class GnssFix:
    t: float
    position: GeoPoint
    speed: float
    cov: tuple[float, float, float]   # (xx, xy, yy) in m^2, east/north axes of the run origin
    valid: bool = True

    @property
    def covariance(self) -> np.ndarray:
        xx, xy, yy = self.cov
        return np.array([[xx, xy], [xy, yy]])

    @property
    def sigma3_max(self) -> float:
        return 3.0 * math.sqrt(np.linalg.eigvalsh(self.covariance)[-1])


@dataclass(frozen=True)
class ImuSample:
    t: float
    accel: tuple[float, float, float]
    gyro: tuple[float, float, float]


@dataclass
class TruthArrays:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray
    speed: np.ndarray
    yaw_rate: np.ndarray
    s: np.ndarray

    def records(self) -> Iterable[TruthSample]:
        for i in range(len(self.t)):
            yield TruthSample(float(self.t[i]),
                              Pose2(float(self.x[i]), float(self.y[i]), float(self.heading[i]),
                                    float(self.curvature[i])),
                              float(self.speed[i]), float(self.yaw_rate[i]), float(self.s[i]))


@dataclass
class GnssArrays:
    t: np.ndarray
    x: np.ndarray        # east, m, in the run origin's tangent plane
    y: np.ndarray
    speed: np.ndarray
    cov: np.ndarray      # (N, 2, 2)
    lat: np.ndarray
    lon: np.ndarray

    def __len__(self):
        return len(self.t)

    def records(self) -> Iterable[GnssFix]:
        for i in range(len(self.t)):
            c = self.cov[i]
            yield GnssFix(float(self.t[i]), GeoPoint(float(self.lat[i]), float(self.lon[i])),
                          float(self.speed[i]), (float(c[0, 0]), float(c[0, 1]), float(c[1, 1])))


@dataclass
class ImuArrays:
    t: np.ndarray
    accel: np.ndarray    # (N, 3) body frame: forward, left, up
    gyro: np.ndarray     # (N, 3); z is the yaw rate

    def __len__(self):
        return len(self.t)

    def records(self) -> Iterable[ImuSample]:
        for i in range(len(self.t)):
            yield ImuSample(float(self.t[i]), tuple(map(float, self.accel[i])), tuple(map(float, self.gyro[i])))


@dataclass
class Run:
    origin: GeoPoint
    truth: TruthArrays
    gnss: GnssArrays
    imu: ImuArrays
    seed: int = 0
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# simulation


def _in_any(t: np.ndarray, intervals) -> np.ndarray:
    mask = np.zeros(t.shape, dtype=bool)
    for lo, hi, *_ in intervals:
        mask |= (t >= lo) & (t <= hi)
    return mask


def simulate_run(track: TrackMap, cfg: RunConfig) -> Run:
    """Truth, GNSS and IMU streams for one pass over ``track``.

    Local coordinates use the tangent plane at the map origin.  GNSS fixes
    fall on multiples of ``1 / gnss_rate`` and are simply missing during
    outages; the IMU runs throughout.
    """
    chain = track.chain()
    length = chain.length
    if cfg.speed_profile[-1][0] >= length:
        raise DomainError("speed profile is shorter than the track")
    phases = motion_phases(cfg.speed_profile, length)
    t_end = end_time(phases, length)
    rng_gnss, rng_gyro, rng_accel = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(3))

    # IMU
    n_imu = int(math.floor(t_end * cfg.imu_rate)) + 1
    t_imu = np.arange(n_imu) / cfg.imu_rate
    s_imu, v_imu, a_imu = motion_at(phases, t_imu)
    s_imu = np.minimum(s_imu, length)
    k_imu = _curvature_at(chain, s_imu)
    g_sd = cfg.gyro_noise_density * math.sqrt(cfg.imu_rate)
    a_sd = cfg.accel_noise_density * math.sqrt(cfg.imu_rate)
    gyro = g_sd * rng_gyro.standard_normal((n_imu, 3))
    gyro[:, 2] += v_imu * k_imu + cfg.gyro_bias
    accel = a_sd * rng_accel.standard_normal((n_imu, 3))
    accel[:, 0] += a_imu + cfg.accel_bias
    accel[:, 1] += v_imu * v_imu * k_imu
    accel[:, 2] += GRAVITY
    imu = ImuArrays(t_imu, accel, gyro)

    # truth at the (coarser) truth rate; it always includes the GNSS epochs
    n_truth = int(math.floor(t_end * cfg.truth_rate)) + 1
    t_truth = np.union1d(np.arange(n_truth) / cfg.truth_rate,
                         np.arange(int(math.floor(t_end * cfg.gnss_rate)) + 1) / cfg.gnss_rate)
    truth = _truth_at(chain, phases, t_truth, length)

    # GNSS
    t_fix = np.arange(int(math.floor(t_end * cfg.gnss_rate)) + 1) / cfg.gnss_rate
    t_fix = t_fix[~_in_any(t_fix, cfg.outages)]
    idx = np.searchsorted(truth.t, t_fix)
    cov = cfg.gnss_covariance(t_fix)
    noise = rng_gnss.standard_normal((len(t_fix), 2))
    speed_noise = rng_gnss.standard_normal(len(t_fix))
    if not cfg.gnss_noise:
        noise[:] = 0.0
        speed_noise[:] = 0.0
    chol = np.linalg.cholesky(cov)
    offs = np.einsum("nij,nj->ni", chol, noise)
    gx = truth.x[idx] + offs[:, 0]
    gy = truth.y[idx] + offs[:, 1]
    gv = np.maximum(truth.speed[idx] + cfg.gnss_speed_sigma * speed_noise, 0.0)
    lat, lon = local_to_geo_arrays(gx, gy, track.origin)
    gnss = GnssArrays(t_fix, gx, gy, gv, cov, np.asarray(lat), np.asarray(lon))
    return Run(track.origin, truth, gnss, imu, cfg.seed)


def _curvature_at(chain, s: np.ndarray) -> np.ndarray:
    idx = chain.locate(s)
    frac = np.clip((s - chain.stations[idx]) / chain.lengths[idx], 0.0, 1.0)
    return chain.k0[idx] + (chain.k1[idx] - chain.k0[idx]) * frac


def _truth_at(chain, phases, t: np.ndarray, length: float) -> TruthArrays:
    s, v, _ = motion_at(phases, t)
    s = np.minimum(s, length)
    x, y, h, k = chain.evaluate(s)
    return TruthArrays(t, x, y, h, k, v, v * k, s)


# ---------------------------------------------------------------------------
# JSONL persistence

STREAM_FORMAT = "trackloc-stream/1"


def _manifest(kind: str, run: Run, extra: dict | None = None) -> dict:
    m = {"manifest": STREAM_FORMAT, "stream": kind, "seed": run.seed,
         "origin": [run.origin.latitude, run.origin.longitude]}
    m.update(run.meta)
    if extra:
        m.update(extra)
    return m


def _write_jsonl(path: Path, manifest: dict, rows: Iterable[dict]) -> str:
    h = hashlib.sha256()
    with open(path, "w", encoding="utf-8") as fh:
        for obj in [manifest] if manifest else []:
            line = json.dumps(obj, sort_keys=True) + "\n"
            fh.write(line)
            h.update(line.encode())
        for obj in rows:
            line = json.dumps(obj, separators=(",", ":")) + "\n"
            fh.write(line)
            h.update(line.encode())
    return h.hexdigest()


def write_run(run: Run, out_dir, extra: dict | None = None) -> dict[str, str]:
    """Write ``truth.jsonl``, ``gnss.jsonl`` and ``imu.jsonl``; returns their sha256."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tr, g, imu = run.truth, run.gnss, run.imu
    hashes = {}
    hashes["truth.jsonl"] = _write_jsonl(out / "truth.jsonl", _manifest("truth", run, extra), (
        {"t": float(tr.t[i]), "x": float(tr.x[i]), "y": float(tr.y[i]), "heading": float(tr.heading[i]),
         "curvature": float(tr.curvature[i]), "speed": float(tr.speed[i]), "yaw_rate": float(tr.yaw_rate[i]),
         "s": float(tr.s[i])} for i in range(len(tr.t))))
    hashes["gnss.jsonl"] = _write_jsonl(out / "gnss.jsonl", _manifest("gnss", run, extra), (
        {"t": float(g.t[i]), "lat": float(g.lat[i]), "lon": float(g.lon[i]), "speed": float(g.speed[i]),
         "cov_xx": float(g.cov[i, 0, 0]), "cov_xy": float(g.cov[i, 0, 1]), "cov_yy": float(g.cov[i, 1, 1]),
         "valid": True} for i in range(len(g.t))))
    hashes["imu.jsonl"] = _write_jsonl(out / "imu.jsonl", _manifest("imu", run, extra), (
        {"t": float(imu.t[i]), "ax": float(imu.accel[i, 0]), "ay": float(imu.accel[i, 1]),
         "az": float(imu.accel[i, 2]), "gx": float(imu.gyro[i, 0]), "gy": float(imu.gyro[i, 1]),
         "gz": float(imu.gyro[i, 2])} for i in range(len(imu.t))))
    return hashes


def _read_jsonl(path: Path, kind: str, fields: Sequence[str]) -> tuple[dict, dict[str, np.ndarray]]:
    cols = {f: [] for f in fields}
    manifest = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if lineno == 1 and "manifest" in obj:
                if obj.get("stream") != kind:
                    raise DataError(f"{path}: expected a {kind} stream, found {obj.get('stream')!r}")
                manifest = obj
                continue
            try:
                for f in fields:
                    cols[f].append(float(obj[f]))
            except (KeyError, TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: record lacks a numeric {f!r}") from None
    if manifest is None:
        raise DataError(f"{path}: missing manifest line")
    arrays = {f: np.array(v, dtype=float) for f, v in cols.items()}
    t = arrays["t"]
    if t.size and (not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0)):
        raise DataError(f"{path}: timestamps must be finite and strictly increasing")
    return manifest, arrays


def read_truth(path) -> tuple[TruthArrays, dict]:
    """Truth stream and its manifest line."""
    m, tr = _read_jsonl(Path(path), "truth", ("t", "x", "y", "heading", "curvature", "speed", "yaw_rate", "s"))
    return TruthArrays(tr["t"], tr["x"], tr["y"], tr["heading"], tr["curvature"], tr["speed"], tr["yaw_rate"],
                       tr["s"]), m


def read_run(in_dir) -> Run:
    d = Path(in_dir)
    truth, m = read_truth(d / "truth.jsonl")
    origin = GeoPoint(*m["origin"])
    gnss = read_gnss(d / "gnss.jsonl", origin)
    imu = read_imu(d / "imu.jsonl")
    meta = {k: v for k, v in m.items() if k not in ("manifest", "stream", "seed", "origin")}
    return Run(origin, truth, gnss, imu, int(m.get("seed", 0)), meta)


def read_gnss(path, origin: GeoPoint | None = None) -> GnssArrays:
    m, g = _read_jsonl(Path(path), "gnss", ("t", "lat", "lon", "speed", "cov_xx", "cov_xy", "cov_yy"))
    origin = origin or GeoPoint(*m["origin"])
    x, y = geo_to_local_arrays(g["lat"], g["lon"], origin)
    cov = np.stack([np.stack([g["cov_xx"], g["cov_xy"]], -1), np.stack([g["cov_xy"], g["cov_yy"]], -1)], -2)
    return GnssArrays(g["t"], np.asarray(x), np.asarray(y), g["speed"], cov, g["lat"], g["lon"])


def read_imu(path) -> ImuArrays:
    _, a = _read_jsonl(Path(path), "imu", ("t", "ax", "ay", "az", "gx", "gy", "gz"))
    return ImuArrays(a["t"], np.column_stack([a["ax"], a["ay"], a["az"]]),
                     np.column_stack([a["gx"], a["gy"], a["gz"]]))


# ---------------------------------------------------------------------------
# reference scenario

KMH = 1.0 / 3.6

REFERENCE_ORIGIN = GeoPoint(50.548, 12.913)
REFERENCE_HEADING_DEG = 231.2

# Radii follow the compact-map excerpt (213, 376, 197 m); arc lengths are
# long enough for each arc to be seen over several GNSS epochs.
REFERENCE_TRACK = (
    ("st", 350.0, None),
    ("ta", 40.0, None),
    ("ca", 250.0, -213.0),
    ("ta", 40.0, None),
    ("st", 218.0, None),
    ("ta", 76.0, None),
    ("ca", 350.0, 376.0),
    ("ta", 37.0, None),
    ("ca", 220.0, 197.0),
    ("ta", 48.0, None),
    ("st", 581.0, None),
    ("ta", 60.0, None),
    ("ca", 400.0, -450.0),
    ("ta", 60.0, None),
    ("st", 700.0, None),
    ("ta", 60.0, None),
    ("ca", 300.0, 300.0),
    ("ta", 60.0, None),
    ("st", 500.0, None),
    ("ta", 50.0, None),
    ("ca", 300.0, -350.0),
    ("ta", 50.0, None),
    ("st", 950.0, None),
)

REFERENCE_RUN = dict(
    speed_profile=((0.0, 35 * KMH), (1700.0, 56 * KMH), (2800.0, 45 * KMH), (3900.0, 30 * KMH),
                   (4800.0, 22 * KMH)),
    gnss_sigma=5.0,
    sigma_inflation=((290.0, 305.0, 2.5), (440.0, 500.0, 3.0)),
    outages=((20.0, 24.0), (200.0, 203.0), (268.0, 281.0), (345.0, 348.0), (500.0, 502.0)),
)


def reference_track() -> TrackMap:
    return build_track(REFERENCE_TRACK, REFERENCE_ORIGIN, REFERENCE_HEADING_DEG)


def reference_config(seed: int = 0) -> RunConfig:
    return RunConfig(seed=seed, **REFERENCE_RUN)


# ---------------------------------------------------------------------------
# TOML scenario files


def load_scenario(path) -> tuple[TrackMap, RunConfig, dict]:
    """Track, run config and the remaining tables of a TOML scenario file.

    ``[track]`` holds ``origin = [lat, lon]``, ``heading_deg`` and
    ``elements = [[shape, length, radius], ...]`` (or ``reference = true``);
    ``[run]`` holds :class:`RunConfig` fields (or ``reference = true``).
    """
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{p}: no such config file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    track_doc = doc.get("track")
    if track_doc is None:
        raise ConfigError(f"{p}: missing [track] table")
    if track_doc.get("reference"):
        track = reference_track()
    else:
        for key in ("origin", "heading_deg", "elements"):
            if key not in track_doc:
                raise ConfigError(f"{p}: missing track.{key}")
        try:
            rows = [tuple(None if v == "" else v for v in r) for r in track_doc["elements"]]
            track = build_track(rows, GeoPoint(*track_doc["origin"]), track_doc["heading_deg"])
        except DomainError as exc:
            raise ConfigError(f"{p}: track.elements: {exc}") from None
    run_doc = dict(doc.get("run", {}))
    if run_doc.pop("reference", False):
        run_doc = {**REFERENCE_RUN, **run_doc}
    cfg = config_from_dict(run_doc)
    rest = {k: v for k, v in doc.items() if k not in ("track", "run")}
    return track, cfg, rest
