"""End-to-end runs: simulate, localize, identify geometry, build and refine
the map, fuse, evaluate."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .evaluation import ErrorSet, EvalReport, decompose_errors, evaluate
from .filters import FilterConfig, StateLog, gnss_log, run_imm, run_kf
from .geodesy import GeoPoint
from .geom import Shape
from .mapfusion import fuse_log, map_constraint, map_sigma
from .refine import refine_map
from .segments import GeometryEvent, SegmentConfig, classify_segments, identify_segments
from .sim import Run, RunConfig, reference_config, reference_track, simulate_run
from .trackmap import TrackMap, assemble_map

log = logging.getLogger(__name__)

METHODS = ("gnss", "kf", "imm", "imm+map")


@dataclass(frozen=True)
class FusionConfig:
    sigma_m: float | None = None      # m; default is the map's refinement RMS
    closed_loop: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    track: TrackMap
    run: RunConfig
    filter: FilterConfig = FilterConfig()
    segments: SegmentConfig = SegmentConfig()
    fusion: FusionConfig = FusionConfig()
    out_dir: str = "out"


def _from_table(cls, table: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kw = {k: tuple(map(tuple, v)) if isinstance(v, list) and v and isinstance(v[0], list)
          else tuple(v) if isinstance(v, list) else v for k, v in table.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError, DomainError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def scenario_from_parts(track: TrackMap, run: RunConfig, rest: dict) -> ScenarioConfig:
    """Combine a loaded track and run config with the optional ``[filter]``,
    ``[segments]``, ``[fusion]`` and ``[output]`` tables."""
    filt = _from_table(FilterConfig, rest.get("filter", {}), "filter")
    seg = _from_table(SegmentConfig, rest.get("segments", {}), "segments")
    fus = _from_table(FusionConfig, rest.get("fusion", {}), "fusion")
    if fus.closed_loop and not filt.closed_loop_map:
        filt = dataclasses.replace(filt, closed_loop_map=True)
    out = rest.get("output", {}).get("dir", "out")
    return ScenarioConfig(track, run, filt, seg, fus, out)


def reference_scenario(seed: int = 0) -> ScenarioConfig:
    return ScenarioConfig(reference_track(), reference_config(seed))


# ---------------------------------------------------------------------------
# mapping


def cross_track_weights(log: StateLog) -> np.ndarray:
    """``1 / (3σ_cross)²`` of each logged state, using its own heading."""
    c, s = np.cos(log.x[:, 3]), np.sin(log.x[:, 3])
    P = log.P
    var = s * s * P[:, 0, 0] - 2 * c * s * P[:, 0, 1] + c * c * P[:, 1, 1]
    return 1.0 / (9.0 * var)


@dataclass
class MapResult:
    events: list
    segments: list
    initial: TrackMap
    refined: TrackMap
    history: list


def build_map(log: StateLog, frame: GeoPoint, cfg: SegmentConfig = SegmentConfig(),
              events: list[GeometryEvent] | None = None, max_iter: int = 200) -> MapResult:
    """Segments from an IMM log, concatenated and then refined on its trace."""
    if log.mu is None and events is None:
        raise DomainError("building a map needs an IMM log (model probabilities) or explicit events")
    if events is None:
        events = classify_segments(log.t, log.mu, log.omega_arc, log.sigma_omega_arc, cfg)
    segs = identify_segments(log, events, cfg.min_epochs)
    if len(segs) < 2:
        raise DomainError(f"only {len(segs)} geometry segment(s) identified; at least 2 are needed "
                          "(drive a longer stretch or relax the segment thresholds)")
    initial = assemble_map(segs, frame)
    ok = log.available & np.all(np.isfinite(log.x[:, :2]), axis=1)
    trace = np.column_stack([log.x[ok, 0], log.x[ok, 1], cross_track_weights(log.select(ok))])
    refined, history = refine_map(initial, trace, frame, max_iter=max_iter)
    # The map is fitted to this very trace, so its slowly varying cross-track
    # error is inherited rather than averaged away: give the map the RMS
    # cross-track σ the filter reported along the trace.
    sigma = float(np.sqrt(np.mean(1.0 / (9.0 * trace[:, 2]))))
    refined = refined.with_elements(refined.elements, map_sigma=sigma)
    return MapResult(events, segs, initial, refined, history)


# ---------------------------------------------------------------------------
# whole runs


@dataclass
class RunResult:
    seed: int
    run: Run
    logs: dict                    # method -> StateLog
    mapping: MapResult
    errors: dict                  # method -> ErrorSet
    reports: dict                 # method -> EvalReport
    timing: dict = field(default_factory=dict)


def localize(run: Run, cfg: FilterConfig = FilterConfig()) -> dict:
    """GNSS, KF and IMM logs on one shared epoch grid."""
    kf = run_kf(run.gnss, run.imu, cfg)
    imm = run_imm(run.gnss, run.imu, cfg)
    if len(kf.t) != len(imm.t) or not np.array_equal(kf.t, imm.t):
        raise DomainError("filter logs ended up on different epoch grids")
    return {"gnss": gnss_log(run.gnss, kf.t), "kf": kf, "imm": imm}


def fuse(logs: dict, run: Run, mapping: MapResult, scenario: ScenarioConfig) -> StateLog:
    sigma_m = scenario.fusion.sigma_m or map_sigma(mapping.refined)
    if scenario.filter.closed_loop_map:
        fed = run_imm(run.gnss, run.imu, scenario.filter,
                      constraint=map_constraint(mapping.refined, sigma_m, run.origin))
        out = fuse_log(fed, mapping.refined, sigma_m, run.origin)
    else:
        out = fuse_log(logs["imm"], mapping.refined, sigma_m, run.origin)
    out.method = "imm+map"
    return out


def run_scenario(scenario: ScenarioConfig, seed: int | None = None, run: Run | None = None) -> RunResult:
    """Simulate (unless ``run`` is given), localize, map, fuse and evaluate."""
    timing = {}
    t0 = time.perf_counter()
    if run is None:
        cfg = scenario.run if seed is None else scenario.run.with_seed(seed)
        run = simulate_run(scenario.track, cfg)
    timing["simulate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    logs = localize(run, scenario.filter)
    timing["localize"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    mapping = build_map(logs["imm"], run.origin, scenario.segments)
    timing["map"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    logs["imm+map"] = fuse(logs, run, mapping, scenario)
    errors = {m: decompose_errors(logs[m], run.truth) for m in METHODS}
    reports = {m: evaluate(errors[m], m) for m in METHODS}
    timing["evaluate"] = time.perf_counter() - t0
    return RunResult(run.seed, run, logs, mapping, errors, reports, timing)


# ---------------------------------------------------------------------------
# ground-truth comparisons on simulated runs


def truth_segments(track: TrackMap, run: Run) -> list[tuple[Shape, float, float]]:
    """(shape, entry time, exit time) of every straight and circular arc."""
    st = track.chain().stations
    tb = np.interp(st, run.truth.s, run.truth.t)
    return [(e.shape, float(tb[i]), float(tb[i + 1])) for i, e in enumerate(track.elements)
            if e.shape is not Shape.TRANSITIONAL_ARC]


def segments_match(events, truth, span: tuple[float, float], tolerance: float = 3.0) -> bool:
    """Same shapes in the same order, every boundary within ``tolerance`` s.

    Truth segments are clipped to ``span``, the time covered by the log the
    events came from; truth segments outside it are ignored.
    """
    found = [e for e in events if e.shape is not None]
    lo, hi = span
    ref = [(s, max(a, lo), min(b, hi)) for s, a, b in truth if b > lo and a < hi]
    if len(ref) != len(found):
        return False
    for (shape, a, b), e in zip(ref, found):
        if shape is not e.shape or abs(e.t - a) > tolerance or abs(e.closing_t - b) > tolerance:
            return False
    return True


def identified_radii(segments) -> list[float]:
    return [1.0 / s.curvature for s in segments if s.shape is Shape.CIRCULAR_ARC and s.curvature]


def radii_match(found, truth, check=None, rel_tol: float = 0.05) -> bool:
    """Arcs identified one-to-one with the true arcs, and the signed radii
    listed in ``check`` (default: all) within ``rel_tol``."""
    if len(found) != len(truth):
        return False
    check = truth if check is None else check
    for f, r in zip(found, truth):
        if r in check and (f * r <= 0 or abs(f - r) > rel_tol * abs(r)):
            return False
    return True


def truth_radii(track: TrackMap) -> list[float]:
    return [1.0 / e.k0 for e in track.elements if e.shape is Shape.CIRCULAR_ARC]


def mean_quantile(reports: list[dict], method: str, channel: str, p: float) -> float:
    return float(np.mean([r[method].quantile(channel, p) for r in reports]))
