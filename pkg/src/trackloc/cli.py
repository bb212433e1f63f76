"""Command-line entry point.

Subcommands hand files to each other: ``simulate`` writes sensor streams,
``localize`` turns them into state logs, ``map`` builds a compact map from
an IMM log, ``evaluate`` writes the report tables and figures.  ``run``
chains all four and ``sweep`` summarises many seeds.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, DomainError, NumericalError, ParseError, TracklocError
from .evaluation import (Channel, compare_methods, decompose_errors, ellipse_export, evaluate, improvement_rows,
                         table1_rows, table2_rows)
from .filters import gnss_log, run_imm, run_kf
from .geodesy import GeoPoint, geo_to_local_arrays
from .mapfusion import fuse_log, map_constraint, map_sigma
from .pipeline import (METHODS, ScenarioConfig, build_map, identified_radii, radii_match, reference_scenario,
                       scenario_from_parts, segments_match, truth_radii, truth_segments)
from .reports import (manifest, read_events, read_state_log, sha256_file, write_events,
                      write_history, write_rows, write_segments, write_state_log)
from .sim import load_scenario, read_gnss, read_imu, read_truth, simulate_run, write_run
from .trackmap import load_reference, map_error_cdf, map_load, map_save, sample_polyline

log = logging.getLogger("trackloc")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


def _scenario(path) -> ScenarioConfig:
    if path is None:
        return reference_scenario()
    track, run, rest = load_scenario(path)
    return scenario_from_parts(track, run, rest)


def _out(args, scenario: ScenarioConfig | None = None) -> Path:
    out = Path(args.out or (scenario.out_dir if scenario else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _inputs(*paths) -> dict:
    return {Path(p).name: sha256_file(p) for p in paths if p is not None}


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    sc = _scenario(args.config)
    cfg = sc.run if args.seed is None else sc.run.with_seed(args.seed)
    out = _out(args, sc)
    run = simulate_run(sc.track, cfg)
    config_doc = dataclasses.asdict(cfg)
    hashes = write_run(run, out, {"tool_version": __version__})
    # the simulated track itself, for later map-error evaluation
    map_save(sc.track.with_elements(sc.track.elements, notes=("simulated track",)), out / "track.csv")
    ref = sample_polyline(sc.track, 1.0)
    write_rows(out / "reference.csv", manifest("reference", cfg.seed), [["lat", "lon"]]
               + [[p.latitude, p.longitude] for p in ref])
    hashes["track.csv"] = sha256_file(out / "track.csv")
    hashes["reference.csv"] = sha256_file(out / "reference.csv")
    doc = manifest("simulation", cfg.seed, _inputs(args.config), run=config_doc, files=hashes,
                   origin=[run.origin.latitude, run.origin.longitude],
                   gnss_fixes=len(run.gnss.t), duration_s=float(run.imu.t[-1]))
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(hashes)} files to {out} (seed {cfg.seed}, {len(run.gnss.t)} fixes)")
    return 0


# ---------------------------------------------------------------------------
# localize


def _epoch_grid(t0: float, t_end: float) -> np.ndarray:
    return np.round(np.concatenate([[t0], np.arange(math.floor(t0) + 1, math.floor(t_end + 1e-9) + 1)]), 6)


def cmd_localize(args) -> int:
    sc = _scenario(args.config)
    streams = Path(args.streams)
    gnss_path, imu_path = streams / "gnss.jsonl", streams / "imu.jsonl"
    gm = _stream_manifest(gnss_path)
    origin = GeoPoint(*gm["origin"])
    gnss = read_gnss(gnss_path, origin)
    imu = read_imu(imu_path)
    cfg = sc.filter
    track = map_load(args.map) if args.map else None
    method = args.method
    if method == "gnss":
        out_log = gnss_log(gnss, _epoch_grid(cfg.warmup, float(imu.t[-1])))
    elif method == "kf":
        out_log = run_kf(gnss, imu, cfg)
    else:
        constraint = None
        if track is not None and cfg.closed_loop_map:
            constraint = map_constraint(track, sc.fusion.sigma_m or map_sigma(track), origin)
        out_log = run_imm(gnss, imu, cfg, constraint=constraint)
    name = method
    if track is not None:
        out_log = fuse_log(out_log, track, sc.fusion.sigma_m or map_sigma(track), origin)
        name = out_log.method
    out = _out(args, sc)
    path = out / f"{name}.csv"
    write_state_log(path, out_log, origin, gm.get("seed"), _inputs(gnss_path, imu_path, args.map))
    print(f"wrote {path} ({len(out_log.t)} epochs, {int(out_log.available.sum())} available)")
    return 0


def _stream_manifest(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            first = json.loads(fh.readline())
    except FileNotFoundError:
        raise DataError(f"{path}: no such stream file") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:1: malformed JSON ({exc.msg})") from None
    if "origin" not in first:
        raise DataError(f"{path}:1: manifest lacks an origin")
    return first


# ---------------------------------------------------------------------------
# map


def cmd_map(args) -> int:
    sc = _scenario(args.config)
    state, m = read_state_log(args.log)
    origin = GeoPoint(*m["origin"])
    events = read_events(args.events) if args.events else None
    result = build_map(state, origin, sc.segments, events=events)
    if not all(b < a for a, b in zip(result.history, result.history[1:])):
        raise NumericalError("refinement objective history is not strictly decreasing")
    out = _out(args, sc)
    inputs = _inputs(args.log, args.events)
    seed = m.get("seed")
    mf = manifest("map", seed, inputs)
    notes = (json.dumps(mf, sort_keys=True, separators=(",", ":")),)
    map_save(result.refined.with_elements(result.refined.elements, notes=notes), out / "map.csv")
    map_save(result.initial.with_elements(result.initial.elements, notes=notes), out / "initial_map.csv")
    write_events(out / "events.csv", result.events, manifest("events", seed, inputs))
    write_segments(out / "segments.csv", result.segments, manifest("segments", seed, inputs))
    write_history(out / "history.csv", result.history, manifest("objective_history", seed, inputs))
    if not args.no_plots:
        from .plots import plot_map, plot_probabilities
        ok = state.available
        plot_map({"refined": result.refined, "initial": result.initial}, out / "map.png", origin,
                 trace_xy=state.x[ok, :2], m=mf)
        if state.mu is not None:
            plot_probabilities(state, result.events, out / "probabilities.png", m=mf)
    print(f"wrote {out / 'map.csv'}: {len(result.refined.elements)} elements, "
          f"{len(result.history) - 1} accepted iterations, fit rms {result.refined.fit_rms:.3f} m")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args) -> int:
    truth_path = Path(args.truth)
    run_dir = truth_path.parent
    truth, tm = read_truth(truth_path)
    truth_origin = GeoPoint(*tm["origin"])
    logs, origins = {}, {}
    for p in args.logs:
        lg, m = read_state_log(p)
        if lg.method in logs:
            raise DataError(f"{p}: method {lg.method!r} given twice")
        origins[lg.method] = GeoPoint(*m["origin"])
        logs[lg.method] = lg
    for name, o in origins.items():
        if o != truth_origin:
            raise DataError(f"log {name!r} is in a different local frame than the truth stream")
    out = _out(args)
    inputs = _inputs(truth_path, *args.logs, args.map, args.reference)
    seed = tm.get("seed")
    errors = {n: decompose_errors(lg, truth) for n, lg in logs.items()}
    for n, e in errors.items():
        if e.dropped:
            log.warning("%s: %d estimate(s) without truth within 0.05 s were dropped", n, e.dropped)
    reports = {n: evaluate(e, n) for n, e in errors.items()}
    mk = lambda kind: manifest(kind, seed, inputs)  # noqa: E731
    doc = {"manifest": mk("report"), "methods": {}}
    for n, r in reports.items():
        doc["methods"][n] = {
            "epochs": len(r.t), "dropped": errors[n].dropped, "availability": r.availability,
            "consistency": r.consistency,
            "quantiles": {ch.value: {f"{p:.2f}": _json_num(r.quantile(ch, p)) for p in (0.5, 0.9, 0.99, 1.0)}
                          for ch in Channel},
        }
    if len(reports) >= 2:
        try:
            cmp = compare_methods(reports)
        except DomainError as exc:
            raise DataError(f"epoch mismatch: {exc}") from None
        write_rows(out / "table1.csv", mk("table1"), table1_rows(cmp))
        write_rows(out / "table2.csv", mk("table2"), table2_rows(cmp))
        write_rows(out / "improvements.csv", mk("improvements"), improvement_rows(cmp))
        doc["improvements"] = {f"{b}->{n}": {f"{ch}@{p:.2f}": _json_num(v) for (ch, p), v in vals.items()}
                               for (b, n), vals in cmp.improvements.items()}
    rows = [["method", "channel", "sigma3_m", "probability"]]
    for n, r in reports.items():
        for ch in Channel:
            tab = r.cdfs[ch.value]
            rows += [[n, ch.value, v, p] for v, p in zip(tab.values, tab.probability)]
    write_rows(out / "cdf.csv", mk("cdf"), rows)
    rows = [["method", "t", "err_along", "err_cross", "sigma3_along", "sigma3_cross", "sigma3_max", "available"]]
    for n, e in errors.items():
        rows += [[n, s.t, s.err_along, s.err_cross, s.sigma3_along, s.sigma3_cross, s.sigma3_max,
                  str(int(s.available))] for s in e]
    write_rows(out / "errors.csv", mk("errors"), rows)
    rows = [["method", "t", "x", "y", "semi_major_3sigma", "semi_minor_3sigma", "orientation_deg", "valid"]]
    for n, lg in logs.items():
        rows += [[n, r.t, r.x, r.y, r.semi_major, r.semi_minor, r.orientation, str(int(r.valid))]
                 for r in ellipse_export(lg, args.ellipse_every)]
    write_rows(out / "ellipses.csv", mk("ellipses"), rows)

    track = map_load(args.map) if args.map else None
    stats = None
    if track is not None:
        ref_path = args.reference or (run_dir / "reference.csv" if (run_dir / "reference.csv").exists() else None)
        if ref_path is None:
            raise ConfigError("--map needs --reference (no reference.csv next to the truth stream)")
        reference = load_reference(ref_path)
        stats = map_error_cdf(track, reference)
        write_rows(out / "table4.csv", mk("table4"), [["statistic", "abs_error_m"], ["mean", stats.mean]]
                   + [[f"cdf_{p:.2f}", v] for p, v in stats.quantiles.items()])
        doc["map_error"] = {"mean": stats.mean, "max": stats.max,
                            "quantiles": {f"{p:.2f}": v for p, v in stats.quantiles.items()},
                            "elements": len(track.elements), "fit_rms": track.fit_rms}

    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if not args.no_plots:
        from .plots import plot_cdfs, plot_ellipses, plot_map, plot_map_error
        mf = mk("figure")
        plot_cdfs(reports, out / "cdf.png", mf)
        window = tuple(args.window) if args.window else None
        plot_ellipses({n: lg for n, lg in logs.items() if n in ("gnss", "kf", "imm+map")} or logs,
                      out / "ellipses.png", window, m=mf)
        if stats is not None:
            plot_map_error(stats, out / "map_error.png", mf)
            rx, ry = geo_to_local_arrays(np.array([p.latitude for p in reference]),
                                         np.array([p.longitude for p in reference]), truth_origin)
            plot_map({"map": track}, out / "map.png", truth_origin, reference_xy=np.column_stack([rx, ry]), m=mf)
    print(_summary(reports, stats))
    return 0


def _json_num(v: float):
    return None if math.isnan(v) else ("inf" if math.isinf(v) else v)


def _summary(reports, stats) -> str:
    lines = [f"{'method':<10} {'avail':>6} {'AT 0.99':>9} {'CT 0.99':>9} {'CT cons':>8}"]
    for n, r in reports.items():
        lines.append(f"{n:<10} {r.availability:6.3f} {r.quantile('along', 0.99):9.2f} "
                     f"{r.quantile('cross', 0.99):9.2f} {r.consistency['cross']:8.4f}")
    if stats is not None:
        lines.append(f"map error: mean {stats.mean:.2f} m, max {stats.max:.2f} m")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# run / sweep


def cmd_run(args) -> int:
    out = Path(args.out or _scenario(args.config).out_dir)
    streams, logs, mapdir, rep = out / "streams", out / "logs", out / "map", out / "report"
    ns = argparse.Namespace
    cmd_simulate(ns(config=args.config, seed=args.seed, out=str(streams)))
    for method in ("gnss", "kf", "imm"):
        cmd_localize(ns(config=args.config, streams=str(streams), method=method, map=None, out=str(logs)))
    cmd_map(ns(config=args.config, log=str(logs / "imm.csv"), events=None, out=str(mapdir),
               no_plots=args.no_plots))
    cmd_localize(ns(config=args.config, streams=str(streams), method="imm", map=str(mapdir / "map.csv"),
                    out=str(logs)))
    cmd_evaluate(ns(truth=str(streams / "truth.jsonl"),
                    logs=[str(logs / f"{m}.csv") for m in METHODS], map=str(mapdir / "map.csv"),
                    reference=str(streams / "reference.csv"), out=str(rep), ellipse_every=args.ellipse_every,
                    window=args.window, no_plots=args.no_plots))
    return 0


def cmd_sweep(args) -> int:
    """Per-seed summary over many seeds, in memory."""
    from .pipeline import run_scenario
    sc = _scenario(args.config)
    out = _out(args, sc)
    ref = sample_polyline(sc.track, 1.0)
    expected = truth_radii(sc.track)
    rows = [["seed", "segments_ok", "radii_ok", "map_mean_m", "map_max_m", "history_monotone"]
            + [f"{m}_{c}_q99" for m in METHODS for c in ("at", "ct")]
            + [f"{m}_ct_consistency" for m in METHODS]]
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        r = run_scenario(sc, seed)
        me = map_error_cdf(r.mapping.refined, ref)
        span = (float(r.logs["imm"].t[0]), float(r.logs["imm"].t[-1]))
        seg_ok = segments_match(r.mapping.events, truth_segments(sc.track, r.run), span)
        rad_ok = radii_match(identified_radii(r.mapping.segments), expected)
        mono = all(b < a for a, b in zip(r.mapping.history, r.mapping.history[1:]))
        rows.append([str(seed), str(int(seg_ok)), str(int(rad_ok)), me.mean, me.max, str(int(mono))]
                    + [r.reports[m].quantile(c, 0.99) for m in METHODS for c in ("along", "cross")]
                    + [r.errors[m].consistency("cross") for m in METHODS])
        print(f"seed {seed}: segments {'ok' if seg_ok else 'MISMATCH'}, map mean {me.mean:.2f} m", flush=True)
    write_rows(out / "sweep.csv", manifest("sweep", args.first_seed, _inputs(args.config), seeds=args.seeds), rows)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trackloc", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"trackloc {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate sensor streams and ground truth")
    s.add_argument("--config", help="TOML scenario (default: the built-in reference scenario)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("localize", help="run a positioning method over sensor streams")
    s.add_argument("--streams", required=True, help="directory with gnss.jsonl and imu.jsonl")
    s.add_argument("--method", choices=("gnss", "kf", "imm"), default="imm")
    s.add_argument("--map", help="compact map CSV; adds map-constrained positions")
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_localize)

    s = sub.add_parser("map", help="build and refine a compact map from an IMM state log")
    s.add_argument("--log", required=True)
    s.add_argument("--events", help="geometry events CSV (default: classify from the log)")
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_map)

    s = sub.add_parser("evaluate", help="error tables, CDFs, ellipses and map error")
    s.add_argument("--truth", required=True)
    s.add_argument("--logs", nargs="+", required=True)
    s.add_argument("--map")
    s.add_argument("--reference", help="reference polyline (lat,lon CSV or GeoJSON)")
    s.add_argument("--ellipse-every", type=int, default=1)
    s.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"), help="time window of the ellipse plot")
    s.add_argument("--out")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("run", help="simulate, localize, map and evaluate in one go")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--ellipse-every", type=int, default=1)
    s.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="per-seed summary of the whole pipeline")
    s.add_argument("--config")
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--first-seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, ParseError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_DATA
    except TracklocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
