"""Delimited output files: state logs, geometry events, fitted segments,
objective histories and evaluation tables.

Every file starts with a ``# trackloc {json}`` manifest line naming the tool
version, the seed and the sha256 of the inputs it was made from.  Floats are
written in their shortest round-trip form so a reloaded log is bit-identical
to the one that was written.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import DataError
from .filters import MODEL_NAMES, StateLog
from .geodesy import GeoPoint
from .geom import Pose2, Shape
from .segments import EventKind, GeometryEvent
from .trackmap import IdentifiedSegment

MANIFEST_TAG = "# trackloc "
_TRI = [(i, j) for i in range(5) for j in range(i, 5)]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(kind: str, seed=None, inputs: dict | None = None, **extra) -> dict:
    m = {"tool": "trackloc", "version": __version__, "kind": kind, "seed": seed,
         "inputs": dict(sorted((inputs or {}).items()))}
    m.update(extra)
    return m


def manifest_line(m: dict) -> str:
    return MANIFEST_TAG + json.dumps(m, sort_keys=True, separators=(",", ":")) + "\n"


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith(MANIFEST_TAG):
        raise DataError(f"{path}: missing manifest line")
    try:
        return json.loads(first[len(MANIFEST_TAG):])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:1: malformed manifest ({exc.msg})") from None


def _num(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_rows(path, m: dict, rows: Iterable[Sequence]) -> str:
    """CSV with a manifest line; returns the file's sha256."""
    out = io.StringIO()
    out.write(manifest_line(m))
    w = csv.writer(out, lineterminator="\n")
    for r in rows:
        w.writerow([c if isinstance(c, str) else _num(c) for c in r])
    data = out.getvalue().encode("utf-8")
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_rows(path) -> tuple[dict, list[str], list[tuple[int, list[str]]]]:
    """(manifest, header, [(line number, cells)])."""
    m = read_manifest(path)
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2:
        raise DataError(f"{path}: no header row")
    header = next(csv.reader([lines[1]]))
    body = [(i + 1, next(csv.reader([ln]))) for i, ln in enumerate(lines[2:], start=2) if ln.strip()]
    return m, header, body


# ---------------------------------------------------------------------------
# state logs


def _sigma3_own_heading(log: StateLog):
    h = log.x[:, 3]
    c, s = np.cos(h), np.sin(h)
    P = log.P
    with np.errstate(invalid="ignore"):
        va = c * c * P[:, 0, 0] + 2 * c * s * P[:, 0, 1] + s * s * P[:, 1, 1]
        vc = s * s * P[:, 0, 0] - 2 * c * s * P[:, 0, 1] + c * c * P[:, 1, 1]
        return 3.0 * np.sqrt(np.maximum(va, 0.0)), 3.0 * np.sqrt(np.maximum(vc, 0.0))


STATE_COLUMNS = (["t", "available", "x", "y", "v", "psi", "omega"]
                 + [f"p{i}{j}" for i, j in _TRI]
                 + [f"mu_{n}" for n in MODEL_NAMES]
                 + ["omega_arc", "sigma_omega_arc", "sigma3_along", "sigma3_cross",
                    "along_track", "offset", "map_constrained", "map_sigma"])


def write_state_log(path, log: StateLog, origin: GeoPoint, seed=None, inputs=None) -> str:
    n = len(log.t)
    nan = np.full(n, np.nan)
    mu = log.mu if log.mu is not None else np.full((n, 3), np.nan)
    om = log.omega_arc if log.omega_arc is not None else nan
    som = log.sigma_omega_arc if log.sigma_omega_arc is not None else nan
    s3a, s3c = _sigma3_own_heading(log)
    fused = log.fused or {}
    fcols = [fused.get(k, nan) for k in ("along_track", "offset")]
    constrained = fused.get("map_constrained", np.zeros(n, dtype=bool))
    msig = fused.get("map_sigma", nan)
    m = manifest("state_log", seed, inputs, method=log.method,
                 origin=[origin.latitude, origin.longitude], flags=len(log.flags))

    def rows():
        yield STATE_COLUMNS
        for k in range(n):
            yield ([log.t[k], str(int(log.available[k]))] + list(log.x[k])
                   + [log.P[k, i, j] for i, j in _TRI] + list(mu[k])
                   + [om[k], som[k], s3a[k], s3c[k], fcols[0][k], fcols[1][k],
                      str(int(constrained[k])), msig[k]])

    return write_rows(path, m, rows())


def read_state_log(path) -> tuple[StateLog, dict]:
    m, header, body = read_rows(path)
    if m.get("kind") != "state_log":
        raise DataError(f"{path}: not a state log (kind {m.get('kind')!r})")
    missing = [c for c in STATE_COLUMNS[:7 + len(_TRI)] if c not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    col = {c: i for i, c in enumerate(header)}
    data = np.empty((len(body), len(header)))
    for lineno, cells in body:
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}")
        try:
            data[lineno - 3] = [float(c) for c in cells]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric cell") from None
    n = len(body)
    x = data[:, [col[c] for c in ("x", "y", "v", "psi", "omega")]]
    P = np.empty((n, 5, 5))
    for i, j in _TRI:
        P[:, i, j] = P[:, j, i] = data[:, col[f"p{i}{j}"]]
    mu = data[:, [col[f"mu_{nm}"] for nm in MODEL_NAMES]] if "mu_straight" in col else None
    if mu is not None and np.all(np.isnan(mu)):
        mu = None
    log = StateLog(m.get("method", "unknown"), data[:, col["t"]], x, P, data[:, col["available"]] > 0.5, mu=mu)
    if mu is not None:
        log.omega_arc = data[:, col["omega_arc"]]
        log.sigma_omega_arc = data[:, col["sigma_omega_arc"]]
    if "map_constrained" in col and np.any(data[:, col["map_constrained"]] > 0.5):
        log.fused = {"along_track": data[:, col["along_track"]], "offset": data[:, col["offset"]],
                     "map_constrained": data[:, col["map_constrained"]] > 0.5,
                     "map_sigma": data[:, col["map_sigma"]]}
    return log, m


# ---------------------------------------------------------------------------
# geometry


def write_events(path, events: Sequence[GeometryEvent], m: dict) -> str:
    return write_rows(path, m, [["kind", "t", "closing_t"]]
                      + [[e.kind.value, e.t, e.closing_t] for e in events])


def read_events(path) -> list[GeometryEvent]:
    _, header, body = read_rows(path)
    if header[:3] != ["kind", "t", "closing_t"]:
        raise DataError(f"{path}: expected columns kind,t,closing_t")
    out = []
    for lineno, cells in body:
        try:
            out.append(GeometryEvent(EventKind(cells[0]), float(cells[1]), float(cells[2])))
        except (ValueError, IndexError):
            raise DataError(f"{path}:{lineno}: bad event row") from None
    return out


def write_segments(path, segments: Sequence[IdentifiedSegment], m: dict) -> str:
    rows = [["shape", "start_time", "end_time", "x", "y", "heading", "length", "curvature", "radius", "fit_rms"]]
    for s in segments:
        rows.append([s.shape.value, s.start_time, s.end_time, s.anchor.x, s.anchor.y, s.anchor.heading,
                     s.length, s.curvature, 1.0 / s.curvature if s.curvature else math.inf, s.fit_rms])
    return write_rows(path, m, rows)


def read_segments(path) -> list[IdentifiedSegment]:
    _, _, body = read_rows(path)
    out = []
    for lineno, c in body:
        try:
            out.append(IdentifiedSegment(Shape(c[0]), float(c[1]), float(c[2]),
                                         Pose2(float(c[3]), float(c[4]), float(c[5]), float(c[7])),
                                         float(c[6]), float(c[7]), float(c[9])))
        except (ValueError, IndexError):
            raise DataError(f"{path}:{lineno}: bad segment row") from None
    return out


def write_history(path, history: Sequence[float], m: dict) -> str:
    return write_rows(path, m, [["iteration", "objective"]] + [[str(i), f] for i, f in enumerate(history)])
