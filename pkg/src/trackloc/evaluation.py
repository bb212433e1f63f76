"""Along/cross-track error decomposition, 3σ CDFs and method comparison.

Epochs without a solution enter every CDF with an infinite 3σ value, so a
method that is unavailable 5% of the time saturates at 0.95 and has an
infinite 0.99 quantile.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ecdf import ecdf_at, ecdf_table, nearest_rank
from .errors import DomainError

MATCH_TOLERANCE = 0.05               # s between an estimate and its truth sample
TABLE1_LEVELS = (0.90, 0.99, 1.00)
TABLE2_THRESHOLDS = {"along": 5.0, "cross": 1.5}   # m; balise tolerance and track selectivity
CHANNEL_LABELS = {"along": "AT", "cross": "CT", "max": "MAX"}


class Channel(str, enum.Enum):
    MAX = "max"
    ALONG = "along"
    CROSS = "cross"


@dataclass(frozen=True)
class ErrorSample:
    t: float
    err_along: float
    err_cross: float
    sigma3_along: float
    sigma3_cross: float
    sigma3_max: float
    available: bool


@dataclass
class ErrorSet:
    """Column-wise error samples of one method."""

    method: str
    t: np.ndarray
    err_along: np.ndarray
    err_cross: np.ndarray
    sigma3_along: np.ndarray    # inf where unavailable
    sigma3_cross: np.ndarray
    sigma3_max: np.ndarray
    available: np.ndarray
    dropped: int = 0            # estimates without a truth sample close enough in time

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for i in range(len(self.t)):
            yield ErrorSample(float(self.t[i]), float(self.err_along[i]), float(self.err_cross[i]),
                              float(self.sigma3_along[i]), float(self.sigma3_cross[i]),
                              float(self.sigma3_max[i]), bool(self.available[i]))

    def sigma3(self, channel) -> np.ndarray:
        return getattr(self, f"sigma3_{Channel(channel).value}")

    def consistency(self, channel) -> float:
        """Fraction of available epochs whose true error is within the reported 3σ."""
        ch = Channel(channel)
        if ch is Channel.MAX:
            err = np.hypot(self.err_along, self.err_cross)
        else:
            err = np.abs(getattr(self, f"err_{ch.value}"))
        a = self.available
        if not a.any():
            return math.nan
        return float(np.mean(err[a] <= self.sigma3(ch)[a]))


def rotate_covariance(cov, heading):
    """Position covariances expressed in (along, cross) axes of ``heading``."""
    cov = np.asarray(cov, dtype=float)
    c, s = np.cos(heading), np.sin(heading)
    a, b, d = cov[..., 0, 0], cov[..., 0, 1], cov[..., 1, 1]
    along = c * c * a + 2 * c * s * b + s * s * d
    cross = s * s * a - 2 * c * s * b + c * c * d
    return along, cross


def max_eigenvalue(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    a, b, d = cov[..., 0, 0], cov[..., 0, 1], cov[..., 1, 1]
    return 0.5 * (a + d) + np.hypot(0.5 * (a - d), b)


def decompose_errors(log, truth, tolerance: float = MATCH_TOLERANCE) -> ErrorSet:
    """Errors and 3σ bounds of a state log in the truth heading frame.

    Each estimate is matched to the nearest truth sample in time; estimates
    farther than ``tolerance`` from any truth sample are dropped and counted.
    """
    t = np.asarray(log.t, dtype=float)
    tt = np.asarray(truth.t, dtype=float)
    if tt.size == 0:
        raise DomainError("empty truth stream")
    j = np.clip(np.searchsorted(tt, t), 1, len(tt) - 1) if len(tt) > 1 else np.zeros(len(t), dtype=int)
    if len(tt) > 1:
        j = np.where(np.abs(tt[j - 1] - t) <= np.abs(tt[j] - t), j - 1, j)
    keep = np.abs(tt[j] - t) <= tolerance + 1e-12
    j = j[keep]
    avail = np.asarray(log.available, dtype=bool)[keep]
    x = log.x[keep]
    P = log.P[keep]
    h = np.asarray(truth.heading, dtype=float)[j]
    ex = x[:, 0] - np.asarray(truth.x)[j]
    ey = x[:, 1] - np.asarray(truth.y)[j]
    c, s = np.cos(h), np.sin(h)
    err_a = np.where(avail, c * ex + s * ey, np.nan)
    err_c = np.where(avail, -s * ex + c * ey, np.nan)
    with np.errstate(invalid="ignore"):
        va, vc = rotate_covariance(P[:, :2, :2], h)
        vm = max_eigenvalue(P[:, :2, :2])
        s3a = np.where(avail, 3.0 * np.sqrt(np.maximum(va, 0.0)), np.inf)
        s3c = np.where(avail, 3.0 * np.sqrt(np.maximum(vc, 0.0)), np.inf)
        s3m = np.where(avail, 3.0 * np.sqrt(np.maximum(vm, 0.0)), np.inf)
    return ErrorSet(log.method, t[keep], err_a, err_c, s3a, s3c, s3m, avail, int(np.count_nonzero(~keep)))


@dataclass(frozen=True)
class CdfTable:
    values: np.ndarray          # finite step locations
    probability: np.ndarray     # F at each step
    samples: np.ndarray = field(repr=False)

    @property
    def availability(self) -> float:
        return float(np.mean(np.isfinite(self.samples)))

    def at(self, x: float) -> float:
        return ecdf_at(self.samples, x)

    def quantile(self, p: float) -> float:
        return nearest_rank(self.samples, p)


def cdf(samples, channel) -> CdfTable:
    """Empirical CDF of one 3σ channel; unavailable epochs count as ∞."""
    if isinstance(samples, ErrorSet):
        v = samples.sigma3(channel)
    else:
        samples = list(samples)
        v = np.array([getattr(e, f"sigma3_{Channel(channel).value}") if e.available else math.inf
                      for e in samples], dtype=float)
    if v.size == 0:
        raise DomainError("a CDF needs at least one sample")
    values, prob = ecdf_table(v)
    return CdfTable(values, prob, v)


@dataclass
class EvalReport:
    method: str
    t: np.ndarray
    cdfs: dict                  # channel name -> CdfTable
    availability: float
    consistency: dict = field(default_factory=dict)

    def quantile(self, channel, p: float) -> float:
        return self.cdfs[Channel(channel).value].quantile(p)

    def at(self, channel, x: float) -> float:
        return self.cdfs[Channel(channel).value].at(x)


def evaluate(errors: ErrorSet, method: str | None = None) -> EvalReport:
    cdfs = {ch.value: cdf(errors, ch) for ch in Channel}
    cons = {ch.value: errors.consistency(ch) for ch in Channel}
    return EvalReport(method or errors.method, np.asarray(errors.t), cdfs,
                      float(np.mean(errors.available)), cons)


def improvement(q_base: float, q_new: float) -> float:
    """Percentage reduction ``100 (1 - q_new / q_base)``."""
    if math.isinf(q_base):
        return math.nan if math.isinf(q_new) else 100.0
    if q_base == 0.0:
        return 0.0 if q_new == 0.0 else -math.inf
    return 100.0 * (1.0 - q_new / q_base)


@dataclass
class Comparison:
    methods: list
    table1: list                # (channel, cdf level, {method: 3σ value})
    table2: list                # (channel, threshold, {method: probability})
    improvements: dict          # (base, new) -> {(channel, level): percent}


def compare_methods(reports: Sequence[EvalReport] | Mapping[str, EvalReport],
                    levels=TABLE1_LEVELS, thresholds=TABLE2_THRESHOLDS) -> Comparison:
    """Quantile table, fixed-threshold table and pairwise improvements."""
    if isinstance(reports, Mapping):
        named = list(reports.items())
    else:
        named = [(r.method, r) for r in reports]
    if len(named) < 2:
        raise DomainError("comparing needs at least two reports")
    t0 = named[0][1].t
    for name, r in named[1:]:
        if len(r.t) != len(t0) or not np.allclose(r.t, t0, atol=1e-6, rtol=0.0):
            raise DomainError(f"report {name!r} covers different epochs than {named[0][0]!r}")
    methods = [n for n, _ in named]
    table1 = []
    for p in levels:
        for ch in (Channel.ALONG, Channel.CROSS):
            table1.append((ch.value, p, {n: r.quantile(ch, p) for n, r in named}))
    table2 = [(ch, x, {n: r.at(ch, x) for n, r in named}) for ch, x in thresholds.items()]
    imp = {}
    for i, (bn, b) in enumerate(named):
        for nn, r in named[i + 1:]:
            imp[(bn, nn)] = {(ch, p): improvement(vals[bn], vals[nn]) for ch, p, vals in table1}
    return Comparison(methods, table1, table2, imp)


def table1_rows(cmp: Comparison) -> list[list[str]]:
    rows = [["channel", "cdf"] + cmp.methods]
    for ch, p, vals in cmp.table1:
        rows.append([CHANNEL_LABELS[ch], f"{p:.2f}"] + [_fmt(vals[m], 1) for m in cmp.methods])
    return rows


def table2_rows(cmp: Comparison) -> list[list[str]]:
    rows = [["channel", "sigma3_m"] + cmp.methods]
    for ch, x, vals in cmp.table2:
        rows.append([CHANNEL_LABELS[ch], f"{x:g}"] + [_fmt(vals[m], 3) for m in cmp.methods])
    return rows


def improvement_rows(cmp: Comparison) -> list[list[str]]:
    rows = [["base", "new", "channel", "cdf", "improvement_pct"]]
    for (bn, nn), vals in cmp.improvements.items():
        for (ch, p), v in vals.items():
            rows.append([bn, nn, CHANNEL_LABELS[ch], f"{p:.2f}", _fmt(v, 1)])
    return rows


def _fmt(v: float, digits: int) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{digits}f}"


@dataclass(frozen=True)
class EllipseRow:
    t: float
    x: float
    y: float
    semi_major: float           # 3σ, m
    semi_minor: float
    orientation: float          # degrees CCW from east of the major axis, in (-90, 90]
    valid: bool


def covariance_ellipse(cov) -> tuple[float, float, float, bool]:
    """3σ semi-axes and major-axis orientation (deg) of a 2x2 covariance."""
    a, b, d = float(cov[0, 0]), float(cov[0, 1]), float(cov[1, 1])
    if not all(math.isfinite(v) for v in (a, b, d)):
        return math.nan, math.nan, math.nan, False
    mean = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), b)
    l1, l2 = mean + rad, mean - rad
    valid = l2 >= -1e-12 * max(abs(l1), 1.0) and abs(float(cov[1, 0]) - b) <= 1e-9 * max(abs(b), 1.0)
    ang = 0.0 if rad == 0.0 else 0.5 * math.degrees(math.atan2(2.0 * b, a - d))
    if ang <= -90.0:
        ang += 180.0
    return 3.0 * math.sqrt(max(l1, 0.0)), 3.0 * math.sqrt(max(l2, 0.0)), ang, valid


def ellipse_export(log, every: int = 1) -> list[EllipseRow]:
    """3σ error ellipses of every ``every``-th available epoch."""
    if every < 1:
        raise DomainError("ellipse stride must be at least 1")
    out = []
    for i in range(0, len(log.t), every):
        if not log.available[i]:
            continue
        major, minor, ang, ok = covariance_ellipse(log.P[i, :2, :2])
        out.append(EllipseRow(float(log.t[i]), float(log.x[i, 0]), float(log.x[i, 1]), major, minor, ang, ok))
    return out
