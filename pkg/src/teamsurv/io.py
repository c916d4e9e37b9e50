"""File formats: count series, mean series, flag logs and SVG charts.

All node ids in files are 1-based; everything in memory is 0-based.  CSV is
written with ``\\n`` line endings.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptySeries, NegativeCount, NonContiguousTime, ParseError
from .types import (
    DistanceLinear,
    FlagEvent,
    Homogeneous,
    MeanModel,
    NetworkSeries,
    NetworkSnapshot,
    PerEdgeSeries,
)

SERIES_HEADER = ["t", "src", "dst", "count"]
MEANS_HEADER = ["t", "src", "dst", "lambda"]
FLAGS_HEADER = ["t", "statistic", "team_or_leader", "value", "boundary", "flagged"]


def _read_records(path, header: list[str], value_type):
    """Yield (line, t, src, dst, value) from a t,src,dst,<value> CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != header:
            raise ParseError(f"expected header {','.join(header)}", line=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=line)
            try:
                t, src, dst = (int(c) for c in row[:3])
                v = value_type(row[3])
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            if t < 1 or src < 1 or dst < 1:
                raise ParseError("t and node ids are 1-based", line=line)
            yield line, t, src, dst, v


def parse_series(path, n: int | None = None) -> NetworkSeries:
    """Read a ``t,src,dst,count`` file.

    Unlisted pairs are 0 and duplicate (t, src, dst) rows are summed.  The
    node count is ``n`` if given, else the largest id seen.  Every t from 1
    to the last one must appear at least once.
    """
    cells: dict[tuple[int, int, int], int] = {}
    n_seen = 0
    for line, t, src, dst, c in _read_records(path, SERIES_HEADER, int):
        if c < 0:
            raise NegativeCount(f"count {c} is negative", line=line)
        if src == dst and c != 0:
            raise ParseError("self-pair counts must be 0", line=line)
        cells[(t, src, dst)] = cells.get((t, src, dst), 0) + c
        n_seen = max(n_seen, src, dst)
    if not cells:
        raise ParseError("no records", line=1)
    times = sorted({t for t, _, _ in cells})
    if times != list(range(1, times[-1] + 1)):
        missing = sorted(set(range(1, times[-1] + 1)) - set(times))
        raise NonContiguousTime(f"time steps missing from the file: {missing[:5]}")
    n = max(n_seen, 2) if n is None else n
    if n_seen > n:
        raise ParseError(f"node id {n_seen} exceeds n={n}", line=1)
    mats = np.zeros((len(times), n, n), dtype=np.int64)
    for (t, src, dst), c in cells.items():
        mats[t - 1, src - 1, dst - 1] = c
    return NetworkSeries(tuple(NetworkSnapshot(t, mats[t - 1]) for t in times))


def write_series(series: NetworkSeries, path) -> None:
    """Write nonzero counts in (t, src, dst) order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for snap in series:
            for i, j in zip(*np.nonzero(snap.counts)):
                w.writerow([snap.t, i + 1, j + 1, int(snap.counts[i, j])])


def parse_means(path=None, *, lam: float | None = None, dist_linear=None, n: int | None = None) -> MeanModel:
    """Build a MeanModel from exactly one of a file, a constant or ``(a, b)``.

    The file form (``t,src,dst,lambda``) must list every off-diagonal pair of
    every t; diagonal entries default to the mean of their row.
    """
    given = sum(x is not None for x in (path, lam, dist_linear))
    if given != 1:
        raise ParseError("give exactly one of a means file, a constant lambda or a,b", line=0)
    if lam is not None:
        return Homogeneous(float(lam))
    if dist_linear is not None:
        if isinstance(dist_linear, str):
            try:
                parts = [float(x) for x in dist_linear.split(",")]
            except ValueError:
                raise ParseError(f"bad a,b value {dist_linear!r}", line=0) from None
        else:
            parts = [float(x) for x in dist_linear]
        if len(parts) not in (1, 2):
            raise ParseError("expected a or a,b", line=0)
        return DistanceLinear(*parts)
    cells = {}
    n_seen = 0
    for line, t, src, dst, v in _read_records(path, MEANS_HEADER, float):
        if (t, src, dst) in cells:
            raise ParseError(f"duplicate mean for ({t},{src},{dst})", line=line)
        cells[(t, src, dst)] = v
        n_seen = max(n_seen, src, dst)
    if not cells:
        raise ParseError("no records", line=1)
    T = max(t for t, _, _ in cells)
    n = n_seen if n is None else n
    mats = np.full((T, n, n), np.nan)
    for (t, src, dst), v in cells.items():
        mats[t - 1, src - 1, dst - 1] = v
    for m in mats:
        d = np.diag_indices(n)
        off = np.where(np.eye(n, dtype=bool), np.nan, m)
        row_mean = np.nanmean(off, axis=1)
        fill = np.isnan(m[d])
        m[d] = np.where(fill, row_mean, m[d])
    if np.isnan(mats).any():
        t, i, j = (int(x) for x in np.argwhere(np.isnan(mats))[0])
        raise ParseError(f"no mean given for pair ({i + 1},{j + 1}) at t={t + 1}", line=0)
    return PerEdgeSeries(tuple(mats))


def write_means(model: PerEdgeSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEANS_HEADER)
        for t, m in enumerate(model.matrices, start=1):
            n = m.shape[0]
            for i in range(n):
                for j in range(n):
                    if i != j:
                        w.writerow([t, i + 1, j + 1, repr(float(m[i, j]))])


def _team_label(ev: FlagEvent) -> str:
    if ev.leader is not None:
        ids = [ev.leader + 1] + sorted(i + 1 for i in ev.team)
        return "|".join(str(i) for i in ids)
    return "|".join(str(i + 1) for i in sorted(ev.team))


def write_flags(events: Iterable[FlagEvent], path) -> None:
    """Write events sorted by t then node order.

    Teams are ``|``-joined sorted 1-based ids; for dominant-leader events the
    leader comes first, followed by its neighbourhood.
    """
    rows = sorted(events, key=lambda e: (e.t, e.statistic, e.leader if e.leader is not None else -1,
                                         tuple(sorted(e.team))))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLAGS_HEADER)
        for e in rows:
            w.writerow([e.t, e.statistic, _team_label(e), repr(float(e.value)),
                        repr(float(e.boundary)), "1" if e.flagged else "0"])


def read_flags(path, leader_first: Sequence[str] = ("DEWMA", "ADEWMA")) -> list[FlagEvent]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FLAGS_HEADER:
            raise ParseError("bad flags header", line=1)
        for row in reader:
            if len(row) != 6:
                raise ParseError("expected 6 fields", line=reader.line_num)
            t, stat, label, value, bound, flagged = row
            ids = [int(x) - 1 for x in label.split("|")] if label else []
            leader = None
            if stat in leader_first and ids:
                leader, ids = ids[0], ids[1:]
            size = len(ids) + (1 if leader is not None else 0)
            out.append(FlagEvent(int(t), stat, tuple(ids), float(value), float(bound),
                                 flagged == "1", leader, size))
    return out


# ---------------------------------------------------------------------------
# SVG chart

_W, _H = 720, 360
_ML, _MR, _MT, _MB = 60, 20, 20, 45


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def render_chart(points, path, title: str = "", y_label: str = "signal-to-noise excess") -> None:
    """Write a standalone SVG with the upper and lower chart and their limits.

    ``points`` is a sequence of (t, upper, lower, upper_limit, lower_limit);
    any of the last four may be None.  Curves are polylines, limits dashed
    polylines.  Output is byte-identical for identical input.
    """
    pts = [tuple(p) for p in points]
    if not pts:
        raise EmptySeries("nothing to plot")
    ts = [float(p[0]) for p in pts]
    vals = [v for p in pts for v in p[1:] if v is not None and math.isfinite(v)]
    if not vals:
        vals = [0.0]
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    t0, t1 = min(ts), max(ts)
    if t1 == t0:
        t0, t1 = t0 - 1, t1 + 1
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def sx(t):
        return _ML + (t - t0) / (t1 - t0) * pw

    def sy(v):
        return _MT + (hi - v) / (hi - lo) * ph

    def poly(col, **attrs):
        segs, cur = [], []
        for p in pts:
            v = p[col]
            if v is None or not math.isfinite(v):
                if cur:
                    segs.append(cur)
                cur = []
                continue
            cur.append(f"{_fmt(sx(p[0]))},{_fmt(sy(v))}")
        if cur:
            segs.append(cur)
        extra = "".join(f' {k.replace("_", "-")}="{v}"' for k, v in attrs.items())
        return [f'<polyline fill="none" points="{" ".join(s)}"{extra}/>' for s in segs]

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
    ]
    if title:
        out.append(f'<title>{escape(title)}</title>')
    # axes and ticks
    out.append(f'<line x1="{_ML}" y1="{_MT + ph}" x2="{_ML + pw}" y2="{_MT + ph}" stroke="black"/>')
    out.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + ph}" stroke="black"/>')
    for i in range(6):
        tv = t0 + (t1 - t0) * i / 5
        x = sx(tv)
        out.append(f'<text x="{_fmt(x)}" y="{_MT + ph + 16}" font-size="11" '
                   f'text-anchor="middle">{tv:g}</text>')
        yv = lo + (hi - lo) * i / 5
        y = sy(yv)
        out.append(f'<text x="{_ML - 6}" y="{_fmt(y + 4)}" font-size="11" '
                   f'text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 8}" font-size="12" '
               f'text-anchor="middle">t</text>')
    out.append(f'<text x="14" y="{_MT + ph / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {_MT + ph / 2:.1f})">{escape(y_label)}</text>')
    out += poly(1, stroke="#1f4e9a", stroke_width="1.5", **{"class": "upper"})
    out += poly(2, stroke="#2e8b57", stroke_width="1.5", **{"class": "lower"})
    out += poly(3, stroke="#c0392b", stroke_dasharray="6,4", **{"class": "upper-limit"})
    out += poly(4, stroke="#c0392b", stroke_dasharray="6,4", **{"class": "lower-limit"})
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
