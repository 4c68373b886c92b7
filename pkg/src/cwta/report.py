"""Deterministic output rendering: step-curve, power and bar-chart SVGs,
numeric formatting, and run manifests.

SVGs are written by hand (no plotting library) so identical inputs give
byte-identical files, which the golden-file tests rely on.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .errors import CwtaError

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


class EmptySeries(CwtaError, ValueError):
    pass


@dataclass(frozen=True)
class Series:
    label: str
    times: Sequence[float]
    values: Sequence[float]
    end: float | None = None  # extend the last step to this time


@dataclass(frozen=True)
class CurvePlotSpec:
    series: tuple[Series, ...]
    x_label: str = "Weeks"
    y_label: str = "Weighted Health Status"
    title: str = ""
    annotation: str = ""
    marker: str = ""  # e.g. "significant"
    y_ref: float | None = None
    step: bool = True
    x_ticks: tuple[float, ...] = field(default=())


# --- numbers -----------------------------------------------------------------


def p_annotation(p: float, method: str = "") -> str:
    """``"p = 0.014"`` (three decimals, ``"p < 0.001"`` below that)."""
    txt = "p < 0.001" if p < 0.001 else f"p = {p:.3f}"
    return f"{txt} ({method})" if method else txt


def significance_label(p: float, alpha: float = 0.05) -> str:
    return f"{p:.4f} ({'significant' if p < alpha else 'NS'})"


# --- svg primitives ----------------------------------------------------------


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def _num(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _tick_label(v: float) -> str:
    return f"{v:g}"


class _Canvas:
    def __init__(self, x_range: tuple[float, float], y_range: tuple[float, float]):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.parts: list[str] = []

    def X(self, x: float) -> float:
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)

    def Y(self, y: float) -> float:
        return H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)

    def add(self, s: str) -> None:
        self.parts.append(s)

    def text(self, x: float, y: float, s: str, anchor: str = "middle", size: int = 12, extra: str = "") -> None:
        self.add(f'<text x="{_num(x)}" y="{_num(y)}" font-size="{size}" text-anchor="{anchor}"{extra}>{escape(s)}</text>')

    def axes(self, x_label: str, y_label: str, x_ticks: Iterable[float], y_ticks: Iterable[float]) -> None:
        x_a, x_b, y_a, y_b = LEFT, W - RIGHT, H - BOTTOM, TOP
        self.add(f'<line x1="{x_a}" y1="{y_a}" x2="{x_b}" y2="{y_a}" stroke="black"/>')
        self.add(f'<line x1="{x_a}" y1="{y_a}" x2="{x_a}" y2="{y_b}" stroke="black"/>')
        for t in x_ticks:
            px = self.X(t)
            self.add(f'<line x1="{_num(px)}" y1="{y_a}" x2="{_num(px)}" y2="{y_a + 5}" stroke="black"/>')
            self.text(px, y_a + 18, _tick_label(t), size=11)
        for t in y_ticks:
            py = self.Y(t)
            self.add(f'<line x1="{x_a - 5}" y1="{_num(py)}" x2="{x_a}" y2="{_num(py)}" stroke="black"/>')
            self.text(x_a - 8, py + 4, _tick_label(t), anchor="end", size=11)
        self.text((x_a + x_b) / 2, H - 15, x_label, size=13)
        cy = (y_a + y_b) / 2
        self.text(18, cy, y_label, size=13, extra=f' transform="rotate(-90 18 {_num(cy)})"')

    def polyline(self, pts: list[tuple[float, float]], color: str, dash: str = "") -> None:
        d = " ".join(f"{_num(self.X(x))},{_num(self.Y(y))}" for x, y in pts)
        style = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="2"{style}/>')

    def legend(self, labels: Sequence[str], colors: Sequence[str]) -> None:
        x, y = W - RIGHT - 170, TOP + 8
        for i, (lab, col) in enumerate(zip(labels, colors)):
            yy = y + 18 * i
            self.add(f'<line x1="{x}" y1="{yy}" x2="{x + 24}" y2="{yy}" stroke="{col}" stroke-width="2"/>')
            self.text(x + 30, yy + 4, lab, anchor="start", size=12)

    def document(self, title: str) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
            f'font-family="Helvetica, Arial, sans-serif">'
        )
        body = [head, f'<rect width="{W}" height="{H}" fill="white"/>']
        if title:
            body.append(f'<text x="{W / 2:g}" y="22" font-size="15" text-anchor="middle">{escape(title)}</text>')
        return "\n".join(body + self.parts + ["</svg>"]) + "\n"


def _step_points(s: Series) -> list[tuple[float, float]]:
    t = [float(x) for x in s.times]
    v = [float(x) for x in s.values]
    pts = [(t[0], v[0])]
    for k in range(1, len(t)):
        pts.append((t[k], v[k - 1]))  # horizontal, then vertical
        pts.append((t[k], v[k]))
    end = t[-1] if s.end is None else max(float(s.end), t[-1])
    if end > pts[-1][0]:
        pts.append((end, v[-1]))
    return pts


def render_step_svg(spec: CurvePlotSpec) -> str:
    """Standalone SVG with one step (or straight) polyline per series."""
    series = [s for s in spec.series if len(s.times)]
    if not series:
        raise EmptySeries("at least one non-empty series is required")
    for s in series:
        if len(s.times) != len(s.values):
            raise ValueError(f"series {s.label!r}: times and values differ in length")
    pts = [_step_points(s) if spec.step else list(zip(map(float, s.times), map(float, s.values))) for s in series]
    xs = [p[0] for ps in pts for p in ps]
    ys = [p[1] for ps in pts for p in ps] + ([spec.y_ref] if spec.y_ref is not None else [])
    x_lo, x_hi = min(0.0, min(xs)), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    pad = 0.05 * (y_hi - y_lo) if y_hi > y_lo else 0.1
    y_lo, y_hi = y_lo - pad, y_hi + pad
    cv = _Canvas((x_lo, x_hi if x_hi > x_lo else x_lo + 1.0), (y_lo, y_hi))
    x_ticks = list(spec.x_ticks) or _nice_ticks(cv.x0, cv.x1)
    cv.axes(spec.x_label, spec.y_label, x_ticks, [t for t in _nice_ticks(y_lo, y_hi) if y_lo <= t <= y_hi])
    if spec.y_ref is not None:
        cv.polyline([(cv.x0, spec.y_ref), (cv.x1, spec.y_ref)], "#888888", dash="4 4")
    colors = [PALETTE[i % len(PALETTE)] for i in range(len(series))]
    for ps, col in zip(pts, colors):
        cv.polyline(ps, col)
    cv.legend([s.label for s in series], colors)
    note = " ".join(x for x in (spec.annotation, spec.marker) if x)
    if note:
        cv.text(LEFT + 10, H - BOTTOM - 10, note, anchor="start", size=13)
    return cv.document(spec.title)


def curve_pair_svg(curves, time_unit: str, title: str, p: float, method: str, alpha: float = 0.05, ends=None) -> str:
    """Two weighted curves with a p-value annotation."""
    ends = ends or [None] * len(curves)
    series = tuple(Series(c.group, c.times, c.values, e) for c, e in zip(curves, ends))
    spec = CurvePlotSpec(
        series=series,
        x_label="Days" if time_unit == "day" else "Weeks",
        title=title,
        annotation=p_annotation(p, method),
        marker="significant" if p < alpha else "NS",
    )
    return render_step_svg(spec)


def power_svg(ss: Sequence[float], curves: dict[str, Sequence[float]], title: str, target: float = 0.8) -> str:
    """Power against sample size, one line per endpoint, with the target line."""
    series = tuple(Series(name, ss, pw) for name, pw in curves.items())
    spec = CurvePlotSpec(series, x_label="Sample size", y_label="Power", title=title, y_ref=target, step=False)
    return render_step_svg(spec)


def bar_svg(labels: Sequence[str], values: Sequence[float], title: str, ref: float = 0.8, y_label: str = "Power") -> str:
    if not len(labels):
        raise EmptySeries("no bars")
    cv = _Canvas((0.0, float(len(labels))), (0.0, 1.0))
    cv.axes("", y_label, [], _nice_ticks(0.0, 1.0))
    bw = (W - LEFT - RIGHT) / len(labels)
    for i, (lab, v) in enumerate(zip(labels, values)):
        x = LEFT + i * bw + 0.15 * bw
        y = cv.Y(float(v))
        cv.add(
            f'<rect x="{_num(x)}" y="{_num(y)}" width="{_num(0.7 * bw)}" height="{_num(H - BOTTOM - y)}" '
            f'fill="{PALETTE[0]}"/>'
        )
        cv.text(x + 0.35 * bw, H - BOTTOM + 18, lab, size=12)
        cv.text(x + 0.35 * bw, y - 5, f"{float(v):.3f}", size=11)
    cv.polyline([(0.0, ref), (float(len(labels)), ref)], "#d62728", dash="6 4")
    return cv.document(title)


# --- tables ------------------------------------------------------------------


def dataset_csv(ds) -> str:
    """One row per state change, plus the initial state and exit of each patient."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["patient_id", "group", "time", "score", "event"])
    for p in ds.patients():
        w.writerow([p.id, p.group, 0, _g(p.initial_score), "start"])
        for c in p.changes:
            w.writerow([p.id, p.group, _g(c.time), _g(c.score), "change"])
        w.writerow([p.id, p.group, _g(p.exit_time), _g(p.final_score), "absorbed" if p.absorbed else "censored"])
    return buf.getvalue()


def _g(x: float) -> str:
    return f"{x:g}"


def result_json(res) -> dict:
    """Logrank result with p-values at 4 decimals."""
    return {
        "U": round(res.U, 6),
        "V": round(res.V, 6),
        "Z": round(res.Z, 6),
        "p_value": round(res.p_two_sided, 4),
        "direction": res.direction,
        "method": res.method,
        "n_permutations": res.n_permutations,
        "exact": res.exact,
        "no_events": res.no_events,
    }


def ss_table_csv(grid, target: float = 0.8) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["hr_eff", "hr_tox", "endpoint", "target", "ss"])
    for (he, ht, ep), v in grid.ss_at_target(target).items():
        w.writerow([f"{he:g}", f"{ht:g}", ep, f"{target:g}", "" if v is None else f"{v:.2f}"])
    return buf.getvalue()


# --- manifests & files -------------------------------------------------------


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest(subcommand: str, config: dict, seed: int | None, inputs: Iterable[str | Path] = ()) -> dict:
    """Reproducibility record; everything except ``timestamp`` is deterministic."""
    return {
        "subcommand": subcommand,
        "tool_version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {str(p): file_digest(p) for p in inputs},
    }


def write_manifest(out: Path, m: dict) -> Path:
    doc = dict(m, timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def safe_name(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)
