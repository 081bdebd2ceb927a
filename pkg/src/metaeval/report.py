"""Forest plots (standalone SVG) and markdown tables for pooled results.

The SVG is written by hand rather than through a plotting library so the
output is byte-stable: fixed layout constants, fixed-precision numbers,
no timestamps or generated ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .errors import RenderError
from .meta import Interval, PooledResult

ROW_HEIGHT = 60.0
DEFAULT_WIDTH = 960.0
MARGIN = 20.0
TOP = 60.0
NAME_WIDTH = 160.0
ANNOTATION_WIDTH = 120.0
EFFECT_WIDTH = 60.0
CI_WIDTH = 130.0
WEIGHT_WIDTH = 60.0
GAP = 12.0
DIAMOND_HALF = 12.0  # half-diagonal of the heaviest task's diamond
SUMMARY_HALF_HEIGHT = 14.0
CAP_HALF = 5.0
FONT = "DejaVu Sans, Helvetica, Arial, sans-serif"
TASK_FILL = "#2b5d8a"
SUMMARY_FILL = "#f0b429"
INK = "#222222"


@dataclass(frozen=True)
class ForestRow:
    display_name: str
    value: float
    ci: Interval
    weight_share: float
    metric_annotation: str | None = None
    judged_annotation: str | None = None


@dataclass(frozen=True)
class ForestPlotSpec:
    title: str
    x_axis_label: str
    rows: tuple[ForestRow, ...]
    summary: ForestRow
    width: float = DEFAULT_WIDTH
    height: float | None = None
    metric_header: str = ""
    judged_header: str = ""
    alpha: float = 0.05
    decimals: int = 3

    @property
    def canvas_height(self) -> float:
        if self.height is not None:
            return self.height
        return ROW_HEIGHT * (len(self.rows) + 1) + 120.0

    @property
    def has_metric_column(self) -> bool:
        return any(r.metric_annotation for r in self.rows)

    @property
    def has_judged_column(self) -> bool:
        return any(r.judged_annotation for r in self.rows)


def build_forest_spec(
    result: PooledResult,
    *,
    display_names: Mapping[str, str] | None = None,
    title: str = "",
    x_axis_label: str = "",
    metric_annotations: Mapping[str, str] | None = None,
    judged_annotations: Mapping[str, str] | None = None,
    metric_header: str = "",
    judged_header: str = "",
    summary_label: str = "Summary effect (RE)",
    width: float = DEFAULT_WIDTH,
) -> ForestPlotSpec:
    names = display_names or {}
    metric_annotations = metric_annotations or {}
    judged_annotations = judged_annotations or {}
    rows = tuple(
        ForestRow(
            display_name=names.get(t.task_id, t.task_id),
            value=t.display_value,
            ci=t.ci,
            weight_share=t.weight_share,
            metric_annotation=metric_annotations.get(t.task_id),
            judged_annotation=judged_annotations.get(t.task_id),
        )
        for t in result.per_task
    )
    s = result.summary
    summary = ForestRow(summary_label, s.display_value, s.ci, 1.0)
    return ForestPlotSpec(
        title=title,
        x_axis_label=x_axis_label,
        rows=rows,
        summary=summary,
        width=width,
        metric_header=metric_header,
        judged_header=judged_header,
        alpha=result.alpha,
    )


def _num(x: float) -> str:
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _fixed(x: float, decimals: int) -> str:
    s = f"{x:.{decimals}f}"
    if s.startswith("-") and float(s) == 0:
        s = s[1:]
    return s


def _nice_step(span: float) -> tuple[float, int]:
    """Tick step near span/5 from the 1-2-2.5-5 series, plus label decimals."""
    raw = span / 5.0
    e = math.floor(math.log10(raw))
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= m * 10.0**e:
            break
    if m == 10.0:
        m, e = 1.0, e + 1
    return m * 10.0**e, max(0, -e) + (1 if m == 2.5 else 0)


def x_range(spec: ForestPlotSpec) -> tuple[float, float]:
    """CI hull including 0, padded by 5% of its span on each side."""
    rows = (*spec.rows, spec.summary)
    lo = min(0.0, *(r.ci.lower for r in rows), *(r.value for r in rows))
    hi = max(0.0, *(r.ci.upper for r in rows), *(r.value for r in rows))
    span = hi - lo
    if span == 0:
        return -1.0, 1.0
    pad = 0.05 * span
    return lo - pad, hi + pad


@dataclass(frozen=True)
class _Layout:
    plot_left: float
    plot_right: float
    lo: float
    hi: float
    metric_x: float | None
    judged_x: float | None
    effect_x: float
    ci_x: float
    weight_x: float

    def x(self, value: float) -> float:
        return self.plot_left + (value - self.lo) / (self.hi - self.lo) * (self.plot_right - self.plot_left)


def _layout(spec: ForestPlotSpec) -> _Layout:
    left = MARGIN + NAME_WIDTH
    metric_x = judged_x = None
    if spec.has_judged_column:
        judged_x = left + ANNOTATION_WIDTH
        left += ANNOTATION_WIDTH
    if spec.has_metric_column:
        metric_x = left + ANNOTATION_WIDTH
        left += ANNOTATION_WIDTH
    plot_left = left + GAP
    weight_x = spec.width - MARGIN
    ci_x = weight_x - WEIGHT_WIDTH
    effect_x = ci_x - CI_WIDTH
    plot_right = effect_x - EFFECT_WIDTH - GAP
    if plot_right - plot_left < 100:
        raise RenderError(f"canvas width {spec.width} leaves no room for the plot area")
    lo, hi = x_range(spec)
    return _Layout(plot_left, plot_right, lo, hi, metric_x, judged_x, effect_x, ci_x, weight_x)


def _text(x: float, y: float, content: str, *, anchor: str = "start", size: int = 12,
          weight: str | None = None, cls: str | None = None) -> str:
    attrs = f'x="{_num(x)}" y="{_num(y)}" font-size="{size}" text-anchor="{anchor}"'
    if weight:
        attrs += f' font-weight="{weight}"'
    if cls:
        attrs += f' class="{cls}"'
    return f"<text {attrs}>{escape(content)}</text>"


def _polygon(points: Sequence[tuple[float, float]], cls: str, fill: str, stroke: str) -> str:
    pts = " ".join(f"{_num(px)},{_num(py)}" for px, py in points)
    return f'<polygon class="{cls}" points="{pts}" fill="{fill}" stroke="{stroke}" stroke-width="1"/>'


def _line(x1: float, y1: float, x2: float, y2: float, cls: str, extra: str = "") -> str:
    return (
        f'<line class="{cls}" x1="{_num(x1)}" y1="{_num(y1)}" x2="{_num(x2)}" y2="{_num(y2)}" '
        f'stroke="{INK}" stroke-width="1"{extra}/>'
    )


def _check_finite(spec: ForestPlotSpec) -> None:
    if not spec.rows:
        raise RenderError("a forest plot needs at least one row")
    for r in (*spec.rows, spec.summary):
        numbers = (r.value, r.ci.lower, r.ci.upper, r.weight_share)
        if not all(math.isfinite(v) for v in numbers):
            raise RenderError(f"row {r.display_name!r} has non-finite geometry")
        if r.weight_share < 0:
            raise RenderError(f"row {r.display_name!r} has a negative weight")
    if not (math.isfinite(spec.width) and math.isfinite(spec.canvas_height)):
        raise RenderError("canvas size must be finite")


def percent_labels(shares: Sequence[float], decimals: int = 1) -> list[str]:
    """Format shares as percentages that add up to exactly 100.

    Largest-remainder rounding; shares are assumed to sum to 1.
    """
    scale = 10**decimals
    raw = [s * 100 * scale for s in shares]
    floors = [math.floor(v) for v in raw]
    missing = int(round(100 * scale * math.fsum(shares))) - sum(floors)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - floors[i]), i))
    for i in order[: max(0, missing)]:
        floors[i] += 1
    return [f"{v / scale:.{decimals}f}%" for v in floors]


def render_forest_svg(spec: ForestPlotSpec) -> bytes:
    """Render a forest plot as a standalone SVG 1.1 document (UTF-8)."""
    _check_finite(spec)
    lay = _layout(spec)
    width, height = spec.width, spec.canvas_height
    n_rows = len(spec.rows) + 1
    d = spec.decimals
    ci_level = f"{_fixed((1 - spec.alpha) * 100, 0 if ((1 - spec.alpha) * 100).is_integer() else 1)}% CI"

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_num(width)}" '
        f'height="{_num(height)}" viewBox="0 0 {_num(width)} {_num(height)}" '
        f'font-family="{FONT}" fill="{INK}">',
        f'<rect x="0" y="0" width="{_num(width)}" height="{_num(height)}" fill="#ffffff"/>',
    ]
    if spec.title:
        out.append(_text(width / 2, 26, spec.title, anchor="middle", size=16, weight="bold", cls="title"))

    header_y = TOP - 8
    out.append('<g class="headers" font-weight="bold">')
    out.append(_text(MARGIN, header_y, "Task", size=12))
    if lay.judged_x is not None:
        out.append(_text(lay.judged_x - GAP, header_y, spec.judged_header, anchor="end"))
    if lay.metric_x is not None:
        out.append(_text(lay.metric_x - GAP, header_y, spec.metric_header, anchor="end"))
    out.append(_text(lay.effect_x, header_y, "Effect", anchor="end"))
    out.append(_text(lay.ci_x, header_y, ci_level, anchor="end"))
    out.append(_text(lay.weight_x, header_y, "Weight", anchor="end"))
    out.append("</g>")

    max_share = max(r.weight_share for r in spec.rows)
    zero_x = lay.x(0.0)
    rows_bottom = TOP + ROW_HEIGHT * n_rows

    for i, row in enumerate(spec.rows):
        cy = TOP + ROW_HEIGHT * i + ROW_HEIGHT / 2
        out.append(f'<g class="row" data-index="{i}">')
        out.append(_text(MARGIN, cy + 4, row.display_name, cls="name"))
        if lay.judged_x is not None and row.judged_annotation:
            out.append(_text(lay.judged_x - GAP, cy + 4, row.judged_annotation, anchor="end", cls="judged"))
        if lay.metric_x is not None and row.metric_annotation:
            out.append(_text(lay.metric_x - GAP, cy + 4, row.metric_annotation, anchor="end", cls="metric"))
        x_lo, x_hi, cx = lay.x(row.ci.lower), lay.x(row.ci.upper), lay.x(row.value)
        out.append(_line(x_lo, cy, x_hi, cy, "whisker"))
        out.append(_line(x_lo, cy - CAP_HALF, x_lo, cy + CAP_HALF, "cap"))
        out.append(_line(x_hi, cy - CAP_HALF, x_hi, cy + CAP_HALF, "cap"))
        # Area scales with weight, so each half-diagonal scales with its square root.
        half = DIAMOND_HALF * math.sqrt(row.weight_share / max_share) if max_share > 0 else 0.0
        out.append(_polygon(
            [(cx - half, cy), (cx, cy - half), (cx + half, cy), (cx, cy + half)],
            "diamond", TASK_FILL, TASK_FILL,
        ))
        out.append(_text(lay.effect_x, cy + 4, _fixed(row.value, d), anchor="end", cls="effect"))
        out.append(_text(lay.ci_x, cy + 4, f"[{_fixed(row.ci.lower, d)}, {_fixed(row.ci.upper, d)}]",
                         anchor="end", cls="ci"))
        out.append("</g>")

    weights = percent_labels([r.weight_share for r in spec.rows])
    out.append('<g class="weights">')
    for i, label in enumerate(weights):
        cy = TOP + ROW_HEIGHT * i + ROW_HEIGHT / 2
        out.append(_text(lay.weight_x, cy + 4, label, anchor="end", cls="weight"))
    out.append("</g>")

    sep_y = TOP + ROW_HEIGHT * len(spec.rows)
    out.append(_line(MARGIN, sep_y, width - MARGIN, sep_y, "separator", ' stroke-opacity="0.4"'))
    s = spec.summary
    cy = sep_y + ROW_HEIGHT / 2
    out.append('<g class="summary">')
    out.append(_text(MARGIN, cy + 4, s.display_name, weight="bold", cls="name"))
    sx_lo, sx_hi, scx = lay.x(s.ci.lower), lay.x(s.ci.upper), lay.x(s.value)
    out.append(_polygon(
        [(sx_lo, cy), (scx, cy - SUMMARY_HALF_HEIGHT), (sx_hi, cy), (scx, cy + SUMMARY_HALF_HEIGHT)],
        "summary-diamond", SUMMARY_FILL, INK,
    ))
    out.append(_text(lay.effect_x, cy + 4, _fixed(s.value, d), anchor="end", weight="bold", cls="effect"))
    out.append(_text(lay.ci_x, cy + 4, f"[{_fixed(s.ci.lower, d)}, {_fixed(s.ci.upper, d)}]",
                     anchor="end", weight="bold", cls="ci"))
    out.append(_text(lay.weight_x, cy + 4, "100.0%", anchor="end", weight="bold", cls="weight"))
    out.append("</g>")

    out.append(_line(zero_x, TOP, zero_x, rows_bottom, "zero-line", ' stroke-dasharray="2,3"'))

    axis_y = rows_bottom + 4
    out.append('<g class="axis">')
    out.append(_line(lay.plot_left, axis_y, lay.plot_right, axis_y, "axis-line"))
    step, step_decimals = _nice_step(lay.hi - lay.lo)
    for j in range(math.ceil(lay.lo / step), math.floor(lay.hi / step) + 1):
        tick = j * step
        tx = lay.x(tick)
        out.append(_line(tx, axis_y, tx, axis_y + 4, "tick"))
        out.append(_text(tx, axis_y + 16, _fixed(tick, step_decimals), anchor="middle", size=10, cls="tick-label"))
    if spec.x_axis_label:
        out.append(_text((lay.plot_left + lay.plot_right) / 2, axis_y + 36, spec.x_axis_label,
                         anchor="middle", cls="axis-label"))
    out.append("</g>")
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def _cell(text: str) -> str:
    return text.replace("|", "\\|")


def render_table(result: PooledResult, display_names: Mapping[str, str] | None = None,
                 summary_label: str = "Summary (random effects)") -> str:
    """Markdown table: task, effect, CI, weight; summary row last.

    CORR results print back-transformed correlations.
    """
    names = display_names or {}
    level = (1 - result.alpha) * 100
    level_txt = f"{level:.0f}" if abs(level - round(level)) < 1e-9 else f"{level:.1f}"
    weights = percent_labels(result.weight_shares)

    def interval(ci: Interval) -> str:
        return f"[{_fixed(ci.lower, 4)}, {_fixed(ci.upper, 4)}]"

    lines = [
        f"| Task | Effect | {level_txt}% CI | Weight |",
        "| --- | ---: | ---: | ---: |",
    ]
    for t, w in zip(result.per_task, weights):
        name = _cell(names.get(t.task_id, t.task_id))
        lines.append(f"| {name} | {_fixed(t.display_value, 4)} | {interval(t.ci)} | {w} |")
    s = result.summary
    lines.append(f"| **{summary_label}** | {_fixed(s.display_value, 4)} | {interval(s.ci)} | 100.0% |")
    lines.append("")
    lines.append(f"Summary: {_fixed(s.display_value, 4)} {interval(s.ci)} 100.0%")
    lines.append(
        f"Heterogeneity: tau^2 = {_fixed(result.tau_squared, 4)}, Q = {_fixed(result.q, 4)}, "
        f"df = {result.df}, k = {result.k}, family = {result.family}"
    )
    return "\n".join(lines) + "\n"
