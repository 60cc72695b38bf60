"""Aggregate reporting: CSV table plus SVG panels (bar chart for reach rates,
box plots for interventions, latency, tokens, and normalized distance)."""

from __future__ import annotations

import statistics
from pathlib import Path
from xml.sax.saxutils import escape

from .batch import BatchResult, group_key, summarize, write_summary_csv

PANEL_W = 320
PANEL_H = 260
MARGIN = 48


def _grouped_values(results: list[BatchResult], extract) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    for res in results:
        if res.metrics is None:
            continue
        out.setdefault(group_key(res), []).extend(extract(res.metrics))
    return out


def _box_stats(values: list[float]):
    if not values:
        return None
    xs = sorted(values)
    med = statistics.median(xs)
    half = len(xs) // 2
    q1 = statistics.median(xs[:half]) if half else xs[0]
    q3 = statistics.median(xs[-half:]) if half else xs[-1]
    return xs[0], q1, med, q3, xs[-1], statistics.fmean(xs)


def _panel(title: str, groups: dict[str, list[float]], x0: int,
           bars: bool = False) -> list[str]:
    parts = [
        f'<text x="{x0 + PANEL_W / 2}" y="20" text-anchor="middle" '
        f'font-size="13" font-family="sans-serif">{escape(title)}</text>'
    ]
    names = list(groups)
    if not names:
        return parts
    top = max((max(vs) for vs in groups.values() if vs), default=1.0)
    top = top if top > 0 else 1.0
    plot_h = PANEL_H - 2 * MARGIN
    base_y = PANEL_H - MARGIN

    def sy(v):
        return base_y - (v / top) * plot_h

    parts.append(
        f'<line x1="{x0 + 30}" y1="{base_y}" x2="{x0 + PANEL_W - 10}" '
        f'y2="{base_y}" stroke="black"/>')
    parts.append(
        f'<line x1="{x0 + 30}" y1="{base_y}" x2="{x0 + 30}" '
        f'y2="{MARGIN}" stroke="black"/>')
    parts.append(
        f'<text x="{x0 + 26}" y="{MARGIN + 4}" text-anchor="end" '
        f'font-size="9" font-family="sans-serif">{top:.3g}</text>')
    slot = (PANEL_W - 50) / len(names)
    for k, name in enumerate(names):
        cx = x0 + 35 + slot * (k + 0.5)
        values = groups[name]
        stats = _box_stats(values)
        if stats is None:
            continue
        lo, q1, med, q3, hi, mean = stats
        if bars:
            parts.append(
                f'<rect x="{cx - slot * 0.3:.1f}" y="{sy(mean):.1f}" '
                f'width="{slot * 0.6:.1f}" height="{base_y - sy(mean):.1f}" '
                f'fill="#4878cf"/>')
        else:
            parts.append(
                f'<line x1="{cx:.1f}" y1="{sy(lo):.1f}" x2="{cx:.1f}" '
                f'y2="{sy(hi):.1f}" stroke="black"/>')
            parts.append(
                f'<rect x="{cx - slot * 0.25:.1f}" y="{sy(q3):.1f}" '
                f'width="{slot * 0.5:.1f}" height="{max(sy(q1) - sy(q3), 0.5):.1f}" '
                f'fill="#9ecae9" stroke="black"/>')
            parts.append(
                f'<line x1="{cx - slot * 0.25:.1f}" y1="{sy(med):.1f}" '
                f'x2="{cx + slot * 0.25:.1f}" y2="{sy(med):.1f}" '
                f'stroke="#d9541e" stroke-width="2"/>')
            parts.append(
                f'<circle cx="{cx:.1f}" cy="{sy(mean):.1f}" r="2.5" '
                f'fill="#2ca02c"/>')
        label = escape(name if len(name) <= 16 else name[:15] + "~")
        parts.append(
            f'<text x="{cx:.1f}" y="{base_y + 14}" text-anchor="middle" '
            f'font-size="8" font-family="sans-serif" '
            f'transform="rotate(25 {cx:.1f} {base_y + 14})">{label}</text>')
    return parts


def render_panels_svg(results: list[BatchResult]) -> str:
    panels = [
        ("All-reach rate / agent ratio", True,
         _grouped_values(results, lambda m: [m.reach_ratio])),
        ("Interventions per run", False,
         _grouped_values(results, lambda m: [float(m.interventions)])),
        ("Planner latency (s)", False,
         _grouped_values(results, lambda m: list(m.latencies))),
        ("Tokens per intervention", False,
         _grouped_values(results, lambda m: [
             float(i + o) for i, o in zip(m.input_tokens, m.output_tokens)])),
        ("Normalized distance", False,
         _grouped_values(results, lambda m: [m.normalized_distance])),
    ]
    width = PANEL_W * len(panels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}">',
        f'<rect width="{width}" height="{PANEL_H}" fill="white"/>',
    ]
    for k, (title, bars, groups) in enumerate(panels):
        parts.extend(_panel(title, groups, k * PANEL_W, bars=bars))
    parts.append("</svg>")
    return "\n".join(parts)


def emit_report(results: list[BatchResult], out_dir,
                basename: str = "summary", svg: bool = True) -> list[Path]:
    """Write the aggregate CSV and (optionally) the SVG panel figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = summarize(results)
    paths = [write_summary_csv(rows, out_dir / f"{basename}.csv")]
    if svg:
        svg_path = out_dir / f"{basename}.svg"
        svg_path.write_text(render_panels_svg(results))
        paths.append(svg_path)
    return paths
