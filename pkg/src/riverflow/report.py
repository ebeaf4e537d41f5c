"""Deterministic report emission: delimited tables and simple SVG plots.

Everything is rendered with fixed layout and fixed float formatting so the
same report always produces byte-identical files (no timestamps, no
library-generated ids).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .analysis import DischargeErrorBins, SensitivityReport

CANVAS_W, CANVAS_H = 720, 480
MARGIN = 56


def _fmt(x) -> str:
    return f"{float(x):.10g}"


def write_table(path, header: list[str], rows) -> None:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(_fmt(v) if isinstance(v, (int, float, np.floating))
                               else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


class SvgCanvas:
    def __init__(self, width=CANVAS_W, height=CANVAS_H):
        self.width, self.height = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        ]

    def line(self, x1, y1, x2, y2, color="#333333", width=1.0):
        self.parts.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'stroke="{color}" stroke-width="{width:.2f}"/>'
        )

    def polyline(self, pts, color="#1f5fa8", width=1.5):
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width:.2f}"/>'
        )

    def rect(self, x, y, w, h, fill="#9ecbff", stroke="#333333"):
        self.parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" '
            f'fill="{fill}" stroke="{stroke}" stroke-width="1.00"/>'
        )

    def circle(self, x, y, r=2.5, color="#c23b22"):
        self.parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" fill="{color}"/>'
        )

    def text(self, x, y, s, size=12, anchor="middle"):
        self.parts.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-family="monospace" '
            f'font-size="{size}" text-anchor="{anchor}">{s}</text>'
        )

    def save(self, path):
        Path(path).write_text("\n".join(self.parts + ["</svg>"]) + "\n")


def _axes(c: SvgCanvas, x_label: str, y_label: str, title: str):
    c.line(MARGIN, CANVAS_H - MARGIN, CANVAS_W - MARGIN, CANVAS_H - MARGIN)
    c.line(MARGIN, MARGIN, MARGIN, CANVAS_H - MARGIN)
    c.text(CANVAS_W / 2, CANVAS_H - 12, x_label)
    c.text(14, CANVAS_H / 2, y_label, anchor="middle")
    c.text(CANVAS_W / 2, 24, title, size=14)


def _scale(vmin, vmax):
    if vmax <= vmin:
        vmax = vmin + 1.0
    span_x = CANVAS_W - 2 * MARGIN
    span_y = CANVAS_H - 2 * MARGIN
    return vmin, vmax, span_x, span_y


def line_plot(path, xs, series: dict, x_label: str, y_label: str, title: str):
    """Multi-series line chart with a fixed palette and legend."""
    palette = ("#1f5fa8", "#c23b22", "#2e7d32", "#7b1fa2", "#996600")
    xs = np.asarray(xs, dtype=np.float64)
    all_y = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()])
    x0, x1, sx, sy = _scale(float(xs.min()), float(xs.max()))
    y0, y1, _, _ = _scale(float(all_y.min()), float(all_y.max()))
    c = SvgCanvas()
    _axes(c, x_label, y_label, title)

    def px(x):
        return MARGIN + (x - x0) / (x1 - x0) * sx

    def py(y):
        return CANVAS_H - MARGIN - (y - y0) / (y1 - y0) * sy

    for k, (name, ys) in enumerate(sorted(series.items())):
        color = palette[k % len(palette)]
        pts = [(px(x), py(y)) for x, y in zip(xs, np.asarray(ys, dtype=np.float64))]
        c.polyline(pts, color=color)
        c.text(CANVAS_W - MARGIN, MARGIN + 16 * k + 8, name, anchor="end")
        c.line(CANVAS_W - MARGIN - 120, MARGIN + 16 * k + 4,
               CANVAS_W - MARGIN - 100, MARGIN + 16 * k + 4, color=color, width=2)
    for val, x in ((y0, None), (y1, None)):
        c.text(MARGIN - 6, py(val) + 4, _fmt(val), size=10, anchor="end")
    c.text(px(x0), CANVAS_H - MARGIN + 16, _fmt(x0), size=10)
    c.text(px(x1), CANVAS_H - MARGIN + 16, _fmt(x1), size=10)
    c.save(path)


def box_plot(path, bins: DischargeErrorBins, y_label: str, title: str):
    stats = [b for b in bins.bins]
    vals = [v for b in stats if b.count for v in
            (b.whisker_lo, b.whisker_hi, *b.outliers)]
    if not vals:
        raise ValueError("no populated bins to plot")
    y0, y1, sx, sy = _scale(min(vals), max(vals))
    c = SvgCanvas()
    _axes(c, "discharge [m3/s]", y_label, title)
    n = len(stats)
    slot = sx / n

    def py(y):
        return CANVAS_H - MARGIN - (y - y0) / (y1 - y0) * sy

    for i, b in enumerate(stats):
        cx = MARGIN + slot * (i + 0.5)
        c.text(cx, CANVAS_H - MARGIN + 16,
               f"{_fmt(b.q_lo)}-{_fmt(b.q_hi)}", size=9)
        if not b.count:
            c.text(cx, CANVAS_H / 2, "empty", size=10)
            continue
        half = slot * 0.28
        c.rect(cx - half, py(b.q3), 2 * half, py(b.q1) - py(b.q3))
        c.line(cx - half, py(b.median), cx + half, py(b.median), width=2)
        c.line(cx, py(b.q3), cx, py(b.whisker_hi))
        c.line(cx, py(b.q1), cx, py(b.whisker_lo))
        c.line(cx - half / 2, py(b.whisker_hi), cx + half / 2, py(b.whisker_hi))
        c.line(cx - half / 2, py(b.whisker_lo), cx + half / 2, py(b.whisker_lo))
        for v in b.outliers:
            c.circle(cx, py(v))
    c.text(MARGIN - 6, py(y0) + 4, _fmt(y0), size=10, anchor="end")
    c.text(MARGIN - 6, py(y1) + 4, _fmt(y1), size=10, anchor="end")
    c.save(path)


_HEAT_STOPS = (
    (0.00, (68, 1, 84)),
    (0.25, (59, 82, 139)),
    (0.50, (33, 145, 140)),
    (0.75, (94, 201, 98)),
    (1.00, (253, 231, 37)),
)


def _heat_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(_HEAT_STOPS, _HEAT_STOPS[1:]):
        if t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = tuple(round(a + f * (b - a)) for a, b in zip(c0, c1))
            return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"
    return "#fde725"


def heatmap(path, values: np.ndarray, title: str):
    """Field heatmap in index space with a value-range legend.

    A constant field renders in a single color with a degenerate legend
    range.
    """
    vals = np.asarray(values, dtype=np.float64)
    vmin, vmax = float(vals.min()), float(vals.max())
    span = vmax - vmin
    ny, nx = vals.shape
    c = SvgCanvas()
    c.text(CANVAS_W / 2, 24, title, size=14)
    plot_w, plot_h = CANVAS_W - 2 * MARGIN, CANVAS_H - 2 * MARGIN - 20
    cell_w, cell_h = plot_w / nx, plot_h / ny
    for i in range(ny):
        for j in range(nx):
            t = 0.5 if span == 0 else (vals[i, j] - vmin) / span
            c.parts.append(
                f'<rect x="{MARGIN + j * cell_w:.2f}" y="{MARGIN + i * cell_h:.2f}" '
                f'width="{cell_w + 0.5:.2f}" height="{cell_h + 0.5:.2f}" '
                f'fill="{_heat_color(t)}"/>'
            )
    c.text(MARGIN, CANVAS_H - 18, f"min {_fmt(vmin)}", size=11, anchor="start")
    c.text(CANVAS_W - MARGIN, CANVAS_H - 18, f"max {_fmt(vmax)}", size=11, anchor="end")
    c.save(path)


def emit_sensitivity(report: SensitivityReport, out_dir) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / f"sensitivity_{report.tag}.tsv"
    write_table(table, ["component", "sigma", "delta_rmse"],
                [(i + 1, s, d) for i, (s, d) in
                 enumerate(zip(report.stats.sigmas, report.delta_rmse))])
    plot = out / f"sensitivity_{report.tag}.svg"
    line_plot(plot, np.arange(1, report.delta_rmse.size + 1),
              {report.tag: report.delta_rmse},
              "latent component", "delta RMSE [m/s]",
              f"latent sensitivity ({report.tag})")
    return [str(table), str(plot)]


def emit_error_bins(bins: DischargeErrorBins, out_dir) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / f"error_bins_{bins.tag}.tsv"
    rows = []
    for b in bins.bins:
        rows.append((b.q_lo, b.q_hi, b.count, b.q1, b.median, b.q3,
                     b.whisker_lo, b.whisker_hi, len(b.outliers)))
    write_table(table, ["q_lo", "q_hi", "count", "q1", "median", "q3",
                        "whisker_lo", "whisker_hi", "n_outliers"], rows)
    plot = out / f"error_bins_{bins.tag}.svg"
    box_plot(plot, bins, "per-sample RMSE [m/s]", f"error vs discharge ({bins.tag})")
    return [str(table), str(plot)]


def emit_partial_eval(results: dict[int, float], out_dir, tag: str = "test") -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / f"partial_eval_{tag}.tsv"
    items = sorted(results.items())
    write_table(table, ["measured_sections", "rmse"], items)
    plot = out / f"partial_eval_{tag}.svg"
    line_plot(plot, [s for s, _ in items], {tag: [r for _, r in items]},
              "measured cross sections", "RMSE [m/s]",
              f"partial-measurement error ({tag})")
    return [str(table), str(plot)]


def emit_field_heatmap(values: np.ndarray, out_dir, name: str) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plot = out / f"{name}.svg"
    heatmap(plot, values, name)
    return [str(plot)]
