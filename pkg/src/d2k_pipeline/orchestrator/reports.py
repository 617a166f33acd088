"""Benchmark report files: CSV tables and hand-emitted SVG figures.

The SVG renderers are pure functions of CSV text, so re-rendering from the
same CSV is byte-identical (fixed float formatting, no timestamps, no
external chart library).

CSV schemas:

    runtime.csv    setup,seed,run_index,wall_time_s,cv_loss,val_mae
    mae_trace.csv  setup,seed,run_index,epoch,val_mae
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

SETUP_COLORS = {
    "end_to_end": "#c0392b",
    "finetune_foundation": "#2471a3",
    "finetune_instance_known_hp": "#1e8449",
    "finetune_instance_unknown_hp": "#b7950b",
}
SETUP_ORDER = tuple(SETUP_COLORS)


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def write_runtime_csv(results, path: Path) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["setup", "seed", "run_index", "wall_time_s", "cv_loss",
                     "val_mae"])
    for result in results:
        for i, wall in enumerate(result.run_wall_times):
            writer.writerow([result.setup, result.seed, i, repr(float(wall)),
                             repr(float(result.run_cv_losses[i])),
                             repr(float(result.run_val_maes[i]))])
    text = buf.getvalue()
    Path(path).write_text(text)
    return text


def write_mae_trace_csv(results, path: Path) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["setup", "seed", "run_index", "epoch", "val_mae"])
    for result in results:
        for run_index, trace in enumerate(result.epoch_traces):
            for epoch, val in enumerate(trace):
                writer.writerow([result.setup, result.seed, run_index, epoch,
                                 repr(float(val))])
    text = buf.getvalue()
    Path(path).write_text(text)
    return text


def _read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


class _Svg:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        ]

    def line(self, x1, y1, x2, y2, stroke="#333333", width=1.0, dash=None):
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{_fmt(width)}"{dash_attr}/>')

    def rect(self, x, y, w, h, fill="none", stroke="#333333", width=1.0):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{fill}" stroke="{stroke}" stroke-width="{_fmt(width)}"/>')

    def text(self, x, y, content, size=11, anchor="middle", fill="#222222",
             rotate=None):
        transform = (f' transform="rotate({rotate} {_fmt(x)} {_fmt(y)})"'
                     if rotate is not None else "")
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}" '
            f'fill="{fill}"{transform}>{content}</text>')

    def polyline(self, points, stroke, width=1.5):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_fmt(width)}"/>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _quartiles(values: list[float]):
    data = sorted(values)
    n = len(data)

    def pct(p):
        if n == 1:
            return data[0]
        rank = p * (n - 1)
        lo = int(math.floor(rank))
        hi = min(lo + 1, n - 1)
        frac = rank - lo
        return data[lo] * (1 - frac) + data[hi] * frac

    return data[0], pct(0.25), pct(0.5), pct(0.75), data[-1]


def render_runtime_boxplot(runtime_csv_text: str) -> str:
    """Boxplot of per-run wall times per setup, log-scaled time axis."""
    rows = _read_csv(runtime_csv_text)
    by_setup: dict[str, list[float]] = {}
    for row in rows:
        by_setup.setdefault(row["setup"], []).append(float(row["wall_time_s"]))
    setups = [s for s in SETUP_ORDER if s in by_setup] or sorted(by_setup)

    width, height = 720, 420
    left, right, top, bottom = 70, 20, 30, 110
    plot_w = width - left - right
    plot_h = height - top - bottom
    svg = _Svg(width, height)

    all_values = [v for vals in by_setup.values() for v in vals]
    lo = math.log10(min(all_values) * 0.8)
    hi = math.log10(max(all_values) * 1.25)

    def y_of(value: float) -> float:
        frac = (math.log10(value) - lo) / (hi - lo)
        return top + plot_h * (1 - frac)

    svg.rect(left, top, plot_w, plot_h, stroke="#888888")
    decade = math.ceil(lo)
    while decade <= hi:
        y = y_of(10**decade)
        svg.line(left, y, left + plot_w, y, stroke="#dddddd")
        svg.text(left - 8, y + 4, f"1e{decade}", anchor="end")
        decade += 1
    svg.text(16, top + plot_h / 2, "wall time per run [s] (log scale)",
             rotate=-90, anchor="middle")

    slot = plot_w / max(len(setups), 1)
    for i, setup in enumerate(setups):
        x_mid = left + slot * (i + 0.5)
        vmin, q1, med, q3, vmax = _quartiles(by_setup[setup])
        color = SETUP_COLORS.get(setup, "#555555")
        box_w = slot * 0.4
        svg.line(x_mid, y_of(vmin), x_mid, y_of(q1), stroke=color)
        svg.line(x_mid, y_of(q3), x_mid, y_of(vmax), stroke=color)
        for whisk in (vmin, vmax):
            svg.line(x_mid - box_w / 4, y_of(whisk), x_mid + box_w / 4,
                     y_of(whisk), stroke=color)
        svg.rect(x_mid - box_w / 2, y_of(q3), box_w, y_of(q1) - y_of(q3),
                 fill="none", stroke=color, width=1.5)
        svg.line(x_mid - box_w / 2, y_of(med), x_mid + box_w / 2, y_of(med),
                 stroke=color, width=2.0)
        svg.text(x_mid, top + plot_h + 16, setup.replace("finetune_", "ft_"),
                 size=10, rotate=25)
    svg.text(width / 2, height - 12,
             "runtime distribution per training setup", size=12)
    return svg.render()


def render_mae_trends(mae_csv_text: str, outer_scale: float,
                      sensor_floor: float = 0.15) -> str:
    """Per-setup mean validation-MAE trend; outer axis spans
    [0, theoretical max MAE] with a detail inset scaled to the data."""
    rows = _read_csv(mae_csv_text)
    traces: dict[str, dict[int, list[float]]] = {}
    for row in rows:
        epoch_map = traces.setdefault(row["setup"], {})
        epoch_map.setdefault(int(row["epoch"]), []).append(float(row["val_mae"]))
    setups = [s for s in SETUP_ORDER if s in traces] or sorted(traces)
    means = {
        setup: [sum(vals) / len(vals) for _, vals in sorted(epoch_map.items())]
        for setup, epoch_map in traces.items()
    }

    width, height = 720, 460
    left, right, top, bottom = 70, 20, 30, 150
    plot_w = width - left - right
    plot_h = height - top - bottom
    svg = _Svg(width, height)
    svg.rect(left, top, plot_w, plot_h, stroke="#888888")
    n_epochs = max(len(t) for t in means.values())

    def xy(epoch, value, x0, y0, w, h, vmax, vmin=0.0):
        frac_x = epoch / max(n_epochs - 1, 1)
        frac_y = (value - vmin) / (vmax - vmin) if vmax > vmin else 0.0
        return x0 + w * frac_x, y0 + h * (1 - frac_y)

    # outer panel: full theoretical scale
    svg.text(16, top + plot_h / 2, "validation MAE [N m]", rotate=-90)
    svg.text(left + plot_w / 2, top + plot_h + 24, "epoch", size=11)
    for frac in (0.0, 0.5, 1.0):
        value = outer_scale * frac
        _, y = xy(0, value, left, top, plot_w, plot_h, outer_scale)
        svg.line(left, y, left + plot_w, y, stroke="#dddddd")
        svg.text(left - 8, y + 4, _fmt(value), anchor="end", size=10)
    for setup in setups:
        pts = [xy(e, v, left, top, plot_w, plot_h, outer_scale)
               for e, v in enumerate(means[setup])]
        svg.polyline(pts, SETUP_COLORS.get(setup, "#555555"))

    # inset: scaled to the data's own range
    data_max = max(v for t in means.values() for v in t)
    data_min = min(v for t in means.values() for v in t)
    span = (data_max - data_min) or 1.0
    inset_x, inset_y = left + plot_w * 0.42, top + plot_h * 0.08
    inset_w, inset_h = plot_w * 0.52, plot_h * 0.55
    svg.rect(inset_x, inset_y, inset_w, inset_h, fill="white", stroke="#888888")
    vmin_in = max(0.0, data_min - 0.1 * span)
    vmax_in = data_max + 0.1 * span
    for setup in setups:
        pts = [xy(e, v, inset_x, inset_y, inset_w, inset_h, vmax_in, vmin_in)
               for e, v in enumerate(means[setup])]
        svg.polyline(pts, SETUP_COLORS.get(setup, "#555555"), width=1.2)
    svg.text(inset_x + inset_w / 2, inset_y + 12,
             f"detail: [{_fmt(vmin_in)}, {_fmt(vmax_in)}]", size=9)
    if vmin_in <= sensor_floor <= vmax_in:
        _, y = xy(0, sensor_floor, inset_x, inset_y, inset_w, inset_h,
                  vmax_in, vmin_in)
        svg.line(inset_x, y, inset_x + inset_w, y, stroke="#777777", dash="4,3")
        svg.text(inset_x + inset_w - 4, y - 3, f"sensor floor {_fmt(sensor_floor)}",
                 anchor="end", size=8)

    # legend
    legend_y = top + plot_h + 44
    for i, setup in enumerate(setups):
        y = legend_y + 16 * i
        svg.line(left, y - 4, left + 24, y - 4,
                 stroke=SETUP_COLORS.get(setup, "#555555"), width=2)
        svg.text(left + 30, y, setup, anchor="start", size=10)
    svg.text(width / 2, height - 8, "validation MAE trends across setups "
             f"(outer scale: theoretical max {_fmt(outer_scale)} N m)", size=11)
    return svg.render()


def render_reports(results, outer_scale: float, report_dir: Path) -> dict:
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    runtime_csv = report_dir / "runtime.csv"
    mae_csv = report_dir / "mae_trace.csv"
    runtime_text = write_runtime_csv(results, runtime_csv)
    mae_text = write_mae_trace_csv(results, mae_csv)
    boxplot = report_dir / "runtime_boxplot.svg"
    boxplot.write_text(render_runtime_boxplot(runtime_text))
    trends = report_dir / "validation_mae_trends.svg"
    trends.write_text(render_mae_trends(mae_text, outer_scale))
    return {"runtime_csv": runtime_csv, "mae_trace_csv": mae_csv,
            "runtime_boxplot_svg": boxplot, "mae_trends_svg": trends}
