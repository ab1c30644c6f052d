"""CSV, JSON, plot-data and SVG output for experiment reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

from dgpirl.harness import ExperimentReport

CSV_COLUMNS = ["method", "world", "demo_count", "seed", "evd_train", "evd_transfer", "objective", "wall_ms"]
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(report: ExperimentReport, path) -> Path:
    path = Path(path)
    rows = [[getattr(c, k) for k in CSV_COLUMNS] for c in report.cells]
    _write(path, _csv_text(CSV_COLUMNS, rows))
    return path


def write_json(report: ExperimentReport, path) -> Path:
    path = Path(path)
    _write(path, json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return path


def read_json(path) -> ExperimentReport:
    with open(path) as fh:
        return ExperimentReport.from_dict(json.load(fh))


def plot_series(report: ExperimentReport, metric: str) -> dict:
    """``{method: [(demo_count, mean, std), ...]}`` for cells with data."""
    series = {}
    for row in report.aggregate():
        mean = row[f"{metric}_mean"]
        if mean is not None:
            series.setdefault(row["method"], []).append((row["demo_count"], mean, row[f"{metric}_std"]))
    return series


def write_plot_data(report: ExperimentReport, metric: str, path) -> Path:
    path = Path(path)
    rows = [
        [method, count, mean, std]
        for method, pts in plot_series(report, metric).items()
        for count, mean, std in pts
    ]
    _write(path, _csv_text(["method", "demo_count", f"{metric}_mean", f"{metric}_std"], rows))
    return path


def svg_chart(series: dict, title: str, ylabel: str = "EVD") -> str:
    """Self-contained line chart: log2 demo count against mean value, one polyline per method."""
    width, height, pad = 480, 320, 50
    pts = [p for s in series.values() for p in s]
    if pts:
        xs = [math.log2(max(p[0], 1)) for p in pts]
        ys = [p[1] for p in pts]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(0.0, min(ys)), max(ys)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(c):
        return pad + (math.log2(max(c, 1)) - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<title>{escape(title)}</title>',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">demonstrations</text>',
        f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    for count in sorted({p[0] for p in pts}):
        out.append(
            f'<text x="{sx(count):.2f}" y="{height - pad + 14}" text-anchor="middle" '
            f'font-size="10">{count}</text>'
        )
    for v in (y0, y1):
        out.append(f'<text x="{pad - 4}" y="{sy(v):.2f}" text-anchor="end" font-size="10">{v:.3g}</text>')
    for i, (method, s) in enumerate(sorted(series.items())):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(c):.2f},{sy(m):.2f}" for c, m, _ in s)
        out.append(
            f'<polyline class="series" data-method="{escape(method)}" points="{coords}" '
            f'fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = pad + 16 * i
        out.append(f'<line x1="{width - pad - 90}" y1="{ly}" x2="{width - pad - 70}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{width - pad - 65}" y="{ly + 4}" font-size="11">{escape(method)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(report: ExperimentReport, out_dir, formats=("csv", "json"), svg: bool = True) -> dict:
    """Write the report in the requested formats; returns ``{kind: path}``.

    Besides ``results.csv`` and ``report.json`` this writes one plot-data CSV
    per metric that has data and, when ``svg`` is set, a matching line chart.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc
    bad = set(formats) - {"csv", "json"}
    if bad:
        raise ValueError(f"unsupported report formats {sorted(bad)}")
    paths = {}
    if "csv" in formats:
        paths["csv"] = write_csv(report, out / "results.csv")
    if "json" in formats:
        paths["json"] = write_json(report, out / "report.json")
    world = report.config.get("world", {}).get("generator", "world")
    for metric in ("evd_train", "evd_transfer"):
        series = plot_series(report, metric)
        if not series:
            continue
        paths[f"plot_{metric}"] = write_plot_data(report, metric, out / f"plot_{metric}.csv")
        if svg:
            label = "training" if metric == "evd_train" else "transfer"
            p = out / f"figure_{metric}.svg"
            _write(p, svg_chart(series, f"{world}: {label} EVD"))
            paths[f"svg_{metric}"] = p
    return paths
