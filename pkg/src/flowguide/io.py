"""CSV files and standalone SVG charts."""

from __future__ import annotations

import csv
import math
from xml.sax.saxutils import escape

import numpy as np

METRIC_COLUMNS = ("iter", "loss_d", "loss_sk", "sk_weight", "nmi", "ari", "frechet")
SAMPLE_COLUMNS = ("x", "y", "prototype")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_metrics_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])


def read_csv_columns(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) for r in rows], dtype=np.float64)
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: bad value in column {name!r}") from exc
    return cols


def write_samples_csv(path, points: np.ndarray, labels) -> None:
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for (x, y), lab in zip(points, labels):
            w.writerow([repr(float(x)), repr(float(y)), str(int(lab))])


def read_samples_csv(path) -> tuple[np.ndarray, np.ndarray]:
    cols = read_csv_columns(path)
    missing = [c for c in SAMPLE_COLUMNS[:2] if c not in cols]
    if missing:
        raise ValueError(f"{path}: missing column(s) {missing}")
    points = np.stack([cols["x"], cols["y"]], axis=1)
    labels = cols["prototype"].astype(np.int64) if "prototype" in cols else np.full(len(points), -1)
    return points, labels


def write_labels(path, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label\n")
        for lab in np.asarray(labels, dtype=np.int64):
            fh.write(f"{int(lab)}\n")


def read_labels(path) -> np.ndarray:
    cols = read_csv_columns(path)
    if "label" not in cols:
        raise ValueError(f"{path}: missing 'label' column")
    return cols["label"].astype(np.int64)


# -- SVG -----------------------------------------------------------------------

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
SIZE = 480
PAD = 40


def label_color(label: int) -> str:
    if label < 0:
        return "#444444"
    if label < len(PALETTE):
        return PALETTE[label]
    # golden-angle hues beyond the palette
    hue = (label * 137.508) % 360.0
    return f"hsl({hue:.1f},65%,45%)"


def _bounds(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return 0.0, 1.0
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _axes(title: str) -> list[str]:
    inner = SIZE - 2 * PAD
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">',
        f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>',
        f'<rect x="{PAD}" y="{PAD}" width="{inner}" height="{inner}" fill="none" stroke="black"/>',
        f'<text x="{SIZE // 2}" y="{PAD // 2 + 5}" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
    ]


def emit_scatter_svg(points, labels, path, title: str = "samples") -> None:
    """Scatter plot with one fill colour per label."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if not np.all(np.isfinite(points)):
        raise ValueError("scatter points must be finite")
    x0, x1 = _bounds(points[:, 0])
    y0, y1 = _bounds(points[:, 1])
    inner = SIZE - 2 * PAD
    lines = _axes(title)
    for (x, y), lab in zip(points, labels):
        px = PAD + (x - x0) / (x1 - x0) * inner
        py = SIZE - PAD - (y - y0) / (y1 - y0) * inner
        lines.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="1.5" fill="{label_color(int(lab))}"/>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_line_chart_svg(csv_path, columns, path) -> None:
    """Line chart of metric-log columns against ``iter``; NaN points are skipped."""
    cols = read_csv_columns(csv_path)
    missing = [c for c in list(columns) + ["iter"] if c not in cols]
    if missing:
        raise ValueError(f"{csv_path}: missing column(s) {missing}")
    xs = cols["iter"]
    ys = np.concatenate([cols[c][np.isfinite(cols[c])] for c in columns]) if columns else np.array([])
    x0, x1 = _bounds(xs)
    y0, y1 = _bounds(ys)
    inner = SIZE - 2 * PAD
    lines = _axes(", ".join(columns))
    for i, name in enumerate(columns):
        pts = [
            f"{PAD + (x - x0) / (x1 - x0) * inner:.2f},{SIZE - PAD - (y - y0) / (y1 - y0) * inner:.2f}"
            for x, y in zip(xs, cols[name])
            if math.isfinite(y)
        ]
        color = label_color(i)
        if pts:
            lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        lines.append(
            f'<text x="{PAD + 8}" y="{PAD + 16 + 14 * i}" font-family="sans-serif" font-size="11" fill="{color}">{escape(name)}</text>'
        )
    lines.append(
        f'<text x="{PAD}" y="{SIZE - PAD + 14}" font-family="sans-serif" font-size="10">{x0:g}</text>'
    )
    lines.append(
        f'<text x="{SIZE - PAD}" y="{SIZE - PAD + 14}" text-anchor="end" font-family="sans-serif" font-size="10">{x1:g}</text>'
    )
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
