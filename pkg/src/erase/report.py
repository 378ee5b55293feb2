"""CSV tables and SVG figures for a metrics run.

Numbers are written with a fixed format so that identical runs produce
byte-identical files. SVGs are built with ElementTree and are plain,
well-formed XML with no external references.
"""

from __future__ import annotations

import csv
import io
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull

from .metrics import BandPowerSummary, FdCorrelation, RegionSummary
from .montage import Montage


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.10g}"


def _write(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    Path(path).write_text(buf.getvalue())


def _read(path: Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing metrics file {path}")
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_band_power_csv(path, summaries: Mapping[str, BandPowerSummary], montage: Montage) -> None:
    rows = []
    for band in sorted(summaries):
        s = summaries[band]
        for j, label in enumerate(s.labels):
            rows.append((band, label, montage.region(label), s.move_mean[j], s.idle_mean[j],
                         s.pvalue[j], bool(s.significant[j])))
    _write(path, ("band", "electrode", "region", "move_mean_z", "idle_mean_z", "pvalue", "significant"), rows)


def read_band_power_csv(path) -> dict[str, dict[str, tuple[float, float, bool]]]:
    """band -> electrode -> (move_mean_z, pvalue, significant)."""
    out: dict[str, dict] = {}
    for r in _read(path):
        out.setdefault(r["band"], {})[r["electrode"]] = (
            float(r["move_mean_z"]), float(r["pvalue"]), r["significant"] == "1")
    return out


def write_snr_csv(path, labels: Sequence[str], snr: Mapping[str, np.ndarray], mean_force) -> None:
    rows = []
    for band in sorted(snr):
        for t in range(snr[band].shape[0]):
            for j, label in enumerate(labels):
                rows.append((band, t, mean_force[t], label, snr[band][t, j]))
    _write(path, ("band", "trial", "mean_force", "electrode", "snr_db"), rows)


def write_fd_correlation_csv(path, fd: FdCorrelation, montage: Montage) -> None:
    rows = [(l, montage.region(l), fd.r[j], fd.t[j], fd.pvalue[j], fd.significant_r[j])
            for j, l in enumerate(fd.labels)]
    _write(path, ("electrode", "region", "r", "t", "pvalue", "significant_r"), rows)


def read_fd_correlation_csv(path) -> dict[str, float]:
    """electrode -> significant R (0 where not significant)."""
    return {r["electrode"]: float(r["significant_r"]) for r in _read(path)}


def write_fd_levels_csv(path, fd: FdCorrelation) -> None:
    rows = [(int(n), c, *fd.level_means[i]) for i, (n, c) in enumerate(zip(fd.level_numbers, fd.level_centers))]
    _write(path, ("level", "force_center", *fd.labels), rows)


def write_region_summary_csv(path, summary: RegionSummary, extra: Optional[Mapping[str, object]] = None) -> None:
    rows = list(summary.as_rows()) + sorted((extra or {}).items())
    _write(path, ("quantity", "value"), rows)


def read_region_summary_csv(path) -> dict[str, str]:
    return {r["quantity"]: r["value"] for r in _read(path)}


def write_components_csv(path, scores: np.ndarray, rejected: Sequence[int], score_name: str) -> None:
    rej = set(rejected)
    _write(path, ("component", score_name, "rejected"), [(j, s, j in rej) for j, s in enumerate(scores)])


# ---------------------------------------------------------------- SVG figures

_SIZE = 400.0
_HEAD = 170.0  # head radius in px; unit disk maps onto it


def _xy(p) -> tuple[float, float]:
    # +y (anterior) points up on the page
    return _SIZE / 2 + _HEAD * float(p[0]), _SIZE / 2 - _HEAD * float(p[1])


def _diverging(v: float, vmax: float) -> str:
    """Blue (negative) - white - red (positive)."""
    a = 0.0 if vmax <= 0 else max(-1.0, min(1.0, v / vmax))
    if a >= 0:
        r, g, b = 255, round(255 * (1 - a)), round(255 * (1 - a))
    else:
        r, g, b = round(255 * (1 + a)), round(255 * (1 + a)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def idw(points: np.ndarray, values: np.ndarray, grid: np.ndarray, power: float = 2.0) -> np.ndarray:
    """Inverse-distance-weighted interpolation; exact at the data points."""
    d = np.sqrt(((grid[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
    out = np.empty(len(grid))
    hit = d.min(axis=1) < 1e-12
    out[hit] = values[d[hit].argmin(axis=1)]
    w = 1.0 / d[~hit] ** power
    out[~hit] = (w @ values) / w.sum(axis=1)
    return out


def default_virtual_positions(n: int) -> np.ndarray:
    """Virtual electrodes drawn as dots just outside the lower rim of the head."""
    ang = np.deg2rad(np.linspace(-150.0, -30.0, n)) if n > 1 else np.array([-np.pi / 2])
    return 1.08 * np.column_stack([np.cos(ang), np.sin(ang)])


def _svg_root(title: str) -> ET.Element:
    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=fmt(_SIZE), height=fmt(_SIZE + 30),
                      viewBox=f"0 0 {fmt(_SIZE)} {fmt(_SIZE + 30)}")
    t = ET.SubElement(root, "text", x=fmt(_SIZE / 2), y="18", attrib={"text-anchor": "middle", "font-size": "14"})
    t.text = title
    return root


def topography_svg(values: Mapping[str, float], significant: Mapping[str, bool], montage: Montage,
                   title: str = "", n_virtual: int = 0, grid_step: float = 0.05,
                   vmax: Optional[float] = None) -> str:
    """Interpolated scalp map of per-electrode values.

    Electrodes failing significance contribute 0 to the interpolation and
    are drawn as small grey points; significant ones are outlined and
    labelled. The HA is outlined in red.
    """
    labels = [l for l in values if l in montage.labels]
    if not labels:
        raise ValueError("no plotted electrode is in the montage")
    pts = np.array([montage.position(l) for l in labels])
    shown = np.array([bool(significant.get(l, False)) for l in labels])
    vals = np.where(shown, np.array([values[l] for l in labels], dtype=float), 0.0)
    if vmax is None:
        vmax = float(np.max(np.abs(vals))) if shown.any() else 1.0
    root = _svg_root(title)
    maps = ET.SubElement(root, "g", id="map")
    ticks = np.arange(-1.0, 1.0 + 1e-9, grid_step)
    gx, gy = np.meshgrid(ticks, ticks)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    inside = (grid ** 2).sum(axis=1) <= 1.0
    grid = grid[inside]
    est = idw(pts, vals, grid)
    px = grid_step * _HEAD
    for (x, y), v in zip(grid, est):
        cx, cy = _xy((x, y))
        ET.SubElement(maps, "rect", x=fmt(cx - px / 2), y=fmt(cy - px / 2), width=fmt(px), height=fmt(px),
                      fill=_diverging(v, vmax))
    ET.SubElement(root, "circle", cx=fmt(_SIZE / 2), cy=fmt(_SIZE / 2), r=fmt(_HEAD), fill="none",
                  stroke="black", attrib={"stroke-width": "2"})
    ha = np.array([montage.position(l) for l in sorted(montage.ha) if l in montage.labels])
    if len(ha) >= 3:
        hull = ha[ConvexHull(ha).vertices]
        ET.SubElement(root, "polygon", id="ha-outline", fill="none", stroke="red",
                      points=" ".join(f"{fmt(a)},{fmt(b)}" for a, b in map(_xy, hull)),
                      attrib={"stroke-width": "2"})
    elec = ET.SubElement(root, "g", id="electrodes")
    for l, p, s in zip(labels, pts, shown):
        cx, cy = _xy(p)
        if s:
            ET.SubElement(elec, "circle", cx=fmt(cx), cy=fmt(cy), r="3", fill="none", stroke="black",
                          attrib={"class": "significant", "data-label": l})
        else:
            ET.SubElement(elec, "circle", cx=fmt(cx), cy=fmt(cy), r="1", fill="#999999",
                          attrib={"class": "masked", "data-label": l})
    virt = ET.SubElement(root, "g", id="virtual")
    for p in default_virtual_positions(n_virtual) if n_virtual else ():
        cx, cy = _xy(p)
        ET.SubElement(virt, "circle", cx=fmt(cx), cy=fmt(cy), r="4", fill="black", attrib={"class": "virtual"})
    cb = ET.SubElement(root, "text", x=fmt(_SIZE / 2), y=fmt(_SIZE + 22),
                       attrib={"text-anchor": "middle", "font-size": "11"})
    cb.text = f"colour scale +/-{fmt(vmax)}"
    return ET.tostring(root, encoding="unicode")


def bar_chart_svg(sig_r: Mapping[str, float], montage: Montage, title: str = "") -> str:
    """|significant R| per electrode; red bars for HA, blue for NHA.

    Electrodes with R = 0 (not significant) get no bar.
    """
    labels = [l for l in sig_r if sig_r[l] != 0]
    root = _svg_root(title)
    plot = ET.SubElement(root, "g", id="bars")
    left, right, top, bottom = 40.0, _SIZE - 10.0, 30.0, _SIZE - 40.0
    ET.SubElement(root, "line", x1=fmt(left), y1=fmt(bottom), x2=fmt(right), y2=fmt(bottom), stroke="black")
    ET.SubElement(root, "line", x1=fmt(left), y1=fmt(top), x2=fmt(left), y2=fmt(bottom), stroke="black")
    for tick in (0.0, 0.5, 1.0):
        y = bottom - tick * (bottom - top)
        t = ET.SubElement(root, "text", x=fmt(left - 4), y=fmt(y + 4), attrib={"text-anchor": "end", "font-size": "10"})
        t.text = fmt(tick)
    if labels:
        slot = (right - left) / len(labels)
        for i, l in enumerate(labels):
            h = min(abs(sig_r[l]), 1.0) * (bottom - top)
            colour = "red" if montage.region(l) == "HA" else "blue"
            x = left + i * slot + 0.15 * slot
            ET.SubElement(plot, "rect", x=fmt(x), y=fmt(bottom - h), width=fmt(0.7 * slot), height=fmt(h),
                          fill=colour, attrib={"class": "bar", "data-label": l})
            t = ET.SubElement(root, "text", x=fmt(x + 0.35 * slot), y=fmt(bottom + 12),
                              attrib={"text-anchor": "middle", "font-size": "9"})
            t.text = l
    return ET.tostring(root, encoding="unicode")
