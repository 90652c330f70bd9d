"""CSV tables and SVG ROC plots. Output bytes depend only on the inputs."""

import csv
import math
from xml.sax.saxutils import escape

from .metrics import EvalReport
from .roc import RocCurve

REPORT_FIELDS = ["attack", "detector", "param", "false_alarm_pct", "detection_pct", "missed_pct",
                 "mean_n_fa", "mean_n_det", "mean_n_miss", "mean_n_clean"]
ROC_FIELDS = ["detector", "param", "fa_rate", "det_rate"]

# matplotlib's default cycle, so plots look familiar
COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{float(v):.10g}"


def write_report_csv(report: EvalReport, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(REPORT_FIELDS)
        for r in report.rows:
            wr.writerow([r.attack, r.detector, r.param, _num(r.false_alarm_pct), _num(r.detection_pct),
                         _num(r.missed_pct), _num(r.mean_n_fa), _num(r.mean_n_det),
                         _num(r.mean_n_miss), _num(r.mean_n_clean)])


def write_roc_csv(curves, path):
    if isinstance(curves, RocCurve):
        curves = [curves]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(ROC_FIELDS)
        for c in curves:
            for param, fa, det in zip(c.params, c.fa_rate, c.det_rate):
                wr.writerow([c.detector, _num(param) if isinstance(param, (int, float)) else param,
                             _num(fa), _num(det)])


def roc_svg(curves, title: str = "ROC") -> str:
    """800x600 SVG, both axes 0-1, one polyline per curve that has points."""
    if isinstance(curves, RocCurve):
        curves = [curves]
    W, H = 800, 600
    left, right, top, bottom = 80, 40, 50, 70
    pw, ph = W - left - right, H - top - bottom

    def xy(fa, det):
        return f"{left + fa * pw:.2f},{top + (1 - det) * ph:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="30" text-anchor="middle" font-size="18">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for i in range(11):
        v = i / 10
        x, y = left + v * pw, top + (1 - v) * ph
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 20}" text-anchor="middle" font-size="12">{v:.1f}</text>')
        out.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="12">{v:.1f}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{H - 20}" text-anchor="middle" font-size="14">false alarm rate</text>')
    out.append(f'<text x="20" y="{top + ph / 2}" text-anchor="middle" font-size="14" '
               f'transform="rotate(-90 20 {top + ph / 2})">detection rate</text>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top}" stroke="#bbbbbb" '
               f'stroke-dasharray="4 4"/>')
    for k, c in enumerate(c for c in curves if c.params):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(xy(fa, det) for fa, det in c.points())
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 20 + 20 * k
        out.append(f'<line x1="{left + pw - 210}" y1="{ly}" x2="{left + pw - 180}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        label = f"{c.detector} (AUC {c.auc:.3f})"
        out.append(f'<text x="{left + pw - 175}" y="{ly + 4}" font-size="12">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(obj, fmt: str, path, title: str = "ROC"):
    """Write an EvalReport (csv) or RocCurve(s) (csv or svg) to ``path``."""
    if fmt == "csv":
        if isinstance(obj, EvalReport):
            write_report_csv(obj, path)
        else:
            write_roc_csv(obj, path)
    elif fmt == "svg":
        if isinstance(obj, EvalReport):
            raise ValueError("SVG output is only defined for ROC curves")
        with open(path, "w") as fh:
            fh.write(roc_svg(obj, title))
    else:
        raise ValueError(f"unknown report format {fmt!r}")
