"""Deterministic CSV and SVG emitters for scan and report results.

All writers format floats with a fixed %.12g convention, iterate in sorted
order, and write LF newlines, so identical inputs produce byte-identical
files regardless of platform or thread count.  Schemas are versioned in the
file headers.
"""

from __future__ import annotations

import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

CSV_VERSION = "infinitas-csv v1"
SVG_VERSION = "infinitas-svg v1"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if not np.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return f"{x:.12g}"


def _write(path: str, text: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


# -- scan outputs -----------------------------------------------------------------


def _match_components(nodes) -> List[Dict[int, int]]:
    """Greedy matching of mesh components across grid nodes by anchor proximity.

    Returns, per node, a map from local component index to a persistent label.
    """
    labels: List[Dict[int, int]] = []
    next_label = 0
    prev_anchors: List[Tuple[int, Tuple[float, ...]]] = []
    for node in nodes:
        mapping: Dict[int, int] = {}
        used = set()
        for ci, anchor in enumerate(node.component_anchor):
            best = None
            best_d = None
            for label, pa in prev_anchors:
                if label in used or len(pa) != len(anchor):
                    continue
                d = float(np.linalg.norm(np.array(pa) - np.array(anchor)))
                if best_d is None or d < best_d:
                    best, best_d = label, d
            if best is not None and best_d is not None and best_d < 2.0:
                mapping[ci] = best
                used.add(best)
            else:
                mapping[ci] = next_label
                next_label += 1
        labels.append(mapping)
        if node.component_anchor:
            prev_anchors = [(mapping[ci], a) for ci, a in enumerate(node.component_anchor)]
    return labels


def scan_csv_text(result) -> str:
    """CSV of a continuity scan: one row per node per quantity (plus components)."""
    lines = [
        f"# {CSV_VERSION}; subject=scan; seed={result.seed}; planes={result.planes}; "
        "theta-normalization=ball; kappa-normalization=normal-sphere-mean",
        "y,quantity,component,value,error,status",
    ]
    comp_labels = _match_components(result.nodes)
    for node, mapping in zip(result.nodes, comp_labels):
        for quantity, value, error in node.entries():
            lines.append(",".join([
                _fmt(node.y), quantity, "aggregate", _fmt(value),
                _fmt(error if error is not None and np.isfinite(error) else None),
                node.status,
            ]))
        for ci, chi in enumerate(node.component_chi):
            lines.append(",".join([
                _fmt(node.y), "chi-component", str(mapping.get(ci, ci)),
                _fmt(chi), "0", node.status,
            ]))
    return "\n".join(lines) + "\n"


def acv_csv_text(report, grid, profile_rows: Optional[Sequence[Tuple[float, float, Optional[float], str]]] = None) -> str:
    """CSV of an ACV estimation: classification per node plus K estimates."""
    lines = [
        f"# {CSV_VERSION}; subject=acv; eta={_fmt(report.eta)}; "
        f"decay-threshold={_fmt(report.thresholds['decay_ratio'])}; "
        f"slope-threshold={_fmt(report.thresholds['slope'])}",
        "y,R,inf_M,class",
    ]
    if profile_rows:
        for y, R, val, kind in profile_rows:
            lines.append(",".join([_fmt(y), _fmt(R), _fmt(val), kind]))
    else:
        for y, cls in report.classifications:
            lines.append(",".join([_fmt(y), "", "", cls.kind]))
    for cp in report.k0:
        lines.append(",".join([_fmt(cp.value[0]), "", "", "K0"]))
    for s in report.kinf:
        lines.append(",".join([_fmt(s.value), "", "", "K-infinity"]))
    return "\n".join(lines) + "\n"


def link_csv_text(report) -> str:
    lines = [
        f"# {CSV_VERSION}; subject=links",
        "R,chi,components,status",
    ]
    for R, chi, comp in zip(report.radii, report.chi, report.components):
        status = "ok" if chi is not None else "failed"
        lines.append(",".join([_fmt(R), _fmt(chi), _fmt(comp), status]))
    stable = _fmt(report.stable_chi) if report.stabilized else "not-stabilized"
    lines.append(f"# stable-chi={stable}; r_S={_fmt(report.stabilization_radius)}")
    return "\n".join(lines) + "\n"


def density_csv_text(estimates) -> str:
    lines = [
        f"# {CSV_VERSION}; subject=density; theta-normalization=ball; "
        "kappa-normalization=normal-sphere-mean",
        "target,R,raw,normalized",
    ]
    for est in estimates:
        for R, raw, nv in zip(est.radii, est.raw, est.normalized):
            lines.append(",".join([est.target, _fmt(R), _fmt(raw), _fmt(nv)]))
    return "\n".join(lines) + "\n"


def identity_csv_text(residuals) -> str:
    lines = [
        f"# {CSV_VERSION}; subject=gb-check",
        "identity,detail,left,right,error,verdict",
    ]
    for r in residuals:
        lines.append(",".join([r.identity, r.detail, _fmt(r.left), _fmt(r.right),
                               _fmt(r.error), r.verdict]))
    return "\n".join(lines) + "\n"


# -- SVG plots --------------------------------------------------------------------

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 20, 30, 40


def _svg_header(title: str) -> List[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f"<!-- {SVG_VERSION} -->",
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="monospace" font-size="13">{title}</text>',
    ]


def quantity_svg_text(result, quantity: str) -> str:
    """Self-contained line plot of one scanned quantity over the parameter grid.

    Jump cells are shaded; estimated generalized critical values appear as
    dashed vertical markers.
    """
    ys = []
    vals = []
    for node in result.nodes:
        for q, v, _ in node.entries():
            if q == quantity:
                ys.append(node.y)
                vals.append(v)
    pairs = [(y, v) for y, v in zip(ys, vals) if v is not None]
    parts = _svg_header(f"{quantity} over parameter grid")
    if not pairs or len(result.grid) == 0:
        parts.append(f'<text x="{_W / 2:.1f}" y="{_H / 2:.1f}" text-anchor="middle" '
                     f'font-family="monospace" font-size="12">no data</text>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"

    gx_lo, gx_hi = min(result.grid), max(result.grid)
    if gx_hi == gx_lo:
        gx_hi = gx_lo + 1.0
    vv = [v for _, v in pairs]
    v_lo, v_hi = min(vv), max(vv)
    if v_hi - v_lo < 1e-9:
        v_lo -= 0.5
        v_hi += 0.5
    pad = 0.08 * (v_hi - v_lo)
    v_lo -= pad
    v_hi += pad

    def X(y):
        return _ML + (y - gx_lo) / (gx_hi - gx_lo) * (_W - _ML - _MR)

    def Y(v):
        return _H - _MB - (v - v_lo) / (v_hi - v_lo) * (_H - _MT - _MB)

    for j in result.jumps:
        if j.quantity != quantity:
            continue
        x0, x1 = X(j.y_lo), X(j.y_hi)
        parts.append(f'<rect x="{x0:.2f}" y="{_MT}" width="{x1 - x0:.2f}" '
                     f'height="{_H - _MT - _MB}" fill="#f4c7c3" opacity="0.6"/>')
    for kv in result.acv.k_values:
        if gx_lo <= kv <= gx_hi:
            x = X(kv)
            parts.append(f'<line x1="{x:.2f}" y1="{_MT}" x2="{x:.2f}" y2="{_H - _MB}" '
                         f'stroke="#888888" stroke-dasharray="4,3"/>')
    parts.append(f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
                 f'stroke="black"/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>')
    for frac in (0.0, 0.5, 1.0):
        y_val = gx_lo + frac * (gx_hi - gx_lo)
        parts.append(f'<text x="{X(y_val):.1f}" y="{_H - _MB + 18}" text-anchor="middle" '
                     f'font-family="monospace" font-size="11">{_fmt(y_val)}</text>')
        v_val = v_lo + frac * (v_hi - v_lo)
        parts.append(f'<text x="{_ML - 6}" y="{Y(v_val) + 4:.1f}" text-anchor="end" '
                     f'font-family="monospace" font-size="11">{_fmt(round(v_val, 6))}</text>')
    points = " ".join(f"{X(y):.2f},{Y(v):.2f}" for y, v in pairs)
    parts.append(f'<polyline points="{points}" fill="none" stroke="#1661a9" '
                 f'stroke-width="1.5"/>')
    for y, v in pairs:
        parts.append(f'<circle cx="{X(y):.2f}" cy="{Y(v):.2f}" r="2.4" fill="#1661a9"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_outputs(result, out_dir: str) -> List[str]:
    """Write the scan CSV and one SVG per quantity; returns the written paths."""
    paths = []
    paths.append(_write(os.path.join(out_dir, "scan.csv"), scan_csv_text(result)))
    quantities = sorted({q for node in result.nodes for q, _, _ in node.entries()})
    for q in quantities:
        safe = q.replace(":", "-")
        paths.append(_write(os.path.join(out_dir, f"scan-{safe}.svg"),
                            quantity_svg_text(result, q)))
    return paths
