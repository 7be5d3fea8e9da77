"""Report artifacts: standalone SVG figures and the CSV series behind them.

Everything here is a pure function of run logs, scenarios and metrics, so
re-rendering from saved logs reproduces the same bytes.
"""
import csv
import io
import math
import os
from xml.sax.saxutils import escape

import numpy as np

from .evaluation import aggregate_grid, compare_runs
from .scenario import grid_key

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(x):
    return f"{x:.3f}".rstrip("0").rstrip(".") if math.isfinite(x) else "0"


def _svg(width, height, body):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n' + "".join(body) + "</svg>\n"
    )


def _polyline(points, color, width=1.5, dash=None):
    if len(points) < 2:
        return ""
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{d}/>\n'


def _text(x, y, s, anchor="start", extra=""):
    return f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"{extra}>{escape(s)}</text>\n'


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10))
        v += step
    return ticks


def line_chart_svg(series, xlabel, ylabel, title="", width=640, height=360):
    """Multi-series line chart. ``series`` is a list of ``(label, xs, ys)``."""
    ml, mr, mt, mb = 60, 130, 30, 45
    xs_all = np.concatenate([np.asarray(s[1], float) for s in series]) if series else np.zeros(1)
    ys_all = np.concatenate([np.asarray(s[2], float) for s in series]) if series else np.zeros(1)
    x0, x1 = float(np.min(xs_all)), float(np.max(xs_all))
    y0, y1 = float(np.min(ys_all)), float(np.max(ys_all))
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0
    pad = 0.05 * (y1 - y0) if y1 > y0 else 0.5
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (y1 - y) / (y1 - y0) * ph

    body = [f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>\n']
    for tx in _nice_ticks(x0, x1):
        body.append(f'<line x1="{_f(px(tx))}" y1="{mt + ph}" x2="{_f(px(tx))}" y2="{mt + ph + 4}" stroke="#444"/>\n')
        body.append(_text(px(tx), mt + ph + 16, f"{tx:g}", "middle"))
    for ty in _nice_ticks(y0, y1):
        body.append(f'<line x1="{ml - 4}" y1="{_f(py(ty))}" x2="{ml + pw}" y2="{_f(py(ty))}" stroke="#ddd"/>\n')
        body.append(_text(ml - 6, py(ty) + 4, f"{ty:g}", "end"))
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        body.append(_polyline([(px(x), py(y)) for x, y in zip(xs, ys)], color))
        ly = mt + 14 + 16 * i
        body.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>\n')
        body.append(_text(ml + pw + 34, ly, label))
    body.append(_text(ml + pw / 2, height - 8, xlabel, "middle"))
    body.append(_text(14, mt + ph / 2, ylabel, "middle", f' transform="rotate(-90 14 {_f(mt + ph / 2)})"'))
    if title:
        body.append(_text(ml + pw / 2, 18, title, "middle"))
    return _svg(width, height, body)


def scenario_svg(scenario, trajectories, width=640, height=640):
    """Top-down view: lanelet boundaries, centerlines, goal disks and
    trajectories given as ``[(label, xs, ys), ...]``."""
    xs, ys = [], []
    for ln in scenario.lanelets:
        for b in (ln.left_boundary, ln.right_boundary):
            xs.extend(b[:, 0])
            ys.extend(b[:, 1])
    for _, tx, ty in trajectories:
        xs.extend(tx)
        ys.extend(ty)
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    m = 20
    scale = min((width - 2 * m) / max(x1 - x0, 1e-6), (height - 2 * m - 20) / max(y1 - y0, 1e-6))

    def p(x, y):
        return m + (x - x0) * scale, height - m - (y - y0) * scale

    body = []
    for ln in scenario.lanelets:
        for b in (ln.left_boundary, ln.right_boundary):
            body.append(_polyline([p(x, y) for x, y in b], "#333", 1.2))
        c = ln.centerline
        body.append(_polyline([p(x, y) for x, y in zip(c.x, c.y)], "#999", 0.8, "4,3"))
    for a in scenario.agents:
        cx, cy = p(*a.goal.center)
        body.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(a.goal.radius * scale)}" '
                    f'fill="#ffd70055" stroke="#b8860b"/>\n')
    for i, (label, tx, ty) in enumerate(trajectories):
        color = PALETTE[i % len(PALETTE)]
        body.append(_polyline([p(x, y) for x, y in zip(tx, ty)], color, 2.0))
        body.append(_text(m + 4, 16 + 14 * i, label, extra=f' fill="{color}"'))
    return _svg(width, height, body)


def _cell_color(v, vmax):
    if not math.isfinite(v):
        return "#cccccc"
    r = 0.0 if vmax <= 0 else min(max(v / vmax, 0.0), 1.0)
    # white to dark red
    g = int(round(255 * (1.0 - r)))
    return f"#{255 - int(round(120 * r)):02x}{g:02x}{g:02x}"


def heatmap_svg(table, title="", cell=64):
    """Radii as rows, angles as columns; missing cells are grey and labelled."""
    ml, mt = 80, 50
    nr, nc = len(table.radii), len(table.angles_deg)
    width, height = ml + nc * cell + 20, mt + nr * cell + 50
    finite = table.values[np.isfinite(table.values)]
    vmax = float(finite.max()) if finite.size else 1.0
    body = []
    for i, r in enumerate(table.radii):
        for j, a in enumerate(table.angles_deg):
            v = float(table.values[i, j])
            x, y = ml + j * cell, mt + i * cell
            body.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{_cell_color(v, vmax)}" stroke="white"/>\n')
            body.append(_text(x + cell / 2, y + cell / 2 + 4, "n/a" if not math.isfinite(v) else f"{v:.2f}", "middle"))
        body.append(_text(ml - 8, mt + i * cell + cell / 2 + 4, f"r={r:g} m", "end"))
    for j, a in enumerate(table.angles_deg):
        body.append(_text(ml + j * cell + cell / 2, mt - 8, f"{a:g}°", "middle"))
    label = {"max": "max |d| [m]", "mean": "mean |d| [m]"}.get(table.metric, table.metric)
    body.append(_text(ml, height - 16, f"{title} {label}".strip()))
    return _svg(width, height, body)


def _csv(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def displacement_csv(metrics):
    return _csv(zip(metrics.s, metrics.d), ["s_m", "d_m"])


def velocity_csv(metrics):
    return _csv(zip(metrics.t, metrics.v_ref, metrics.v_cmp), ["t_s", "v_ref_mps", "v_cmp_mps"])


def _write(out_dir, name, text, written):
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write(text)
    written.append(path)


def render_reports(logs, out_dir, scenarios=None, metric="max", reference="lofi"):
    """Write per-scenario figures and CSVs plus the grid heatmap.

    ``logs`` is an iterable of run logs; each high-fidelity log is compared
    with the low-fidelity log of the same scenario. ``scenarios`` maps
    scenario ids to scenarios and enables the top-down plots and the
    heatmap. Returns ``{"files", "metrics", "gaps", "heatmap"}``.
    """
    os.makedirs(out_dir, exist_ok=True)
    scenarios = scenarios or {}
    by_key = {(lg.scenario_id, lg.backend): lg for lg in logs}
    ids = sorted({sid for sid, _ in by_key})
    written, metrics, gaps = [], {}, []
    for sid in ids:
        lo, hi = by_key.get((sid, "low")), by_key.get((sid, "high"))
        if hi is None or (lo is None and reference == "lofi"):
            gaps.append({"scenario_id": sid, "missing": "high" if hi is None else "low"})
            if lo is not None and sid in scenarios:
                ex = lo.executed(lo.agent_ids()[0])
                _write(out_dir, f"{sid}__low.svg", scenario_svg(
                    scenarios[sid], [("low", [p.x for p in ex], [p.y for p in ex])]), written)
            continue
        m = compare_runs(lo, hi, reference=reference, scenario=scenarios.get(sid))
        metrics[sid] = m
        base = f"{sid}__high"
        _write(out_dir, base + "__d.csv", displacement_csv(m), written)
        _write(out_dir, base + "__v.csv", velocity_csv(m), written)
        _write(out_dir, base + "__d.svg", line_chart_svg([("high vs low", m.s, m.d)], "s [m]", "d [m]", sid), written)
        _write(out_dir, base + "__v.svg", line_chart_svg(
            [("reference", m.t, m.v_ref), ("high", m.t, m.v_cmp)], "t [s]", "v [m/s]", sid), written)
        if sid in scenarios:
            trajs = []
            for label, lg in (("low", lo), ("high", hi)):
                if lg is None:
                    continue
                for aid in lg.agent_ids():
                    ex = lg.executed(aid)
                    name = label if len(lg.agent_ids()) == 1 else f"{label} agent {aid}"
                    trajs.append((name, [p.x for p in ex], [p.y for p in ex]))
            _write(out_dir, base + ".svg", scenario_svg(scenarios[sid], trajs), written)

    heat = {}
    items = []
    for sid in ids:
        key = grid_key(scenarios[sid]) if sid in scenarios else None
        if key is not None:
            items.append((key, metrics.get(sid)))
    if items:
        for name, sign in (("heatmap", None), ("heatmap_positive", 1), ("heatmap_negative_mirrored", -1)):
            if sign is not None and not any((a > 0) if sign > 0 else (a < 0) for (_, a), _ in items):
                continue
            table = aggregate_grid(items, metric=metric, sign=sign)
            heat[name] = table
            _write(out_dir, f"{name}.csv", table.to_csv(), written)
            _write(out_dir, f"{name}.svg", heatmap_svg(table, name.replace("_", " ")), written)
    return {"files": written, "metrics": metrics, "gaps": gaps, "heatmap": heat}


def vehicle_study_reports(reference_log, logs_by_model, out_dir, scenario=None):
    """Multi-series d-over-s and v-over-t comparison of several vehicle models."""
    os.makedirs(out_dir, exist_ok=True)
    written, metrics = [], {}
    for model, lg in logs_by_model.items():
        metrics[model] = compare_runs(reference_log, lg)
    sid = reference_log.scenario_id
    d_series = [(m, metrics[m].s, metrics[m].d) for m in logs_by_model]
    first = next(iter(metrics.values()))
    v_series = [("reference", first.t, first.v_ref)]
    v_series += [(m, metrics[m].t, metrics[m].v_cmp) for m in logs_by_model]
    for m in logs_by_model:
        _write(out_dir, f"{sid}__{m}__d.csv", displacement_csv(metrics[m]), written)
        _write(out_dir, f"{sid}__{m}__v.csv", velocity_csv(metrics[m]), written)
    _write(out_dir, f"{sid}__vehicles__d.svg", line_chart_svg(d_series, "s [m]", "d [m]", sid), written)
    _write(out_dir, f"{sid}__vehicles__v.svg", line_chart_svg(v_series, "t [s]", "v [m/s]", sid), written)
    if scenario is not None:
        ref = reference_log.executed(reference_log.agent_ids()[0])
        trajs = [("low", [p.x for p in ref], [p.y for p in ref])]
        for m, lg in logs_by_model.items():
            ex = lg.executed(lg.agent_ids()[0])
            trajs.append((m, [p.x for p in ex], [p.y for p in ex]))
        _write(out_dir, f"{sid}__vehicles.svg", scenario_svg(scenario, trajs), written)
    return {"files": written, "metrics": metrics}
