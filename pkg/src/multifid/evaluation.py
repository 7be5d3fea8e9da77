"""Cross-fidelity trajectory comparison, grid aggregation and runtime statistics."""
import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import wrap_angle


class ComparisonError(ValueError):
    pass


class AggregationError(ValueError):
    pass


class StatsError(ValueError):
    pass


def lateral_displacement(reference, comparison):
    """Signed lateral offset of each comparison point from a reference polyline.

    ``reference`` and ``comparison`` are ``(N, 2)`` arrays. Returns ``(s, d)``
    where ``s`` is the arclength of the projection foot on the reference and
    ``d`` is positive to the left of the reference travel direction.
    """
    reference = np.asarray(reference, dtype=float)
    comparison = np.asarray(comparison, dtype=float)
    if reference.ndim != 2 or reference.shape[0] < 2:
        raise ComparisonError("reference polyline needs at least two points")
    s, d, _ = kernels.project_points(reference[:, 0], reference[:, 1], comparison[:, 0], comparison[:, 1])
    return s, d


@dataclass(frozen=True)
class AlignedSeries:
    t: np.ndarray
    reference: list
    comparison: list


@dataclass(frozen=True, eq=False)
class ErrorMetrics:
    s: np.ndarray
    d: np.ndarray
    t: np.ndarray
    position_error: np.ndarray
    orientation_error: np.ndarray
    velocity_error: np.ndarray
    v_ref: np.ndarray
    v_cmp: np.ndarray
    aggregates: dict = field(default_factory=dict)

    @staticmethod
    def compute_aggregates(d, position_error, orientation_error, velocity_error):
        def _max(a):
            return float(np.max(np.abs(a))) if len(a) else 0.0

        return {
            "max_abs_d": _max(d),
            "mean_abs_d": float(np.mean(np.abs(d))) if len(d) else 0.0,
            "rmse_pos": float(np.sqrt(np.mean(position_error ** 2))) if len(position_error) else 0.0,
            "rmse_v": float(np.sqrt(np.mean(velocity_error ** 2))) if len(velocity_error) else 0.0,
            "max_abs_orientation": _max(orientation_error),
        }


def align(reference_states, comparison_states, dt):
    """Pair states by step index, truncated to the shorter series."""
    n = min(len(reference_states), len(comparison_states))
    return AlignedSeries(np.arange(n) * dt, list(reference_states[:n]), list(comparison_states[:n]))


def metrics_from_states(reference_states, comparison_states, dt, reference_polyline=None):
    aligned = align(reference_states, comparison_states, dt)
    ref = aligned.reference
    cmp_ = aligned.comparison
    if reference_polyline is None:
        reference_polyline = np.array([[p.x, p.y] for p in reference_states])
    cxy = np.array([[p.x, p.y] for p in cmp_])
    s, d = lateral_displacement(reference_polyline, cxy)
    pos = np.array([math.hypot(a.x - b.x, a.y - b.y) for a, b in zip(ref, cmp_)])
    ori = np.array([wrap_angle(b.heading - a.heading) for a, b in zip(ref, cmp_)])
    v_ref = np.array([a.v for a in ref])
    v_cmp = np.array([b.v for b in cmp_])
    vel = v_cmp - v_ref
    return ErrorMetrics(
        s=s, d=d, t=aligned.t, position_error=pos, orientation_error=ori, velocity_error=vel,
        v_ref=v_ref, v_cmp=v_cmp, aggregates=ErrorMetrics.compute_aggregates(d, pos, ori, vel),
    )


@dataclass(frozen=True)
class _PlannedState:
    x: float
    y: float
    heading: float
    v: float


def compare_runs(reference_log, comparison_log, agent_id=None, reference="lofi", scenario=None):
    """Error metrics of ``comparison_log`` against a reference.

    ``reference`` selects the baseline: ``"lofi"`` uses the executed states
    of ``reference_log``; ``"planned"`` uses the one-step-ahead planned
    states recorded in ``comparison_log`` itself; ``"centerline"`` uses the
    agent's lanelet centerline from ``scenario`` for the lateral series.
    """
    if reference_log is not None and reference_log.scenario_id != comparison_log.scenario_id:
        raise ComparisonError(
            f"scenario mismatch: {reference_log.scenario_id!r} vs {comparison_log.scenario_id!r}"
        )
    if reference_log is not None and abs(reference_log.dt_plan - comparison_log.dt_plan) > 1e-12:
        raise ComparisonError("runs use different dt_plan")
    if agent_id is None:
        agent_id = comparison_log.agent_ids()[0]
    dt = comparison_log.dt_plan
    cmp_states = comparison_log.executed(agent_id)
    if reference == "lofi":
        if reference_log is None:
            raise ComparisonError("reference='lofi' needs a reference log")
        return metrics_from_states(reference_log.executed(agent_id), cmp_states, dt)
    if reference == "planned":
        init = comparison_log.initial_states[agent_id]
        planned = [_PlannedState(init.x, init.y, init.heading, init.v)]
        planned += [_PlannedState(p["x"], p["y"], p["heading"], p["v"]) for p in comparison_log.planned_next(agent_id)]
        return metrics_from_states(planned, cmp_states, dt)
    if reference == "centerline":
        if scenario is None:
            raise ComparisonError("reference='centerline' needs the scenario")
        base = reference_log.executed(agent_id) if reference_log is not None else cmp_states
        lanelet = scenario.lanelets[scenario.agent(agent_id).lanelet]
        poly = np.column_stack([lanelet.centerline.x, lanelet.centerline.y])
        return metrics_from_states(base, cmp_states, dt, reference_polyline=poly)
    raise ComparisonError(f"unknown reference mode {reference!r}")


# ---------------------------------------------------------------- heatmap


@dataclass(frozen=True, eq=False)
class HeatmapTable:
    radii: list
    angles_deg: list
    values: np.ndarray  # rows radii, cols angles; NaN where missing
    missing: list
    metric: str
    folded: bool = False

    def cell(self, radius, angle_deg):
        return float(self.values[self.radii.index(radius), self.angles_deg.index(angle_deg)])

    def argmax(self):
        i, j = np.unravel_index(np.nanargmax(self.values), self.values.shape)
        return self.radii[i], self.angles_deg[j]

    def to_csv(self):
        lines = ["radius_m\\angle_deg," + ",".join(f"{a:g}" for a in self.angles_deg)]
        for i, r in enumerate(self.radii):
            cells = ["" if math.isnan(v) else repr(float(v)) for v in self.values[i]]
            lines.append(f"{r:g}," + ",".join(cells))
        return "\n".join(lines) + "\n"


METRIC_KEYS = {"max": "max_abs_d", "mean": "mean_abs_d"}


def aggregate_grid(items, metric="max", sign=None):
    """Heatmap of |d| per (radius, angle) cell.

    ``items`` is an iterable of ``((radius, angle_deg), ErrorMetrics or None)``;
    ``None`` marks a failed run. ``sign=+1`` keeps positive angles, ``sign=-1``
    keeps negative angles and labels them by magnitude (the mirrored table).
    """
    key = METRIC_KEYS.get(metric, metric)
    cells = {}
    for (r, a), m in items:
        k = (float(r), float(a))
        if k in cells:
            raise AggregationError(f"duplicate grid key {k}")
        cells[k] = m
    if sign is not None:
        cells = {(r, abs(a)): m for (r, a), m in cells.items() if (a > 0 if sign > 0 else a < 0)}
    if not cells:
        raise AggregationError("no cells to aggregate")
    radii = sorted({r for r, _ in cells})
    angles = sorted({a for _, a in cells})
    values = np.full((len(radii), len(angles)), np.nan)
    missing = []
    for i, r in enumerate(radii):
        for j, a in enumerate(angles):
            m = cells.get((r, a))
            if m is None:
                missing.append((r, a))
            else:
                values[i, j] = m.aggregates[key]
    return HeatmapTable(radii, angles, values, missing, metric, folded=sign is not None and sign < 0)


# ---------------------------------------------------------------- runtime


STAT_ROWS = (("min", "Minimum"), ("max", "Maximum"), ("mean", "Mean"), ("median", "Median"), ("std", "Std. Deviation"))


def runtime_stats(values):
    """Min/max/mean/median and sample standard deviation of wall-clock times."""
    values = [float(v) for v in values]
    if not values:
        raise StatsError("no completed runs to summarize")
    n = len(values)
    return {
        "n": n,
        "min": min(values),
        "max": max(values),
        "mean": statistics.fmean(values),
        "median": statistics.median(values),
        "std": statistics.stdev(values) if n > 1 else 0.0,
        "single_sample": n == 1,
    }


def format_runtime_table(timing):
    """Plain-text table with one column per backend, seconds to two decimals."""
    backends = [b for b in ("low", "high") if b in timing] + sorted(set(timing) - {"low", "high"})
    names = {"low": "Low-Fidelity", "high": "High-Fidelity"}
    header = ["Statistic"] + [names.get(b, b) for b in backends]
    rows = [header]
    for key, label in STAT_ROWS:
        rows.append([label] + [f"{timing[b][key]:.2f} s" for b in backends])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"
