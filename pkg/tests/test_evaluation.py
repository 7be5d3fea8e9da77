import math

import numpy as np
import pytest

from multifid.evaluation import (
    AggregationError,
    ErrorMetrics,
    StatsError,
    aggregate_grid,
    format_runtime_table,
    lateral_displacement,
    metrics_from_states,
    runtime_stats,
)
from multifid.vehicle import VehicleState


def _states(xs, ys, hs=None, vs=None):
    hs = hs if hs is not None else [0.0] * len(xs)
    vs = vs if vs is not None else [1.0] * len(xs)
    return [VehicleState(float(x), float(y), float(h), float(v)) for x, y, h, v in zip(xs, ys, hs, vs)]


def test_identical_trajectories_zero_displacement():
    ref = np.column_stack([np.linspace(0, 10, 21), np.zeros(21)])
    s, d = lateral_displacement(ref, ref)
    assert np.all(d == 0.0)
    assert np.allclose(s, ref[:, 0])


def test_shifted_left_by_half_metre():
    ref = np.column_stack([np.linspace(0, 10, 21), np.zeros(21)])
    s, d = lateral_displacement(ref, ref + [0.0, 0.5])
    assert np.allclose(d, 0.5, atol=1e-12)
    assert np.all(np.diff(s) > 0)


def test_concentric_circle_inside_arc():
    th = np.arange(0.0, math.pi / 2, 0.1 / 10)  # 0.1 m chords, sagitta 1.25e-4 m
    ref = np.column_stack([10 * np.sin(th), 10 - 10 * np.cos(th)])
    th2 = np.linspace(0.05, math.pi / 2 - 0.1, 50)
    cmp_ = np.column_stack([9.7 * np.sin(th2), 10 - 9.7 * np.cos(th2)])
    _, d = lateral_displacement(ref, cmp_)
    # oracle: dense arc at ds = 1e-4
    dense_th = np.arange(0.0, math.pi / 2, 1e-5)
    dx, dy = 10 * np.sin(dense_th), 10 - 10 * np.cos(dense_th)
    oracle = np.array([np.min(np.hypot(dx - px, dy - py)) for px, py in cmp_])
    assert np.allclose(np.abs(d), 0.3, atol=1e-3)
    assert np.allclose(np.abs(d), oracle, atol=1e-3)
    assert np.all(d > 0)  # inside a left turn is to the left


def test_self_comparison_all_zero():
    st = _states(np.arange(10.0), np.zeros(10))
    m = metrics_from_states(st, st, 0.1)
    assert all(v == 0.0 for v in m.aggregates.values())


def test_orientation_wraps_short_way():
    ref = _states([0.0, 1.0], [0.0, 0.0], hs=[3.10, 3.10])
    cmp_ = _states([0.0, 1.0], [0.0, 0.0], hs=[-3.10, -3.10])
    m = metrics_from_states(ref, cmp_, 0.1)
    assert abs(m.orientation_error[0]) == pytest.approx(2 * math.pi - 6.2, abs=1e-12)
    assert m.aggregates["max_abs_orientation"] < 0.1


def test_aggregates_recomputed_from_series():
    rng = np.random.default_rng(0)
    ref = _states(np.arange(30.0), np.zeros(30), vs=rng.uniform(5, 10, 30))
    cmp_ = _states(np.arange(30.0) + 0.1, rng.normal(0, 0.2, 30), vs=rng.uniform(5, 10, 30))
    m = metrics_from_states(ref, cmp_, 0.1)
    assert m.aggregates["max_abs_d"] == pytest.approx(np.max(np.abs(m.d)))
    assert m.aggregates["mean_abs_d"] == pytest.approx(np.mean(np.abs(m.d)))
    assert m.aggregates["rmse_v"] == pytest.approx(math.sqrt(np.mean((m.v_cmp - m.v_ref) ** 2)))


def _metric(value):
    z = np.zeros(1)
    return ErrorMetrics(z, z, z, z, z, z, z, z, {"max_abs_d": value, "mean_abs_d": value / 2})


def test_single_cell_table():
    t = aggregate_grid([((10.0, 90.0), _metric(0.4))])
    assert t.values.shape == (1, 1) and t.cell(10.0, 90.0) == 0.4


def test_missing_cell_flagged_not_zero():
    t = aggregate_grid([((10.0, 90.0), _metric(0.4)), ((20.0, 90.0), None)])
    assert t.missing == [(20.0, 90.0)]
    assert math.isnan(t.cell(20.0, 90.0))
    assert ",\n" in t.to_csv() or t.to_csv().rstrip().endswith(",")


def test_duplicate_key_rejected():
    with pytest.raises(AggregationError):
        aggregate_grid([((10.0, 90.0), _metric(0.4)), ((10.0, 90.0), _metric(0.5))])


def test_mirrored_and_mean_tables():
    items = [((10.0, 90.0), _metric(0.4)), ((10.0, -90.0), _metric(0.3)), ((20.0, 90.0), _metric(0.1))]
    neg = aggregate_grid(items, sign=-1)
    assert neg.angles_deg == [90.0] and neg.cell(10.0, 90.0) == 0.3 and neg.folded
    pos = aggregate_grid(items, metric="mean", sign=1)
    assert pos.cell(10.0, 90.0) == 0.2
    assert aggregate_grid(items).argmax() == (10.0, 90.0)


def test_runtime_stats_sample_convention():
    st = runtime_stats([1.0, 2.0, 3.0])
    assert (st["min"], st["max"], st["mean"], st["median"]) == (1.0, 3.0, 2.0, 2.0)
    assert st["std"] == pytest.approx(1.0)
    one = runtime_stats([4.2])
    assert one["std"] == 0.0 and one["single_sample"]
    with pytest.raises(StatsError):
        runtime_stats([])


def test_runtime_table_format():
    txt = format_runtime_table({"low": runtime_stats([1.0, 2.0, 3.0]), "high": runtime_stats([2.0, 4.0])})
    lines = txt.splitlines()
    assert lines[0].split() == ["Statistic", "Low-Fidelity", "High-Fidelity"]
    assert [ln.split()[0] for ln in lines[1:]] == ["Minimum", "Maximum", "Mean", "Median", "Std."]
    assert lines[1].split()[1:] == ["1.00", "s", "2.00", "s"]
    assert lines[3].split()[1:] == ["2.00", "s", "3.00", "s"]
