import csv
import io
import math

import pytest

from multifid.cosim import RunConfig, run_batch
from multifid.render import line_chart_svg, render_reports, vehicle_study_reports
from multifid.scenario import generate_grid, scurve_scenario


@pytest.fixture(scope="module")
def batch():
    scen = generate_grid([15.0], [math.radians(60), math.radians(-60)])
    cfg = [RunConfig(backend="low", max_steps=120), RunConfig(backend="high", max_steps=120)]
    return scen, run_batch(scen, cfg)


def _read(path):
    with open(path) as fh:
        return fh.read()


def test_grid_outputs_and_csv_schema(batch, tmp_path):
    scen, rep = batch
    res = render_reports(rep.runs, tmp_path, {s.scenario_id: s for s in scen})
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "heatmap.csv" in names and "heatmap.svg" in names
    for sid in ("turn_r15_a+60", "turn_r15_a-60"):
        for suffix in ("__high__d.csv", "__high__v.csv", "__high__d.svg", "__high__v.svg", "__high.svg"):
            assert sid + suffix in names
    rows = list(csv.reader(io.StringIO(_read(tmp_path / "turn_r15_a+60__high__d.csv"))))
    assert rows[0] == ["s_m", "d_m"]
    rows = list(csv.reader(io.StringIO(_read(tmp_path / "turn_r15_a+60__high__v.csv"))))
    assert rows[0] == ["t_s", "v_ref_mps", "v_cmp_mps"]
    # per-scenario aggregate recomputed from the CSV
    d = [abs(float(r[1])) for r in csv.reader(io.StringIO(_read(tmp_path / "turn_r15_a+60__high__d.csv")))
         if r[0] != "s_m"]
    assert max(d) == res["metrics"]["turn_r15_a+60"].aggregates["max_abs_d"]
    assert res["gaps"] == []


def test_rerender_is_identical(batch, tmp_path):
    scen, rep = batch
    smap = {s.scenario_id: s for s in scen}
    a = render_reports(rep.runs, tmp_path / "a", smap)
    render_reports(rep.runs, tmp_path / "b", smap)
    for p in a["files"]:
        q = p.replace(str(tmp_path / "a"), str(tmp_path / "b"))
        assert _read(p) == _read(q)


def test_missing_high_run_is_a_gap(batch, tmp_path):
    scen, rep = batch
    logs = [lg for lg in rep.runs if not (lg.scenario_id == "turn_r15_a-60" and lg.backend == "high")]
    res = render_reports(logs, tmp_path, {s.scenario_id: s for s in scen})
    assert res["gaps"] == [{"scenario_id": "turn_r15_a-60", "missing": "high"}]
    assert res["heatmap"]["heatmap"].missing == [(15.0, -60.0)]


def test_vehicle_study_files(tmp_path):
    sc = scurve_scenario()
    cfgs = [RunConfig(backend="low", max_steps=60)] + [
        RunConfig(backend="high", max_steps=60, vehicle_model=m) for m in ("touring", "citycar")]
    rep = run_batch([sc], cfgs)
    lo = [r for r in rep.runs if r.backend == "low"][0]
    his = {r.vehicle_models[1]: r for r in rep.runs if r.backend == "high"}
    res = vehicle_study_reports(lo, his, tmp_path, sc)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"scurve__touring__d.csv", "scurve__citycar__v.csv", "scurve__vehicles__d.svg",
            "scurve__vehicles__v.svg", "scurve__vehicles.svg"} <= names
    assert set(res["metrics"]) == {"touring", "citycar"}


def test_line_chart_is_svg():
    svg = line_chart_svg([("a", [0, 1, 2], [0, 1, 0])], "x", "y", "t")
    assert svg.startswith("<svg") and "polyline" in svg
