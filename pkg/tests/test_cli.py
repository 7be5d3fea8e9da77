import json
import os

import pytest

from multifid import cli, kernels


def run(*argv):
    return cli.main([str(a) for a in argv])


def _runs(out, backend):
    d = os.path.join(out, "runs", backend)
    return sorted(f for f in os.listdir(d) if f.endswith(".json"))


def _strip_clock(doc):
    doc.pop("wall_clock_seconds", None)
    return doc


def test_generate_fine_preset_prints_count(tmp_path, capsys):
    assert run("generate", "--out", tmp_path, "--preset", "fine") == 0
    assert capsys.readouterr().out.strip() == "78 scenarios"
    assert len(os.listdir(tmp_path / "scenarios")) == 78


def test_generate_single_and_refuse_overwrite(tmp_path):
    assert run("generate", "--out", tmp_path, "--radius", 10, "--angle", 90) == 0
    assert os.listdir(tmp_path / "scenarios") == ["turn_r10_a+90.json"]
    assert run("generate", "--out", tmp_path, "--radius", 10, "--angle", 90) == 3
    assert run("generate", "--out", tmp_path, "--radius", 10, "--angle", 90, "--force") == 0


def test_manifest(tmp_path):
    run("generate", "--out", tmp_path, "--radius", 10, "--angle", 90)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert {"tool_version", "config_hash", "effective_config", "created", "updated"} <= set(man)
    assert man["effective_config"]["planner"]["target_speed"] == 10.0
    assert man["effective_config"]["grid"]["radii"] == [10.0]


def test_config_validation_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("planner:\n  bogus: 1\n")
    assert run("generate", "--out", tmp_path / "o", "--config", bad) == 2
    bad.write_text("unknown_section: {}\n")
    assert run("generate", "--out", tmp_path / "o", "--config", bad) == 2
    bad.write_text("grid: [1, 2\n")
    assert run("generate", "--out", tmp_path / "o", "--config", bad) == 2
    assert run("generate", "--out", tmp_path / "o", "--config", tmp_path / "missing.yaml") == 4


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": {"radii": [20], "angles_deg": [30]}, "run": {"backend": "low"}}))
    out = tmp_path / "o"
    assert run("generate", "--out", out, "--config", cfg, "--radius", 15) == 0
    assert os.listdir(out / "scenarios") == ["turn_r15_a+30.json"]
    assert run("run", "--out", out, "--config", cfg) == 0
    assert not (out / "runs" / "high").exists()
    assert run("run", "--out", out, "--config", cfg, "--backend", "high", "--force") == 0
    assert _runs(out, "high") == ["turn_r15_a+30__high.json"]


def test_run_both_and_worker_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, workers in ((a, 1), (b, 3)):
        run("generate", "--out", out, "--radius", 20, "--angle", 60, "--angle", -30)
        assert run("run", "--out", out, "--workers", workers) == 0
    assert _runs(a, "low") == ["turn_r20_a+60__low.json", "turn_r20_a-30__low.json"]
    assert len(_runs(a, "high")) == 2
    for backend in ("low", "high"):
        for f in _runs(a, backend):
            da = _strip_clock(json.loads((a / "runs" / backend / f).read_text()))
            db = _strip_clock(json.loads((b / "runs" / backend / f).read_text()))
            assert da == db
    index = json.loads((a / "reports" / "batch.json").read_text())
    assert len(index["runs"]) == 4 and set(index["timing"]) == {"low", "high"}
    assert (a / "reports" / "runtime.txt").read_text().startswith("Statistic")


def test_dynamics_error_reported_with_exit_zero(tmp_path, monkeypatch):
    def broken(*args):
        return (float("nan"),) * 10

    monkeypatch.setattr(kernels, "hifi_integrate", broken)
    run("generate", "--out", tmp_path, "--radius", 20, "--angle", 60)
    assert run("run", "--out", tmp_path, "--backend", "high") == 0
    index = json.loads((tmp_path / "reports" / "batch.json").read_text())
    assert index["runs"][0]["status"] == "dynamics_error"
    assert index["runs"][0]["termination"] == {"1": "dynamics_error"}


def test_compare_heatmap_gaps_and_mean(tmp_path, capsys):
    run("generate", "--out", tmp_path, "--radius", 20, "--angle", 60, "--angle", -60)
    run("run", "--out", tmp_path)
    os.remove(tmp_path / "runs" / "high" / "turn_r20_a-60__high.json")
    capsys.readouterr()
    assert run("compare", "--out", tmp_path) == 0
    assert "1 gaps" in capsys.readouterr().out
    rep = json.loads((tmp_path / "reports" / "grid" / "report.json").read_text())
    assert rep["gaps"] == [{"scenario_id": "turn_r20_a-60", "missing": "high"}]
    assert (tmp_path / "reports" / "grid" / "heatmap.csv").exists()
    assert (tmp_path / "reports" / "grid" / "heatmap.svg").exists()
    assert run("compare", "--out", tmp_path) == 3
    assert run("compare", "--out", tmp_path, "--metric", "mean", "--force") == 0
    rep = json.loads((tmp_path / "reports" / "grid" / "report.json").read_text())
    assert rep["metric"] == "mean"


def test_compare_without_runs_is_io_error(tmp_path):
    assert run("compare", "--out", tmp_path) == 4


def test_study_vehicles_unknown_model(tmp_path, capsys):
    assert run("study-vehicles", "--out", tmp_path, "--models", "touring", "bus") == 2
    err = capsys.readouterr().err
    assert "bus" in err and "citycar" in err and "offroad" in err and "touring" in err


def test_study_vehicles_report(tmp_path):
    assert run("study-vehicles", "--out", tmp_path, "--models", "touring", "citycar") == 0
    rep = json.loads((tmp_path / "reports" / "vehicles" / "report.json").read_text())
    assert sorted(rep["max_abs_d_ranking"]) == ["citycar", "touring"]
    d = {m: rep["models"][m]["max_abs_d"] for m in rep["models"]}
    assert rep["max_abs_d_ranking"] == sorted(d, key=d.get)
    assert (tmp_path / "reports" / "vehicles" / "scurve__citycar__d.csv").exists()


@pytest.mark.parametrize("sub", ["generate", "run", "compare", "study-vehicles", "demo"])
def test_help_lists_flags(sub, capsys):
    with pytest.raises(SystemExit) as exc:
        run(sub, "--help")
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "--out" in out and "--config" in out and "--force" in out and "config file keys" in out
