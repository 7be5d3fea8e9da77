"""Command-line front end: generate, run, compare, study-vehicles, demo.

Output layout under ``--out``::

    manifest.json        tool version, config hash, effective config, timestamps
    scenarios/           one JSON file per scenario
    runs/<backend>/      <scenario_id>__<backend>.json and .csv per run
    reports/             batch index, runtime table, figures, CSVs

Exit codes: 0 success (per-run failures included), 2 config or validation
error, 3 refusal to overwrite existing outputs, 4 I/O error.
"""
import argparse
import copy
import dataclasses
import datetime
import hashlib
import json
import logging
import math
import os
import shutil
import sys

import yaml

from . import __version__
from .backends import ControllerGains
from .cosim import RunConfig, RunLog, run_batch
from .evaluation import format_runtime_table
from .planner import PlannerConfig
from .render import render_reports, vehicle_study_reports
from .scenario import (
    GRID_PRESETS,
    GridTemplate,
    ScenarioFormatError,
    ScenarioValidationError,
    generate_grid,
    grid_preset,
    load_scenario,
    save_scenario,
    scurve_scenario,
)
from .vehicle import CATALOG, CatalogError, load_catalog_overrides

log = logging.getLogger("multifid")

EXIT_OK, EXIT_CONFIG, EXIT_REFUSED, EXIT_IO = 0, 2, 3, 4
VEHICLE_MODELS = ("touring", "offroad", "citycar")

DEFAULTS = {
    "grid": {"preset": "default", "radii": None, "angles_deg": None},
    "scenario": {"dt_plan": 0.1, "max_steps": 600, "lane_width": 3.5, "initial_speed": 0.0},
    "planner": {},
    "controller": {},
    "vehicles": {},
    "run": {"backend": "both", "workers": 1, "substeps": 10, "seed": 0, "noise_std": 0.0, "vehicle_model": None},
    "evaluation": {"metric": "max", "reference": "lofi"},
    "study": {"models": list(VEHICLE_MODELS)},
}


CONFIG_HELP = """\
config file keys (YAML or JSON; flags > file > defaults):
  grid:       preset (default|fine), radii [m], angles_deg [deg]
  scenario:   dt_plan [s], max_steps, lane_width [m], initial_speed [m/s]
  planner:    any PlannerConfig field, e.g. target_speed, k_jerk, lateral_offsets, horizons
  controller: kp, ki, integral_limit, k_v, ld_min, ld_max
  vehicles:   <model_id>: {VehicleParams fields}; overrides or adds catalog entries
  run:        backend (low|high|both), workers, substeps, seed, noise_std, vehicle_model
  evaluation: metric (max|mean), reference (lofi|planned|centerline)
  study:      models [list of vehicle model ids]
"""


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- config


def _merge(base, over, where=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise CliError(EXIT_CONFIG, f"unknown config key {where + k!r}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def load_config(path):
    """Read a YAML or JSON config file (JSON is accepted by the YAML parser)."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise CliError(EXIT_CONFIG, f"config {path} is not valid YAML/JSON: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise CliError(EXIT_CONFIG, f"config {path} must be a mapping at top level")
    return data


def effective_config(args):
    """Defaults, then the config file, then command-line flags."""
    cfg = _merge(DEFAULTS, load_config(getattr(args, "config", None)))
    flag_map = {
        "preset": ("grid", "preset"),
        "backend": ("run", "backend"),
        "workers": ("run", "workers"),
        "substeps": ("run", "substeps"),
        "seed": ("run", "seed"),
        "vehicle_model": ("run", "vehicle_model"),
        "metric": ("evaluation", "metric"),
        "reference": ("evaluation", "reference"),
        "max_steps": ("scenario", "max_steps"),
    }
    for flag, (sec, key) in flag_map.items():
        val = getattr(args, flag, None)
        if val is not None:
            cfg[sec][key] = val
    if getattr(args, "radius", None):
        cfg["grid"]["radii"] = list(args.radius)
    if getattr(args, "angle", None):
        cfg["grid"]["angles_deg"] = list(args.angle)
    if getattr(args, "models", None):
        cfg["study"]["models"] = list(args.models)
    return _resolve(cfg)


def _resolve(cfg):
    """Expand the planner, controller and vehicle sections to every field."""
    try:
        cfg["planner"] = PlannerConfig.from_dict(cfg["planner"]).to_dict()
        cfg["controller"] = dataclasses.asdict(ControllerGains(**cfg["controller"]))
        overrides = load_catalog_overrides(cfg["vehicles"])
    except (TypeError, ValueError, KeyError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid config: {exc}") from exc
    cfg["vehicles"] = {m: p.to_dict() for m, p in sorted({**CATALOG, **overrides}.items())}
    return cfg


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _planner_config(cfg):
    try:
        return PlannerConfig.from_dict(cfg["planner"])
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"planner config: {exc}") from exc


def _overrides(cfg):
    """Vehicle entries that differ from the built-in catalog."""
    return {m: p for m, p in load_catalog_overrides(cfg["vehicles"]).items() if CATALOG.get(m) != p}


def _run_configs(cfg):
    r = cfg["run"]
    backends = {"both": ["low", "high"], "low": ["low"], "high": ["high"]}.get(r["backend"])
    if backends is None:
        raise CliError(EXIT_CONFIG, f"run.backend must be low, high or both, got {r['backend']!r}")
    try:
        overrides = _overrides(cfg)
        gains = ControllerGains(**cfg["controller"])
    except (TypeError, ValueError, KeyError) as exc:
        raise CliError(EXIT_CONFIG, f"vehicle or controller config: {exc}") from exc
    model = r["vehicle_model"]
    if model is not None and model not in CATALOG and model not in overrides:
        raise CliError(EXIT_CONFIG, f"unknown vehicle model {model!r}; valid ids: {', '.join(sorted(CATALOG))}")
    try:
        return [
            RunConfig(
                backend=b, substeps=int(r["substeps"]), seed=int(r["seed"]), noise_std=float(r["noise_std"]),
                planner_configs={"default": _planner_config(cfg)}, vehicle_overrides=overrides,
                vehicle_model=model, gains=gains,
            )
            for b in backends
        ]
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"run config: {exc}") from exc


def _grid(cfg):
    g, sc = cfg["grid"], cfg["scenario"]
    template = GridTemplate()
    template = dataclasses.replace(
        template,
        road=dataclasses.replace(template.road, lane_width=float(sc["lane_width"])),
        agent=dataclasses.replace(template.agent, initial_speed=float(sc["initial_speed"])),
        dt_plan=float(sc["dt_plan"]),
        max_steps=int(sc["max_steps"]),
    )
    if g["radii"] or g["angles_deg"]:
        if not (g["radii"] and g["angles_deg"]):
            raise CliError(EXIT_CONFIG, "grid.radii and grid.angles_deg must be given together")
        return generate_grid([float(r) for r in g["radii"]], [math.radians(float(a)) for a in g["angles_deg"]], template)
    if g["preset"] not in GRID_PRESETS:
        raise CliError(EXIT_CONFIG, f"unknown grid preset {g['preset']!r}; valid: {', '.join(sorted(GRID_PRESETS))}")
    return grid_preset(g["preset"], template)


# ---------------------------------------------------------------- files


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out, command, cfg):
    path = os.path.join(out, "manifest.json")
    created = _now()
    if os.path.exists(path):
        try:
            with open(path) as fh:
                created = json.load(fh).get("created", created)
        except (OSError, ValueError):
            pass
    doc = {
        "tool": "multifid",
        "tool_version": __version__,
        "command": command,
        "config_hash": config_hash(cfg),
        "effective_config": cfg,
        "created": created,
        "updated": _now(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_dir(path, force):
    """Create ``path``; an existing non-empty directory needs ``force`` and is cleared."""
    if os.path.isdir(path) and os.listdir(path):
        if not force:
            raise CliError(EXIT_REFUSED, f"{path} already contains outputs; pass --force to overwrite")
        shutil.rmtree(path)
    os.makedirs(path, exist_ok=True)


def _scenario_paths(source):
    if os.path.isdir(source):
        return sorted(os.path.join(source, f) for f in os.listdir(source) if f.endswith(".json"))
    if os.path.isfile(source):
        return [source]
    raise CliError(EXIT_IO, f"no such scenario file or directory: {source}")


def _load_scenarios(paths):
    out = []
    for p in paths:
        try:
            out.append(load_scenario(p))
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {p}: {exc}") from exc
    return out


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- commands


def cmd_generate(args):
    cfg = effective_config(args)
    scenarios = _grid(cfg)
    sdir = os.path.join(args.out, "scenarios")
    _prepare_dir(sdir, args.force)
    for s in scenarios:
        save_scenario(s, os.path.join(sdir, f"{s.scenario_id}.json"))
    write_manifest(args.out, "generate", cfg)
    print(f"{len(scenarios)} scenarios")
    return EXIT_OK


def execute_runs(out, scenarios, cfg, force):
    run_cfgs = _run_configs(cfg)
    for rc in run_cfgs:
        _prepare_dir(os.path.join(out, "runs", rc.backend), force)
    report = run_batch(scenarios, run_cfgs, worker_count=int(cfg["run"]["workers"]))
    paths = {}
    for lg in report.runs:
        base = os.path.join(out, "runs", lg.backend, f"{lg.scenario_id}__{lg.backend}")
        lg.save(base + ".json")
        with open(base + ".csv", "w") as fh:
            fh.write(lg.to_csv())
        paths[(lg.scenario_id, lg.backend)] = os.path.relpath(base + ".json", out)
    rdir = os.path.join(out, "reports")
    os.makedirs(rdir, exist_ok=True)
    _write_json(os.path.join(rdir, "batch.json"), report.index(paths))
    if report.timing:
        with open(os.path.join(rdir, "runtime.txt"), "w") as fh:
            fh.write(format_runtime_table(report.timing))
    for f in report.failures:
        log.warning("run failed: %s [%s]: %s", f.scenario_id, f.backend, f.error)
    return report


def cmd_run(args):
    cfg = effective_config(args)
    source = args.scenarios or os.path.join(args.out, "scenarios")
    scenarios = _load_scenarios(_scenario_paths(source))
    if not scenarios:
        raise CliError(EXIT_CONFIG, f"no scenarios found in {source}")
    report = execute_runs(args.out, scenarios, cfg, args.force)
    write_manifest(args.out, "run", cfg)
    print(f"{len(report.runs)} runs, {len(report.failures)} failures")
    if report.timing:
        print(format_runtime_table(report.timing), end="")
    return EXIT_OK


def _load_logs(out):
    runs_dir = os.path.join(out, "runs")
    if not os.path.isdir(runs_dir):
        raise CliError(EXIT_IO, f"no run logs under {runs_dir}")
    logs = []
    for backend in sorted(os.listdir(runs_dir)):
        bdir = os.path.join(runs_dir, backend)
        for f in sorted(os.listdir(bdir)):
            if f.endswith(".json"):
                try:
                    logs.append(RunLog.load(os.path.join(bdir, f)))
                except (OSError, ValueError, KeyError) as exc:
                    raise CliError(EXIT_IO, f"cannot read run log {f}: {exc}") from exc
    return logs


def compare_outputs(out, cfg, force, subdir="grid"):
    logs = _load_logs(out)
    sdir = os.path.join(out, "scenarios")
    scenarios = {}
    if os.path.isdir(sdir):
        scenarios = {s.scenario_id: s for s in _load_scenarios(_scenario_paths(sdir))}
    rdir = os.path.join(out, "reports", subdir)
    _prepare_dir(rdir, force)
    ev = cfg["evaluation"]
    if ev["metric"] not in ("max", "mean"):
        raise CliError(EXIT_CONFIG, f"evaluation.metric must be max or mean, got {ev['metric']!r}")
    res = render_reports(logs, rdir, scenarios, metric=ev["metric"], reference=ev["reference"])
    doc = {
        "metric": ev["metric"],
        "reference": ev["reference"],
        "scenarios": {sid: m.aggregates for sid, m in sorted(res["metrics"].items())},
        "gaps": res["gaps"],
        "heatmaps": {
            name: {"missing": [list(c) for c in t.missing], "argmax": list(t.argmax())}
            for name, t in res["heatmap"].items()
            if t.values.size and not all(math.isnan(v) for v in t.values.flat)
        },
    }
    _write_json(os.path.join(rdir, "report.json"), doc)
    return res


def cmd_compare(args):
    cfg = effective_config(args)
    res = compare_outputs(args.out, cfg, args.force)
    write_manifest(args.out, "compare", cfg)
    print(f"{len(res['metrics'])} comparisons, {len(res['gaps'])} gaps")
    for g in res["gaps"]:
        print(f"  gap: {g['scenario_id']} has no {g['missing']}-fidelity run")
    return EXIT_OK


def vehicle_study(out, cfg, scenario, force):
    models = cfg["study"]["models"]
    overrides = _overrides(cfg)
    unknown = [m for m in models if m not in CATALOG and m not in overrides]
    if unknown:
        raise CliError(
            EXIT_CONFIG,
            f"unknown vehicle model(s) {', '.join(unknown)}; valid ids: {', '.join(sorted(set(CATALOG) | set(overrides)))}",
        )
    base = _run_configs(dict(cfg, run=dict(cfg["run"], backend="both", vehicle_model=None)))
    lo_cfg, hi_cfg = base
    rdir = os.path.join(out, "reports", "vehicles")
    _prepare_dir(rdir, force)
    cfgs = [lo_cfg] + [dataclasses.replace(hi_cfg, vehicle_model=m) for m in models]
    report = run_batch([scenario], cfgs, worker_count=int(cfg["run"]["workers"]))
    if report.failures:
        raise CliError(EXIT_CONFIG, f"vehicle study run failed: {report.failures[0].error}")
    lo = next(r for r in report.runs if r.backend == "low")
    by_model = {r.vehicle_models[r.agent_ids()[0]]: r for r in report.runs if r.backend == "high"}
    by_model = {m: by_model[m] for m in models}
    res = vehicle_study_reports(lo, by_model, rdir, scenario)
    ranking = sorted(models, key=lambda m: res["metrics"][m].aggregates["max_abs_d"])
    doc = {
        "scenario_id": scenario.scenario_id,
        "models": {
            m: dict(res["metrics"][m].aggregates, fallback_steps=by_model[m].fallback_count(),
                    termination=by_model[m].termination[by_model[m].agent_ids()[0]])
            for m in models
        },
        "max_abs_d_ranking": ranking,
    }
    _write_json(os.path.join(rdir, "report.json"), doc)
    return doc


def cmd_study_vehicles(args):
    cfg = effective_config(args)
    if args.scenario:
        scenario = _load_scenarios([args.scenario])[0]
    else:
        scenario = scurve_scenario()
    doc = vehicle_study(args.out, cfg, scenario, args.force)
    write_manifest(args.out, "study-vehicles", cfg)
    print("max |d| ranking (smallest first):")
    for m in doc["max_abs_d_ranking"]:
        a = doc["models"][m]
        print(f"  {m:8s} max|d| {a['max_abs_d']:.3f} m  rmse v {a['rmse_v']:.3f} m/s")
    return EXIT_OK


def cmd_demo(args):
    """Grid study on both backends, vehicle study and runtime table in one go."""
    cfg = effective_config(args)
    cfg["run"]["backend"] = "both"
    scenarios = _grid(cfg)
    sdir = os.path.join(args.out, "scenarios")
    _prepare_dir(sdir, args.force)
    for s in scenarios:
        save_scenario(s, os.path.join(sdir, f"{s.scenario_id}.json"))
    print(f"{len(scenarios)} scenarios")
    report = execute_runs(args.out, scenarios, cfg, args.force)
    print(f"{len(report.runs)} runs, {len(report.failures)} failures")
    res = compare_outputs(args.out, cfg, args.force)
    t = res["heatmap"].get("heatmap")
    if t is not None:
        r, a = t.argmax()
        print(f"largest {t.metric} |d| at r={r:g} m, angle={a:g} deg")
    doc = vehicle_study(args.out, cfg, scurve_scenario(), args.force)
    print("vehicle ranking by max |d|: " + " < ".join(doc["max_abs_d_ranking"]))
    if report.timing:
        print(format_runtime_table(report.timing), end="")
    write_manifest(args.out, "demo", cfg)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(
        prog="multifid", description=__doc__.split("\n")[0], epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"multifid {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, workers=False):
        sp.epilog = CONFIG_HELP
        sp.formatter_class = argparse.RawDescriptionHelpFormatter
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="YAML or JSON config file; flags take precedence")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if workers:
            sp.add_argument("--workers", type=int, help="parallel worker processes (default 1)")
            sp.add_argument("--substeps", type=int, help="high-fidelity integration substeps per planning step")
            sp.add_argument("--seed", type=int, help="seed for the optional actuation noise")

    g = sub.add_parser("generate", help="write a scenario grid")
    common(g)
    g.add_argument("--preset", help=f"grid preset: {', '.join(sorted(GRID_PRESETS))}")
    g.add_argument("--radius", type=float, action="append", help="curve radius in m (repeatable)")
    g.add_argument("--angle", type=float, action="append", help="turning angle in degrees (repeatable)")
    g.add_argument("--max-steps", type=int, help="step limit stored in each scenario")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run scenarios on one or both backends")
    common(r, workers=True)
    r.add_argument("scenarios", nargs="?", help="scenario file or directory (default OUT/scenarios)")
    r.add_argument("--backend", choices=("low", "high", "both"), help="execution fidelity (default both)")
    r.add_argument("--vehicle-model", help="replace every agent's vehicle model")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="compare low and high fidelity runs and render reports")
    common(c)
    c.add_argument("--metric", choices=("max", "mean"), help="heatmap aggregate of |d| (default max)")
    c.add_argument("--reference", choices=("lofi", "planned", "centerline"),
                   help="baseline for d (default lofi)")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("study-vehicles", help="compare vehicle models on one scenario")
    common(s, workers=True)
    s.add_argument("--scenario", help="scenario file (default: built-in S-curve)")
    s.add_argument("--models", nargs="+", help=f"vehicle models (default: {' '.join(VEHICLE_MODELS)})")
    s.set_defaults(func=cmd_study_vehicles)

    d = sub.add_parser("demo", help="grid study, vehicle study and runtime table")
    common(d, workers=True)
    d.add_argument("--preset", help=f"grid preset: {', '.join(sorted(GRID_PRESETS))}")
    d.add_argument("--metric", choices=("max", "mean"), help="heatmap aggregate of |d| (default max)")
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ScenarioValidationError, ScenarioFormatError, CatalogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
