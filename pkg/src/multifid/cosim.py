"""Synchronized multi-agent co-simulation loop and batch runner."""
import concurrent.futures
import csv
import dataclasses
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field

from .backends import ControllerGains, DynamicsError, HifiBackend, LofiBackend
from .evaluation import runtime_stats
from .geometry import ProjectionError
from .planner import (
    FallbackRequired,
    GeometryError,
    PlannedTrajectory,
    PlannerConfig,
    emergency_brake_trajectory,
    footprints_overlap,
    frenet_state_for_planning,
    plan,
    predict_obstacles,
)
from .vehicle import VehicleState, vehicle_catalog

log = logging.getLogger(__name__)

BACKENDS = ("low", "high")
TERMINATIONS = ("goal_reached", "timeout", "off_road", "collision", "dynamics_error")


@dataclass(frozen=True)
class RunConfig:
    backend: str = "low"
    dt_plan: float | None = None  # None: use the scenario's
    substeps: int = 10
    max_steps: int | None = None  # None: use the scenario's
    goal_speed_threshold: float | None = None
    seed: int = 0
    noise_std: float = 0.0
    planner_configs: dict = field(default_factory=lambda: {"default": PlannerConfig()})
    vehicle_overrides: dict = field(default_factory=dict)
    vehicle_model: str | None = None  # replaces every agent's model when set
    gains: ControllerGains = field(default_factory=ControllerGains)
    snapshot_samples: int = 5

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.dt_plan is not None and not self.dt_plan > 0.0:
            raise ValueError("dt_plan must be > 0")
        if self.max_steps is not None and self.max_steps <= 0:
            raise ValueError("max_steps must be > 0")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    def to_dict(self):
        return {
            "backend": self.backend,
            "dt_plan": self.dt_plan,
            "substeps": self.substeps,
            "max_steps": self.max_steps,
            "goal_speed_threshold": self.goal_speed_threshold,
            "seed": self.seed,
            "noise_std": self.noise_std,
            "planner_configs": {k: v.to_dict() for k, v in sorted(self.planner_configs.items())},
            "vehicle_overrides": {k: v.to_dict() for k, v in sorted(self.vehicle_overrides.items())},
            "vehicle_model": self.vehicle_model,
            "gains": dataclasses.asdict(self.gains),
            "snapshot_samples": self.snapshot_samples,
        }


@dataclass(frozen=True, eq=False)
class AgentStep:
    planned: dict  # first samples of the trajectory planned at the previous boundary
    executed: VehicleState
    command: dict | None
    status: str  # "ok" or "fallback"

    def to_dict(self):
        return {
            "planned": self.planned,
            "executed": self.executed.to_dict(),
            "command": self.command,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["planned"], VehicleState.from_dict(d["executed"]), d["command"], d["status"])


@dataclass(frozen=True, eq=False)
class StepRecord:
    step_index: int
    t: float
    agents: dict  # agent_id -> AgentStep


@dataclass(eq=False)
class RunLog:
    scenario_id: str
    backend: str
    config: dict
    dt_plan: float
    initial_states: dict
    records: list
    termination: dict
    wall_clock_seconds: float = 0.0
    vehicle_models: dict = field(default_factory=dict)
    error: str | None = None

    def agent_ids(self):
        return sorted(self.initial_states)

    def executed(self, agent_id):
        """Executed states of one agent, starting with its initial state."""
        out = [self.initial_states[agent_id]]
        out.extend(r.agents[agent_id].executed for r in self.records if agent_id in r.agents)
        return out

    def planned_next(self, agent_id):
        """For each step, the state planned for that step's time (sample 1 of the previous plan)."""
        out = []
        for r in self.records:
            if agent_id in r.agents:
                p = r.agents[agent_id].planned
                out.append({k: p[k][1] for k in p})
        return out

    def fallback_count(self, agent_id=None):
        return sum(
            1 for r in self.records for aid, a in r.agents.items()
            if a.status == "fallback" and (agent_id is None or aid == agent_id)
        )

    def to_dict(self, include_wall_clock=True):
        d = {
            "scenario_id": self.scenario_id,
            "backend": self.backend,
            "config": self.config,
            "dt_plan": self.dt_plan,
            "vehicle_models": {str(k): v for k, v in sorted(self.vehicle_models.items())},
            "initial_states": {str(k): v.to_dict() for k, v in sorted(self.initial_states.items())},
            "records": [
                {
                    "step_index": r.step_index,
                    "t": r.t,
                    "agents": {str(k): a.to_dict() for k, a in sorted(r.agents.items())},
                }
                for r in self.records
            ],
            "termination": {str(k): v for k, v in sorted(self.termination.items())},
            "error": self.error,
        }
        if include_wall_clock:
            d["wall_clock_seconds"] = self.wall_clock_seconds
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            scenario_id=d["scenario_id"],
            backend=d["backend"],
            config=d["config"],
            dt_plan=d["dt_plan"],
            initial_states={int(k): VehicleState.from_dict(v) for k, v in d["initial_states"].items()},
            records=[
                StepRecord(r["step_index"], r["t"], {int(k): AgentStep.from_dict(a) for k, a in r["agents"].items()})
                for r in d["records"]
            ],
            termination={int(k): v for k, v in d["termination"].items()},
            wall_clock_seconds=d.get("wall_clock_seconds", 0.0),
            vehicle_models={int(k): v for k, v in d.get("vehicle_models", {}).items()},
            error=d.get("error"),
        )

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([
            "step", "t", "agent", "planned_x", "planned_y", "planned_heading", "planned_v",
            "executed_x", "executed_y", "executed_heading", "executed_v", "status",
        ])
        for r in self.records:
            for aid, a in sorted(r.agents.items()):
                p = a.planned
                e = a.executed
                w.writerow([
                    r.step_index, repr(r.t), aid, repr(p["x"][1]), repr(p["y"][1]), repr(p["heading"][1]),
                    repr(p["v"][1]), repr(e.x), repr(e.y), repr(e.heading), repr(e.v), a.status,
                ])
        return buf.getvalue()


def _make_backend(cfg: RunConfig, agent_id):
    if cfg.backend == "low":
        return LofiBackend()
    return HifiBackend(cfg.substeps, cfg.gains, cfg.noise_std, seed=cfg.seed * 1000003 + agent_id)


def run_scenario(scenario, cfg: RunConfig) -> RunLog:
    """Run the plan -> execute one step -> feed back loop until every agent terminates."""
    start = time.perf_counter()
    dt = cfg.dt_plan if cfg.dt_plan is not None else scenario.dt_plan
    max_steps = cfg.max_steps if cfg.max_steps is not None else scenario.max_steps
    agents = sorted(scenario.agents, key=lambda a: a.agent_id)
    ids = [a.agent_id for a in agents]
    spec = {a.agent_id: a for a in agents}
    params = {a.agent_id: vehicle_catalog(cfg.vehicle_model or a.vehicle_model, cfg.vehicle_overrides) for a in agents}
    lanelets = {a.agent_id: scenario.lanelets[a.lanelet] for a in agents}
    pcfg = {}
    for a in agents:
        if a.planner_config not in cfg.planner_configs:
            raise KeyError(f"agent {a.agent_id}: unknown planner config {a.planner_config!r}")
        pcfg[a.agent_id] = cfg.planner_configs[a.planner_config]
    backends = {aid: _make_backend(cfg, aid) for aid in ids}
    states = {aid: backends[aid].spawn(lanelets[aid], spec[aid]) for aid in ids}
    initial = dict(states)
    active = list(ids)
    previous = {aid: None for aid in ids}  # trajectory each agent followed last step
    termination = {}
    records = []
    error = None

    for k in range(max_steps):
        t_now = k * dt
        observed = {aid: states[aid] for aid in active}
        trajs = {}
        status = {}
        for aid in active:
            st = states[aid]
            pc = pcfg[aid]
            lanelet = lanelets[aid]
            horizon = max(pc.horizons)
            others = [(o, observed[o], params[o]) for o in active if o != aid]
            preds = predict_obstacles(others, horizon, dt)
            try:
                fs = frenet_state_for_planning(
                    lanelet.reference_path, st, pc, max_distance=2.0 * lanelet.lane_width,
                    previous=previous[aid],
                )
                res = plan(lanelet.reference_path, fs, pc, preds, dt=dt, lane_width=lanelet.lane_width,
                           t0=t_now, initial_state=st)
                trajs[aid] = res.trajectory
                status[aid] = "ok"
            except (FallbackRequired, GeometryError, ProjectionError) as exc:
                log.debug("agent %s fallback at t=%.1f: %s", aid, t_now, exc)
                trajs[aid] = emergency_brake_trajectory(st, params[aid].a_brake_max, horizon, dt)
                status[aid] = "fallback"

        new_states = {}
        commands = {}
        try:
            for aid in active:
                new, cmd = backends[aid].step(states[aid], trajs[aid], params[aid], dt)
                new_states[aid] = dataclasses.replace(new, t=(k + 1) * dt)
                commands[aid] = None if cmd is None else dataclasses.asdict(cmd)
        except DynamicsError as exc:
            error = str(exc)
            for aid in active:
                termination[aid] = "dynamics_error"
            active = []
            break

        records.append(
            StepRecord(
                step_index=k + 1,
                t=(k + 1) * dt,
                agents={
                    aid: AgentStep(trajs[aid].to_dict(cfg.snapshot_samples), new_states[aid], commands[aid], status[aid])
                    for aid in active
                },
            )
        )
        states.update(new_states)
        previous.update(trajs)

        ended = {}
        for i, aid in enumerate(active):
            for other in active[i + 1:]:
                pa, pb = params[aid], params[other]
                sa, sb = states[aid], states[other]
                if footprints_overlap(sa.x, sa.y, sa.heading, (pa.length, pa.width, pa.wheelbase),
                                      sb.x, sb.y, sb.heading, (pb.length, pb.width, pb.wheelbase)):
                    ended[aid] = ended[other] = "collision"
        for aid in active:
            if aid in ended:
                continue
            st = states[aid]
            lanelet = lanelets[aid]
            try:
                _, d, _, _, _ = lanelet.reference_path.project(st.x, st.y, max_distance=2.0 * lanelet.lane_width)
                off = abs(d) > lanelet.lane_width
            except ProjectionError:
                off = True
            if off:
                ended[aid] = "off_road"
                continue
            goal = spec[aid].goal
            if goal.contains(st.x, st.y) and (
                cfg.goal_speed_threshold is None or st.v <= cfg.goal_speed_threshold
            ):
                ended[aid] = "goal_reached"
        termination.update(ended)
        active = [aid for aid in active if aid not in ended]
        if not active:
            break
    for aid in active:
        termination[aid] = "timeout"

    return RunLog(
        scenario_id=scenario.scenario_id,
        backend=cfg.backend,
        config=cfg.to_dict(),
        dt_plan=dt,
        initial_states=initial,
        records=records,
        termination=termination,
        wall_clock_seconds=time.perf_counter() - start,
        vehicle_models={aid: params[aid].model_id for aid in ids},
        error=error,
    )


# ---------------------------------------------------------------- batch


@dataclass(frozen=True)
class RunFailure:
    scenario_id: str
    backend: str
    error: str


@dataclass(eq=False)
class BatchReport:
    runs: list
    failures: list
    timing: dict  # backend -> stats dict

    def index(self, paths=None):
        """Index document; ``paths`` maps (scenario_id, backend) to a log file."""
        paths = paths or {}
        return {
            "runs": [
                {
                    "scenario_id": r.scenario_id,
                    "backend": r.backend,
                    "termination": {str(k): v for k, v in sorted(r.termination.items())},
                    "status": "dynamics_error" if r.error else "ok",
                    "fallback_steps": r.fallback_count(),
                    "steps": len(r.records),
                    "wall_clock_seconds": r.wall_clock_seconds,
                    "log": paths.get((r.scenario_id, r.backend)),
                }
                for r in self.runs
            ],
            "failures": [dataclasses.asdict(f) for f in self.failures],
            "timing": self.timing,
        }


def _run_one(job):
    scenario, cfg = job
    try:
        return run_scenario(scenario, cfg)
    except Exception as exc:  # recorded per run; the batch continues
        return RunFailure(scenario.scenario_id, cfg.backend, f"{type(exc).__name__}: {exc}")


def run_batch(scenarios, run_configs, worker_count=1):
    """Run every scenario under every config; output order is (scenario_id, backend)."""
    scenarios = list(scenarios)
    run_configs = list(run_configs)
    if not scenarios:
        raise ValueError("scenario list is empty")
    if not run_configs:
        raise ValueError("run config list is empty")
    jobs = [(s, c) for s in scenarios for c in run_configs]
    if worker_count <= 1:
        results = [_run_one(j) for j in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=worker_count) as pool:
            results = list(pool.map(_run_one, jobs))
    runs = [r for r in results if isinstance(r, RunLog)]
    failures = [r for r in results if isinstance(r, RunFailure)]
    runs.sort(key=lambda r: (r.scenario_id, r.backend))
    failures.sort(key=lambda f: (f.scenario_id, f.backend))
    timing = {}
    for backend in sorted({r.backend for r in runs}):
        times = [r.wall_clock_seconds for r in runs if r.backend == backend and r.error is None]
        if times:
            timing[backend] = runtime_stats(times)
    return BatchReport(runs, failures, timing)


# ---------------------------------------------------------------- parity


@dataclass(frozen=True)
class ParityReport:
    scenario_id: str
    deltas: dict  # agent_id -> (position delta m, heading delta rad)

    @property
    def max_delta(self):
        return max((max(p, h) for p, h in self.deltas.values()), default=0.0)

    @property
    def passed(self):
        return self.max_delta == 0.0


def check_instantiation_parity(scenario) -> ParityReport:
    """Spawn every agent in both backends and compare the initial poses."""
    deltas = {}
    lo, hi = LofiBackend(), HifiBackend()
    for a in scenario.agents:
        lanelet = scenario.lanelets[a.lanelet]
        s_lo = lo.spawn(lanelet, a)
        s_hi = hi.spawn(lanelet, a)
        deltas[a.agent_id] = (
            math.hypot(s_lo.x - s_hi.x, s_lo.y - s_hi.y),
            abs(s_lo.heading - s_hi.heading),
        )
    return ParityReport(scenario.scenario_id, deltas)


def trajectory_from_snapshot(snapshot) -> PlannedTrajectory:
    return PlannedTrajectory.from_dict(snapshot)
