"""Scenario data model, procedural turn-road compiler and grid generation."""
import dataclasses
import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ReferencePath, advance_pose, wrap_angle
from .vehicle import VehicleState

FORMAT_VERSION = 1
UNITS = {"length": "m", "angle": "deg", "time": "s", "speed": "m/s"}

DEFAULT_RADII = (10.0, 15.0, 20.0, 30.0, 50.0, 80.0)
DEFAULT_ANGLES_DEG = (-120.0, -90.0, -60.0, -30.0, 0.0, 30.0, 60.0, 90.0, 120.0)
FINE_ANGLES_DEG = tuple(float(a) for a in range(-120, 121, 20))


class ScenarioValidationError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class ScenarioFormatError(ValueError):
    pass


class PlacementError(ValueError):
    pass


def _quantize_angle(rad):
    # angles round-trip through degrees in files; quantize so that is exact
    return math.radians(round(math.degrees(rad), 9))


@dataclass(frozen=True)
class TurnSpec:
    """An additional turn appended after a road's exit straight."""

    radius: float
    turn_angle: float
    exit_length: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "turn_angle", _quantize_angle(self.turn_angle))
        if not self.radius > 0.0:
            raise ScenarioValidationError("extra_turns.radius", "must be > 0")
        if self.exit_length < 0.0:
            raise ScenarioValidationError("extra_turns.exit_length", "must be >= 0")


@dataclass(frozen=True)
class RoadSpec:
    entry_length: float = 40.0
    radius: float | None = None
    turn_angle: float = 0.0
    exit_length: float = 40.0
    lane_width: float = 3.5
    sample_step: float = 0.5
    x0: float = 0.0
    y0: float = 0.0
    heading0: float = 0.0
    extra_turns: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "turn_angle", _quantize_angle(self.turn_angle))
        object.__setattr__(self, "heading0", _quantize_angle(self.heading0))
        object.__setattr__(self, "extra_turns", tuple(self.extra_turns))
        if self.entry_length < 0.0:
            raise ScenarioValidationError("entry_length", "must be >= 0")
        if self.exit_length < 0.0:
            raise ScenarioValidationError("exit_length", "must be >= 0")
        if self.radius is not None and not self.radius > 0.0:
            raise ScenarioValidationError("radius", "must be > 0 when present")
        if self.turn_angle != 0.0 and self.radius is None:
            raise ScenarioValidationError("radius", "required when turn_angle is nonzero")
        if not self.sample_step > 0.0:
            raise ScenarioValidationError("sample_step", "must be > 0")
        radii = [t.radius for t in self.extra_turns]
        if self.radius is not None:
            radii.append(self.radius)
        for r in radii:
            if self.sample_step > r / 2.0:
                raise ScenarioValidationError("sample_step", f"must be <= radius/2 ({r / 2.0:g} m)")
        if not 2.0 <= self.lane_width <= 6.0:
            raise ScenarioValidationError("lane_width", "must lie in [2.0, 6.0] m")

    def pieces(self):
        """``(curvature, length)`` of each constant-curvature piece in order."""
        out = [(0.0, self.entry_length)]
        if self.turn_angle != 0.0:
            out.append((math.copysign(1.0 / self.radius, self.turn_angle), self.radius * abs(self.turn_angle)))
        out.append((0.0, self.exit_length))
        for turn in self.extra_turns:
            if turn.turn_angle != 0.0:
                out.append((math.copysign(1.0 / turn.radius, turn.turn_angle), turn.radius * abs(turn.turn_angle)))
            out.append((0.0, turn.exit_length))
        return [p for p in out if p[1] > 0.0]

    @property
    def length(self):
        return sum(length for _, length in self.pieces())


@dataclass(frozen=True, eq=False)
class Centerline:
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray
    s: np.ndarray

    def __len__(self):
        return self.x.shape[0]


@dataclass(frozen=True, eq=False)
class Lanelet:
    left_boundary: np.ndarray
    right_boundary: np.ndarray
    centerline: Centerline
    lane_width: float

    @functools.cached_property
    def reference_path(self):
        return ReferencePath.from_centerline(self.centerline)

    @property
    def length(self):
        return float(self.centerline.s[-1])


@dataclass(frozen=True)
class GoalRegion:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0.0:
            raise ScenarioValidationError("goal.radius", "must be > 0")

    def contains(self, x, y):
        return math.hypot(x - self.center[0], y - self.center[1]) <= self.radius


@dataclass(frozen=True)
class AgentSpec:
    agent_id: int
    initial_s: float = 5.0
    initial_lateral_offset: float = 0.0
    initial_speed: float = 0.0
    vehicle_model: str = "touring"
    goal: GoalRegion | None = None
    planner_config: str = "default"
    lanelet: int = 0


def build_turn_road(spec: RoadSpec) -> Lanelet:
    """Compile a road spec into a sampled lanelet.

    Every constant-curvature piece is sampled on its own, so piece joins are
    sample points and each segment between samples is a pure straight or a
    pure arc.
    """
    pieces = spec.pieces()
    if not pieces:
        raise ScenarioValidationError("entry_length", "road has zero total length")
    xs, ys, hs, ks, ss = [spec.x0], [spec.y0], [spec.heading0], [pieces[0][0]], [0.0]
    x, y, h, s = spec.x0, spec.y0, spec.heading0, 0.0
    for p, (k, length) in enumerate(pieces):
        n = max(1, math.ceil(length / spec.sample_step - 1e-9))
        u = length * np.arange(1, n + 1) / n
        px, py, ph = advance_pose(x, y, h, k, u)
        xs.extend(px.tolist())
        ys.extend(py.tolist())
        hs.extend(ph.tolist())
        ss.extend((s + u).tolist())
        ks.extend([k] * (n - 1))
        ks.append(pieces[p + 1][0] if p + 1 < len(pieces) else k)
        x, y, h, s = px[-1], py[-1], ph[-1], s + length
    cl = Centerline(np.array(xs), np.array(ys), np.array(hs), np.array(ks), np.array(ss))
    half = spec.lane_width / 2.0
    nx = -np.sin(cl.heading)
    ny = np.cos(cl.heading)
    left = np.column_stack([cl.x + half * nx, cl.y + half * ny])
    right = np.column_stack([cl.x - half * nx, cl.y - half * ny])
    return Lanelet(left, right, cl, spec.lane_width)


def default_goal(lanelet: Lanelet) -> GoalRegion:
    """Disk of radius two lane widths, centred 5 m before the centerline end."""
    s_goal = max(lanelet.length - 5.0, 0.0)
    x, y, _, _, _ = lanelet.reference_path.evaluate(s_goal)
    return GoalRegion((x, y), 2.0 * lanelet.lane_width)


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    roads: tuple
    agents: tuple
    dt_plan: float = 0.1
    max_steps: int = 600

    def __post_init__(self):
        object.__setattr__(self, "roads", tuple(self.roads))
        if not self.roads:
            raise ScenarioValidationError("road", "at least one road/lanelet is required")
        if not self.agents:
            raise ScenarioValidationError("agents", "at least one agent is required")
        if not self.dt_plan > 0.0:
            raise ScenarioValidationError("dt_plan", "must be > 0")
        if int(self.max_steps) <= 0:
            raise ScenarioValidationError("max_steps", "must be > 0")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ScenarioValidationError("agents.agent_id", f"duplicate agent ids in {ids}")
        agents = []
        for a in self.agents:
            if not 0 <= a.lanelet < len(self.roads):
                raise ScenarioValidationError("agents.lanelet", f"agent {a.agent_id} references missing lanelet {a.lanelet}")
            lanelet = self.lanelets[a.lanelet]
            if not 0.0 <= a.initial_s <= lanelet.length:
                raise ScenarioValidationError(
                    "agents.initial_s", f"agent {a.agent_id}: {a.initial_s} outside [0, {lanelet.length:.3f}]"
                )
            if a.initial_speed < 0.0:
                raise ScenarioValidationError("agents.initial_speed", "must be >= 0")
            if a.goal is None:
                a = dataclasses.replace(a, goal=default_goal(lanelet))
            if a.goal.radius < lanelet.lane_width / 2.0:
                raise ScenarioValidationError("agents.goal.radius", "must be >= lane_width/2")
            agents.append(a)
        object.__setattr__(self, "agents", tuple(agents))

    @functools.cached_property
    def lanelets(self):
        return [build_turn_road(r) for r in self.roads]

    def agent(self, agent_id):
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)


def place_agent(lanelet: Lanelet, agent: AgentSpec) -> VehicleState:
    """Initial vehicle state: on the centerline at ``initial_s``, offset laterally."""
    if not 0.0 <= agent.initial_s <= lanelet.length:
        raise PlacementError(f"initial_s {agent.initial_s} outside lanelet range [0, {lanelet.length:.3f}]")
    x, y, h, _, _ = lanelet.reference_path.evaluate(agent.initial_s)
    d = agent.initial_lateral_offset
    return VehicleState(
        x=x - d * math.sin(h),
        y=y + d * math.cos(h),
        heading=wrap_angle(h),
        v=float(agent.initial_speed),
        t=0.0,
    )


# ---------------------------------------------------------------- grids


def _angle_label(deg):
    deg = round(deg, 6)
    if deg == 0:
        return "+0"
    return f"{deg:+g}"


def turn_scenario_id(radius, angle_deg):
    return f"turn_r{radius:g}_a{_angle_label(angle_deg)}"


@dataclass(frozen=True)
class GridTemplate:
    road: RoadSpec = field(default_factory=RoadSpec)
    agent: AgentSpec = field(default_factory=lambda: AgentSpec(agent_id=1))
    dt_plan: float = 0.1
    max_steps: int = 600


def generate_grid(radii, angles, template: GridTemplate | None = None, dedupe_straight=True):
    """One scenario per (radius, angle) pair; ``angles`` in radians.

    With ``dedupe_straight`` every zero-angle pair collapses into a single
    ``straight`` scenario placed at its first occurrence.
    """
    radii = list(radii)
    angles = list(angles)
    if not radii:
        raise ScenarioValidationError("radii", "must be non-empty")
    if not angles:
        raise ScenarioValidationError("angles", "must be non-empty")
    template = template or GridTemplate()
    out = []
    seen_straight = False
    for r in radii:
        for gamma in angles:
            deg = math.degrees(gamma)
            if round(deg, 9) == 0.0:
                if dedupe_straight:
                    if seen_straight:
                        continue
                    seen_straight = True
                    sid = "straight"
                    road = dataclasses.replace(template.road, radius=None, turn_angle=0.0)
                else:
                    sid = turn_scenario_id(r, 0.0)
                    road = dataclasses.replace(template.road, radius=float(r), turn_angle=0.0)
            else:
                sid = turn_scenario_id(r, deg)
                road = dataclasses.replace(template.road, radius=float(r), turn_angle=float(gamma))
            out.append(
                Scenario(
                    scenario_id=sid,
                    roads=(road,),
                    agents=(dataclasses.replace(template.agent, goal=None, lanelet=0),),
                    dt_plan=template.dt_plan,
                    max_steps=template.max_steps,
                )
            )
    ids = [s.scenario_id for s in out]
    if len(set(ids)) != len(ids):
        raise ScenarioValidationError("radii", "grid produced duplicate scenario ids")
    return out


GRID_PRESETS = {
    # 6 radii x 8 signed angles + one straight = 49
    "default": dict(radii=DEFAULT_RADII, angles_deg=DEFAULT_ANGLES_DEG, dedupe_straight=True),
    # 6 radii x 13 angles (-120..120 step 20, zero kept per radius) = 78
    "fine": dict(radii=DEFAULT_RADII, angles_deg=FINE_ANGLES_DEG, dedupe_straight=False),
}


def grid_preset(name, template=None):
    try:
        p = GRID_PRESETS[name]
    except KeyError:
        raise ScenarioValidationError("grid.preset", f"unknown preset {name!r}; valid: {sorted(GRID_PRESETS)}") from None
    return generate_grid(
        p["radii"], [math.radians(a) for a in p["angles_deg"]], template, dedupe_straight=p["dedupe_straight"]
    )


def grid_key(scenario):
    """``(radius_m, angle_deg)`` of a single-turn grid scenario, ``None`` otherwise.

    The deduplicated straight scenario has no radius and also maps to ``None``.
    """
    if len(scenario.roads) != 1:
        return None
    road = scenario.roads[0]
    if road.extra_turns or road.radius is None:
        return None
    return float(road.radius), round(math.degrees(road.turn_angle), 6)


def scurve_scenario(vehicle_model="touring", radius=25.0, angle_deg=60.0, lane_width=3.5):
    """Left curve, short straight, right curve, straight exit."""
    road = RoadSpec(
        entry_length=40.0,
        radius=radius,
        turn_angle=math.radians(angle_deg),
        exit_length=15.0,
        lane_width=lane_width,
        extra_turns=(TurnSpec(radius, -math.radians(angle_deg), 40.0),),
    )
    return Scenario("scurve", (road,), (AgentSpec(agent_id=1, vehicle_model=vehicle_model),))


def crossing_scenario():
    """Two agents on perpendicular straight lanelets that cross at the origin.

    Agent 2 starts further from the crossing so the two pass it in sequence.
    """
    road_a = RoadSpec(entry_length=50.0, exit_length=50.0, x0=-50.0, y0=0.0, heading0=0.0)
    road_b = RoadSpec(entry_length=70.0, exit_length=50.0, x0=0.0, y0=-70.0, heading0=math.pi / 2)
    agents = (
        AgentSpec(agent_id=1, lanelet=0),
        AgentSpec(agent_id=2, lanelet=1),
    )
    return Scenario("crossing", (road_a, road_b), agents)


# ---------------------------------------------------------------- files


def _road_to_dict(r: RoadSpec):
    return {
        "entry_length": r.entry_length,
        "radius": r.radius,
        "turn_angle": round(math.degrees(r.turn_angle), 9),
        "exit_length": r.exit_length,
        "lane_width": r.lane_width,
        "sample_step": r.sample_step,
        "origin": {"x": r.x0, "y": r.y0, "heading": round(math.degrees(r.heading0), 9)},
        "extra_turns": [
            {"radius": t.radius, "turn_angle": round(math.degrees(t.turn_angle), 9), "exit_length": t.exit_length}
            for t in r.extra_turns
        ],
    }


def scenario_to_dict(s: Scenario):
    roads = [_road_to_dict(r) for r in s.roads]
    return {
        "format_version": FORMAT_VERSION,
        "units": dict(UNITS),
        "scenario_id": s.scenario_id,
        "road": roads[0] if len(roads) == 1 else roads,
        "agents": [
            {
                "agent_id": a.agent_id,
                "lanelet": a.lanelet,
                "initial_s": a.initial_s,
                "initial_lateral_offset": a.initial_lateral_offset,
                "initial_speed": a.initial_speed,
                "vehicle_model": a.vehicle_model,
                "planner_config": a.planner_config,
                "goal": {"center": list(a.goal.center), "radius": a.goal.radius},
            }
            for a in s.agents
        ],
        "dt_plan": s.dt_plan,
        "max_steps": s.max_steps,
    }


def dumps_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


def save_scenario(s: Scenario, path):
    with open(path, "w") as fh:
        fh.write(dumps_scenario(s))


def _req(obj, key, where):
    if not isinstance(obj, dict):
        raise ScenarioFormatError(f"{where}: expected an object")
    if key not in obj:
        raise ScenarioFormatError(f"{where}: missing required field {key!r}" if where else f"missing required field {key!r}")
    return obj[key]


def _num(obj, key, where, default=None, optional=False):
    path = f"{where}.{key}" if where else key
    if not isinstance(obj, dict):
        raise ScenarioFormatError(f"{where}: expected an object")
    if key not in obj:
        if optional:
            return default
        raise ScenarioFormatError(f"{path}: missing required field {key!r}")
    val = obj[key]
    if val is None and optional:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioFormatError(f"{path}: expected a number, got {val!r}")
    return float(val)


def _road_from_dict(d, where):
    if not isinstance(d, dict):
        raise ScenarioFormatError(f"{where}: expected an object")
    origin = d.get("origin", {})
    extra = []
    for i, t in enumerate(d.get("extra_turns", [])):
        w = f"{where}.extra_turns[{i}]"
        extra.append(
            TurnSpec(
                radius=_num(t, "radius", w),
                turn_angle=math.radians(_num(t, "turn_angle", w)),
                exit_length=_num(t, "exit_length", w, 0.0, optional=True),
            )
        )
    return RoadSpec(
        entry_length=_num(d, "entry_length", where),
        radius=_num(d, "radius", where, None, optional=True),
        turn_angle=math.radians(_num(d, "turn_angle", where, 0.0, optional=True)),
        exit_length=_num(d, "exit_length", where),
        lane_width=_num(d, "lane_width", where, 3.5, optional=True),
        sample_step=_num(d, "sample_step", where, 0.5, optional=True),
        x0=_num(origin, "x", f"{where}.origin", 0.0, optional=True),
        y0=_num(origin, "y", f"{where}.origin", 0.0, optional=True),
        heading0=math.radians(_num(origin, "heading", f"{where}.origin", 0.0, optional=True)),
        extra_turns=tuple(extra),
    )


def scenario_from_dict(data) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioFormatError("top level: expected an object")
    version = _req(data, "format_version", "")
    if version != FORMAT_VERSION:
        raise ScenarioFormatError(f"format_version: unsupported version {version!r} (expected {FORMAT_VERSION})")
    sid = _req(data, "scenario_id", "")
    if not isinstance(sid, str) or not sid:
        raise ScenarioFormatError("scenario_id: expected a non-empty string")
    road = _req(data, "road", "")
    roads = [road] if isinstance(road, dict) else road
    if not isinstance(roads, list):
        raise ScenarioFormatError("road: expected an object or a list of objects")
    road_specs = tuple(_road_from_dict(r, f"road[{i}]") for i, r in enumerate(roads))
    agents_raw = _req(data, "agents", "")
    if not isinstance(agents_raw, list):
        raise ScenarioFormatError("agents: expected a list")
    agents = []
    for i, a in enumerate(agents_raw):
        w = f"agents[{i}]"
        if not isinstance(a, dict):
            raise ScenarioFormatError(f"{w}: expected an object")
        aid = _req(a, "agent_id", w)
        if isinstance(aid, bool) or not isinstance(aid, int):
            raise ScenarioFormatError(f"{w}.agent_id: expected an integer")
        goal = None
        if a.get("goal") is not None:
            g = a["goal"]
            center = _req(g, "center", f"{w}.goal")
            if not (isinstance(center, list) and len(center) == 2):
                raise ScenarioFormatError(f"{w}.goal.center: expected [x, y]")
            goal = GoalRegion((float(center[0]), float(center[1])), _num(g, "radius", f"{w}.goal"))
        agents.append(
            AgentSpec(
                agent_id=aid,
                lanelet=int(a.get("lanelet", 0)),
                initial_s=_num(a, "initial_s", w),
                initial_lateral_offset=_num(a, "initial_lateral_offset", w, 0.0, optional=True),
                initial_speed=_num(a, "initial_speed", w, 0.0, optional=True),
                vehicle_model=str(a.get("vehicle_model", "touring")),
                planner_config=str(a.get("planner_config", "default")),
                goal=goal,
            )
        )
    dt_plan = _num(data, "dt_plan", "")
    max_steps = _req(data, "max_steps", "")
    if isinstance(max_steps, bool) or not isinstance(max_steps, int):
        raise ScenarioFormatError("max_steps: expected an integer")
    return Scenario(sid, road_specs, tuple(agents), dt_plan, max_steps)


def loads_scenario(text) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(data)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        text = fh.read()
    try:
        return loads_scenario(text)
    except ScenarioFormatError as exc:
        raise ScenarioFormatError(f"{path}: {exc}") from None
