"""Frenet-frame sampling planner.

Candidates combine a quintic lateral profile with a quartic
velocity-keeping longitudinal profile over a set of horizons. Infeasible
candidates are rejected and the cheapest survivor is returned as a
time-parameterized Cartesian trajectory.
"""
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ProjectionError, wrap_angle
from .vehicle import CATALOG, PLANNER_ASSUMED_MODEL

BC_TOL = 1e-9


class GeometryError(ValueError):
    """Frenet offset folds over the reference path normal."""


class FallbackRequired(Exception):
    """No candidate survived the feasibility checks."""

    def __init__(self, reasons):
        self.reasons = dict(reasons)
        summary = ", ".join(f"{k}={v}" for k, v in sorted(self.reasons.items()))
        super().__init__(f"no feasible candidate ({summary})")


def _assumed():
    return CATALOG[PLANNER_ASSUMED_MODEL]


@dataclass(frozen=True)
class PlannerConfig:
    target_speed: float = 10.0
    lateral_offsets: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)
    horizons: tuple = (2.0, 3.0, 4.0)
    k_jerk: float = 0.1
    k_time: float = 1.0
    k_lat_dev: float = 1.0
    k_speed_dev: float = 0.5
    v_max: float = 50.8
    a_max: float = 8.0
    kappa_max: float = field(default_factory=lambda: _assumed().kappa_max)
    # geometry of the vehicle model the planner assumes
    vehicle_length: float = field(default_factory=lambda: _assumed().length)
    vehicle_width: float = field(default_factory=lambda: _assumed().width)
    wheelbase: float = field(default_factory=lambda: _assumed().wheelbase)
    launch_speed: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "lateral_offsets", tuple(float(o) for o in self.lateral_offsets))
        object.__setattr__(self, "horizons", tuple(float(h) for h in self.horizons))
        for name in ("k_jerk", "k_time", "k_lat_dev", "k_speed_dev"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"PlannerConfig.{name} must be >= 0")
        if not self.lateral_offsets:
            raise ValueError("PlannerConfig.lateral_offsets must be non-empty")
        if not self.horizons or min(self.horizons) <= 0.0:
            raise ValueError("PlannerConfig.horizons must be non-empty and positive")
        if not self.kappa_max > 0.0:
            raise ValueError("PlannerConfig.kappa_max must be > 0")
        if not (self.v_max > 0.0 and self.a_max > 0.0 and self.target_speed >= 0.0):
            raise ValueError("PlannerConfig limits must be positive")

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown planner config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class FrenetState:
    s: float
    s_dot: float
    s_ddot: float
    d: float
    d_dot: float
    d_ddot: float

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not math.isfinite(v):
                raise ValueError(f"FrenetState.{k} is not finite")


# ------------------------------------------------------------ conversions


def cartesian_to_frenet(path, x, y, heading, v, a=0.0, curvature=0.0, max_distance=None):
    """Frenet state of a Cartesian pose and its velocity/acceleration.

    ``max_distance`` bounds the allowed offset from the path; beyond it a
    ``ProjectionError`` is raised.
    """
    s, d, th_r, k_r, _ = path.project(x, y, max_distance=max_distance)
    dth = wrap_angle(heading - th_r)
    one_kd = 1.0 - k_r * d
    if one_kd <= 0.0:
        raise GeometryError(f"offset {d:.3f} m folds over the path normal (curvature {k_r:.4f})")
    cos_d = math.cos(dth)
    if cos_d <= 1e-9:
        raise ProjectionError(f"heading opposes the path direction by {dth:.3f} rad")
    tan_d = math.tan(dth)
    d_p = one_kd * tan_d
    k_term = curvature * one_kd / cos_d - k_r
    d_pp = -k_r * d_p * tan_d + one_kd / (cos_d * cos_d) * k_term
    s_dot = v * cos_d / one_kd
    s_ddot = (a * cos_d - s_dot * s_dot * (d_p * k_term - k_r * d_p)) / one_kd
    return FrenetState(
        s=s,
        s_dot=s_dot,
        s_ddot=s_ddot,
        d=d,
        d_dot=d_p * s_dot,
        d_ddot=d_pp * s_dot * s_dot + d_p * s_ddot,
    )


def _frenet_to_cartesian_arrays(path, s, s_dot, s_ddot, d, d_dot, d_ddot):
    rx, ry, rh, rk, _ = path.evaluate(np.atleast_1d(s))
    one_kd = 1.0 - rk * d
    folded = one_kd <= 0.0
    safe_sd = np.where(np.abs(s_dot) > 1e-9, s_dot, 1.0)
    moving = np.abs(s_dot) > 1e-9
    d_p = np.where(moving, d_dot / safe_sd, 0.0)
    d_pp = np.where(moving, (d_ddot - d_p * s_ddot) / (safe_sd * safe_sd), 0.0)
    safe_okd = np.where(folded, 1.0, one_kd)
    tan_d = d_p / safe_okd
    dth = np.arctan(tan_d)
    cos_d = np.cos(dth)
    x = rx - d * np.sin(rh)
    y = ry + d * np.cos(rh)
    heading = rh + dth
    v = s_dot * safe_okd / cos_d
    kappa = ((d_pp + rk * d_p * tan_d) * cos_d * cos_d / safe_okd + rk) * cos_d / safe_okd
    acc = (s_ddot * safe_okd + s_dot * s_dot * (d_p * (kappa * safe_okd / cos_d - rk) - rk * d_p)) / cos_d
    return x, y, heading, v, acc, kappa, folded


def frenet_to_cartesian(path, fs: FrenetState):
    """Inverse of :func:`cartesian_to_frenet`.

    Returns ``(x, y, heading, v, a, curvature)``.
    """
    x, y, h, v, a, k, folded = _frenet_to_cartesian_arrays(
        path, *(np.atleast_1d(float(q)) for q in (fs.s, fs.s_dot, fs.s_ddot, fs.d, fs.d_dot, fs.d_ddot))
    )
    if folded[0]:
        raise GeometryError(f"offset {fs.d:.3f} m folds over the path normal")
    return float(x[0]), float(y[0]), float(h[0]), float(v[0]), float(a[0]), float(k[0])


# ------------------------------------------------------------ polynomials


def solve_quintic(d0, d_dot0, d_ddot0, d_T, T):
    """Coefficients (ascending powers) of the quintic from ``(d0, d_dot0,
    d_ddot0)`` at t=0 to ``(d_T, 0, 0)`` at t=T."""
    if not T > 0.0:
        raise ValueError("horizon T must be > 0")
    T2, T3 = T * T, T * T * T
    delta = d_T - d0
    c3 = (20.0 * delta - 12.0 * d_dot0 * T - 3.0 * d_ddot0 * T2) / (2.0 * T3)
    c4 = (-30.0 * delta + 16.0 * d_dot0 * T + 3.0 * d_ddot0 * T2) / (2.0 * T3 * T)
    c5 = (12.0 * delta - 6.0 * d_dot0 * T - d_ddot0 * T2) / (2.0 * T3 * T2)
    return np.array([d0, d_dot0, 0.5 * d_ddot0, c3, c4, c5])


def solve_quartic_velocity_keeping(s0, s_dot0, s_ddot0, target_s_dot, T):
    """Coefficients (ascending powers) of the quartic with free terminal
    position, terminal velocity ``target_s_dot`` and zero terminal acceleration."""
    if not T > 0.0:
        raise ValueError("horizon T must be > 0")
    c3 = (3.0 * (target_s_dot - s_dot0) - 2.0 * s_ddot0 * T) / (3.0 * T * T)
    c4 = (2.0 * (s_dot0 - target_s_dot) + s_ddot0 * T) / (4.0 * T * T * T)
    return np.array([s0, s_dot0, 0.5 * s_ddot0, c3, c4])


def _polyder(c):
    return [i * c[i] for i in range(1, len(c))]


def _polyval(c, t):
    # Horner; numpy.polynomial is an order of magnitude slower for 6 terms
    out = 0.0 * t + c[-1] if len(c) else 0.0 * t
    for q in reversed(c[:-1]):
        out = out * t + q
    return out


def _derivs(coeffs, t, order=3):
    c = [float(q) for q in coeffs]
    out = [_polyval(c, t)]
    for _ in range(order):
        c = _polyder(c)
        out.append(_polyval(c, t))
    return out


def jerk_integral(coeffs, T):
    """Integral of the squared third derivative over [0, T]."""
    j = [float(q) for q in coeffs]
    for _ in range(3):
        j = _polyder(j)
    total = 0.0
    for p, a in enumerate(j):
        for q, b in enumerate(j):
            k = p + q + 1
            total += a * b * T ** k / k
    return total


# ------------------------------------------------------------ trajectories


@dataclass(frozen=True, eq=False)
class PlannedTrajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    v: np.ndarray
    a: np.ndarray
    curvature: np.ndarray

    def __len__(self):
        return self.t.shape[0]

    @functools.cached_property
    def s(self):
        return np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(self.x), np.diff(self.y)))])

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])

    def sample(self, i):
        return {
            "t": float(self.t[i]), "x": float(self.x[i]), "y": float(self.y[i]),
            "heading": float(self.heading[i]), "v": float(self.v[i]),
            "a": float(self.a[i]), "curvature": float(self.curvature[i]),
        }

    def to_dict(self, n=None):
        n = len(self) if n is None else min(n, len(self))
        keys = ("t", "x", "y", "heading", "v", "a", "curvature")
        return {k: getattr(self, k)[:n].tolist() for k in keys}

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: np.asarray(data[k], dtype=float) for k in ("t", "x", "y", "heading", "v", "a", "curvature")})


@dataclass(frozen=True, eq=False)
class CandidateTrajectory:
    lateral_coeffs: np.ndarray
    longitudinal_coeffs: np.ndarray
    horizon_T: float
    initial: FrenetState
    target_d: float
    target_s_dot: float
    cost: float = math.inf
    feasible: bool = False
    reason: str = ""
    launch: bool = False

    def __post_init__(self):
        res = self.boundary_residuals()
        worst = max(abs(r) for r in res.values())
        if worst > BC_TOL * max(1.0, abs(self.initial.s)):
            raise ValueError(f"candidate boundary residual {worst:.3e} exceeds tolerance: {res}")

    def boundary_residuals(self):
        T = self.horizon_T
        lat = self.lateral_coeffs
        lon = self.longitudinal_coeffs
        l0 = _derivs(lat, 0.0, 2)
        lT = _derivs(lat, T, 2)
        s0 = _derivs(lon, 0.0, 2)
        sT = _derivs(lon, T, 2)
        fs = self.initial
        out = {
            "s(0)": s0[0] - fs.s,
            "s_dot(0)": s0[1] - fs.s_dot,
            "s_ddot(0)": s0[2] - fs.s_ddot,
            "s_dot(T)": sT[1] - self.target_s_dot,
            "s_ddot(T)": sT[2],
            "d(0)": l0[0] - fs.d,
        }
        if not self.launch:
            out.update({
                "d_dot(0)": l0[1] - fs.d_dot,
                "d_ddot(0)": l0[2] - fs.d_ddot,
                "d(T)": lT[0] - self.target_d,
                "d_dot(T)": lT[1],
                "d_ddot(T)": lT[2],
            })
        return out


@dataclass(frozen=True)
class ObstaclePrediction:
    agent_id: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    length: float
    width: float
    wheelbase: float


def predict_obstacles(others, horizon, dt):
    """Constant-velocity, heading-hold predictions.

    ``others`` is a sequence of ``(agent_id, VehicleState, VehicleParams)``;
    output order follows input order.
    """
    n = int(math.floor(horizon / dt + 1e-9))
    k = np.arange(n + 1) * dt
    out = []
    for agent_id, st, params in others:
        out.append(
            ObstaclePrediction(
                agent_id=agent_id,
                t=st.t + k,
                x=st.x + st.v * math.cos(st.heading) * k,
                y=st.y + st.v * math.sin(st.heading) * k,
                heading=np.full(n + 1, st.heading),
                length=params.length,
                width=params.width,
                wheelbase=params.wheelbase,
            )
        )
    return out


def vehicle_circles(x, y, heading, length, width, wheelbase):
    """Three-circle footprint; returns centres of shape (..., 3, 2) and the radius."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    heading = np.asarray(heading, dtype=float)
    c, s = np.cos(heading), np.sin(heading)
    offsets = np.array([-length / 3.0, 0.0, length / 3.0]) + wheelbase / 2.0
    cx = x[..., None] + offsets * c[..., None]
    cy = y[..., None] + offsets * s[..., None]
    return np.stack([cx, cy], axis=-1), math.hypot(length / 6.0, width / 2.0)


def footprints_overlap(xa, ya, ha, dims_a, xb, yb, hb, dims_b):
    """Per-sample overlap flags between two footprints sampled at common times."""
    ca, ra = vehicle_circles(xa, ya, ha, *dims_a)
    cb, rb = vehicle_circles(xb, yb, hb, *dims_b)
    diff = ca[..., :, None, :] - cb[..., None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    return np.any(dist < ra + rb, axis=(-1, -2))


@dataclass(frozen=True, eq=False)
class PlanResult:
    trajectory: PlannedTrajectory
    index: int
    candidates: list
    launch: bool


def frenet_state_for_planning(path, state, config: PlannerConfig, max_distance=None, previous=None):
    """Frenet state of an executed vehicle state as the planner perceives it.

    Pose and speed are the executed ones. Curvature and acceleration are
    taken from ``previous``, the trajectory the vehicle was following, at the
    state's time. Without one (first step, or the state lies past its end)
    curvature comes from the reported steering angle through the planner's
    assumed wheelbase, so a vehicle with a different wheelbase is misread.
    Both are clipped to the planner's limits because it cannot represent more.
    """
    if previous is not None and previous.t[0] <= state.t <= previous.t[-1]:
        kappa = float(np.interp(state.t, previous.t, previous.curvature))
        acc = float(np.interp(state.t, previous.t, previous.a))
    else:
        kappa = math.tan(state.steer) / config.wheelbase
        acc = state.a
    kappa = min(max(kappa, -config.kappa_max), config.kappa_max)
    acc = min(max(acc, -config.a_max), config.a_max)
    return cartesian_to_frenet(path, state.x, state.y, state.heading, state.v, acc, kappa, max_distance)


def plan(path, fs: FrenetState, config: PlannerConfig, obstacles=(), *, dt, lane_width,
         t0=0.0, initial_state=None):
    """Select the minimum-cost feasible candidate.

    Candidates are enumerated offsets-outer, horizons-inner; ties keep the
    earliest. When ``initial_state`` is given the first output sample is
    pinned to its exact pose and speed. Raises ``FallbackRequired`` when
    every candidate is rejected.
    """
    launch = fs.s_dot < config.launch_speed
    containment = lane_width / 2.0 - config.vehicle_width / 2.0
    ego_dims = (config.vehicle_length, config.vehicle_width, config.wheelbase)

    offsets = [fs.d] if launch else list(config.lateral_offsets)
    candidates = []
    best_i = -1
    best_cost = math.inf
    best_arrays = None
    reasons = {}
    for target_d in offsets:
        for T in config.horizons:
            lon = solve_quartic_velocity_keeping(fs.s, fs.s_dot, fs.s_ddot, config.target_speed, T)
            if launch:
                lat = np.array([fs.d, 0.0, 0.0, 0.0, 0.0, 0.0])
            else:
                lat = solve_quintic(fs.d, fs.d_dot, fs.d_ddot, target_d, T)
            n = int(math.floor(T / dt + 1e-9))
            tt = np.arange(n + 1) * dt
            s, s_dot, s_ddot, _ = _derivs(lon, tt)
            d, d_dot, d_ddot, _ = _derivs(lat, tt)
            s_dot_T = float(_polyval(_polyder(list(lon)), T))
            cost = (
                config.k_jerk * (jerk_integral(lat, T) + jerk_integral(lon, T))
                + config.k_time * T
                + config.k_lat_dev * target_d * target_d
                + config.k_speed_dev * (s_dot_T - config.target_speed) ** 2
            )
            reason, arrays = _check(path, config, obstacles, ego_dims, containment, fs,
                                    s, s_dot, s_ddot, d, d_dot, d_ddot, launch)
            feasible = reason == ""
            cand = CandidateTrajectory(
                lateral_coeffs=lat, longitudinal_coeffs=lon, horizon_T=T, initial=fs,
                target_d=target_d, target_s_dot=config.target_speed, cost=cost,
                feasible=feasible, reason=reason, launch=launch,
            )
            candidates.append(cand)
            if feasible:
                if cost < best_cost:
                    best_cost = cost
                    best_i = len(candidates) - 1
                    best_arrays = (tt, arrays)
            else:
                reasons[reason] = reasons.get(reason, 0) + 1
    if best_i < 0:
        raise FallbackRequired(reasons)
    tt, (x, y, h, v, a, k) = best_arrays
    x, y, h, v = x.copy(), y.copy(), h.copy(), v.copy()
    if initial_state is not None:
        x[0] = initial_state.x
        y[0] = initial_state.y
        h[0] = initial_state.heading
        v[0] = initial_state.v
    h = np.unwrap(h)
    h = h - (h[0] - wrap_angle(h[0]))
    traj = PlannedTrajectory(t0 + tt, x, y, h, v, a.copy(), k.copy())
    return PlanResult(traj, best_i, candidates, launch)


def _check(path, config, obstacles, ego_dims, containment, fs, s, s_dot, s_ddot, d, d_dot, d_ddot, launch):
    tol = 1e-9
    if launch:
        if np.any(s_dot < -tol):
            return "reverse", None
    elif np.any(s_dot < 1e-3):
        return "stall", None
    x, y, h, v, a, k, folded = _frenet_to_cartesian_arrays(path, s, s_dot, s_ddot, d, d_dot, d_ddot)
    if np.any(folded):
        return "folding", None
    if np.any(v > config.v_max + tol):
        return "v_max", None
    if np.any(np.abs(a) > config.a_max + tol):
        return "a_max", None
    if np.any(np.abs(k) > config.kappa_max + tol):
        return "kappa_max", None
    ad = np.abs(d)
    # a state already outside the band may recover but never move further out
    if np.any((ad > containment + tol) & (ad > abs(fs.d) + tol)):
        return "lane", None
    for ob in obstacles:
        m = min(len(ob.t), len(x))
        if m and np.any(footprints_overlap(
            x[:m], y[:m], h[:m], ego_dims,
            ob.x[:m], ob.y[:m], ob.heading[:m], (ob.length, ob.width, ob.wheelbase),
        )):
            return "collision", None
    return "", (x, y, h, v, a, k)


def emergency_brake_trajectory(state, decel, horizon, dt):
    """Straight line along the current heading, braking at ``decel`` to a stop."""
    n = int(math.floor(horizon / dt + 1e-9))
    tt = np.arange(n + 1) * dt
    t_stop = state.v / decel if decel > 0 else 0.0
    tc = np.minimum(tt, t_stop)
    dist = state.v * tc - 0.5 * decel * tc * tc
    v = np.maximum(state.v - decel * tt, 0.0)
    a = np.where(tt < t_stop, -decel, 0.0)
    a[0] = -decel if state.v > 0 else 0.0
    c, s_ = math.cos(state.heading), math.sin(state.heading)
    return PlannedTrajectory(
        t=state.t + tt,
        x=state.x + dist * c,
        y=state.y + dist * s_,
        heading=np.full(n + 1, state.heading),
        v=v,
        a=a,
        curvature=np.zeros(n + 1),
    )
