"""Low-fidelity (state enforcement) and high-fidelity (controlled dynamics) backends."""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import wrap_angle
from .scenario import place_agent
from .vehicle import G, VehicleParams, VehicleState


class ContractViolation(ValueError):
    pass


class DynamicsError(RuntimeError):
    pass


@dataclass(frozen=True)
class ControllerGains:
    kp: float = 1.5
    ki: float = 0.3
    integral_limit: float = 2.0  # bound on ki * integral, m/s^2
    k_v: float = 0.3
    ld_min: float = 2.0
    ld_max: float = 12.0


@dataclass(frozen=True)
class ControlCommand:
    steer_target: float
    accel_target: float

    def clamped(self, params: VehicleParams):
        return ControlCommand(
            min(max(self.steer_target, -params.delta_max), params.delta_max),
            min(max(self.accel_target, -params.a_brake_max), params.a_accel_max),
        )


def _sample_at(traj, tm):
    """Trajectory state at absolute time ``tm``; exact when ``tm`` is a sample time."""
    i = int(np.searchsorted(traj.t, tm - 1e-9))
    if i < len(traj) and abs(traj.t[i] - tm) <= 1e-9:
        return traj.x[i], traj.y[i], traj.heading[i], traj.v[i], traj.a[i], traj.curvature[i]
    i = min(max(i, 1), len(traj) - 1)
    r = (tm - traj.t[i - 1]) / (traj.t[i] - traj.t[i - 1])

    def lerp(arr):
        return arr[i - 1] + r * (arr[i] - arr[i - 1])

    return lerp(traj.x), lerp(traj.y), lerp(traj.heading), lerp(traj.v), lerp(traj.a), lerp(traj.curvature)


def lofi_step(state: VehicleState, traj, dt_plan, wheelbase=2.7) -> VehicleState:
    """Enforce the planned state at ``t + dt_plan``; execution error is zero."""
    if math.hypot(traj.x[0] - state.x, traj.y[0] - state.y) > 1e-9 or abs(traj.t[0] - state.t) > 1e-9:
        raise ContractViolation("trajectory does not start at the current state")
    if traj.t[-1] - traj.t[0] < dt_plan - 1e-9:
        raise ContractViolation(
            f"trajectory covers {traj.t[-1] - traj.t[0]:.3f} s, shorter than dt_plan {dt_plan:.3f} s"
        )
    x, y, h, v, a, k = _sample_at(traj, state.t + dt_plan)
    return VehicleState(
        x=float(x), y=float(y), heading=wrap_angle(float(h)), v=max(float(v), 0.0),
        a=float(a), steer=math.atan(float(k) * wheelbase), t=state.t + dt_plan,
    )


def pure_pursuit_lateral(state: VehicleState, traj, params: VehicleParams, gains=ControllerGains()):
    """Steering target toward the trajectory point one lookahead distance ahead."""
    return kernels.pure_pursuit(
        traj.x, traj.y, traj.s, state.x, state.y, state.heading, state.v,
        params.wheelbase, params.delta_max, gains.k_v, gains.ld_min, gains.ld_max,
    )


def pi_longitudinal(state: VehicleState, traj, params: VehicleParams, integral=0.0, gains=ControllerGains()):
    """Feed-forward plus PI acceleration target at the state's time on ``traj``.

    The feed-forward acceleration is read ``params.tau_accel`` ahead of the
    matched time so the lagged actuator arrives on the planned profile.

    ``integral`` is the accumulated speed error in m; the integral term is
    clamped to ``gains.integral_limit``.
    """
    tm = state.t - traj.t[0]
    tt = traj.t - traj.t[0]
    v_ref = kernels.interp_time(tt, traj.v, tm)
    # leading the feed-forward by the drivetrain lag inverts it to first order
    a_ff = kernels.interp_time(tt, traj.a, tm + params.tau_accel)
    i_lim = gains.integral_limit / gains.ki if gains.ki > 0 else 0.0
    integral = min(max(integral, -i_lim), i_lim)
    acc = a_ff + gains.kp * (v_ref - state.v) + gains.ki * integral
    return min(max(acc, -params.a_brake_max), params.a_accel_max)


@dataclass
class HifiResult:
    state: VehicleState
    integral: float
    command: ControlCommand
    max_steer_step: float


def hifi_step(state: VehicleState, traj, params: VehicleParams, dt_plan, substeps=10,
              gains=ControllerGains(), integral=0.0, noise=None) -> HifiResult:
    """Integrate controller, actuator lags, friction saturation and kinematic
    bicycle over one planning step split into ``substeps`` intervals."""
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    dt = dt_plan / substeps
    if noise is None:
        noise = np.zeros(substeps)
    tt = traj.t - traj.t[0]
    i_lim = gains.integral_limit / gains.ki if gains.ki > 0 else 0.0
    out = kernels.hifi_integrate(
        state.x, state.y, state.heading, state.v, state.a, state.steer, state.t - traj.t[0],
        tt, traj.x, traj.y, traj.v, traj.a, traj.s,
        params.wheelbase, params.delta_max, params.steer_rate_max, params.a_accel_max,
        params.a_brake_max, params.tau_steer, params.tau_accel, params.mu, G,
        gains.kp, gains.ki, i_lim, gains.k_v, gains.ld_min, gains.ld_max,
        dt, int(substeps), integral, noise,
    )
    x, y, h, v, a, steer, integral, steer_t, accel_t, max_step = out
    if not all(math.isfinite(q) for q in (x, y, h, v, a, steer)):
        raise DynamicsError(
            f"non-finite state after integration at t={state.t:.2f}s: x={x} y={y} heading={h} v={v}"
        )
    new = VehicleState(x=x, y=y, heading=wrap_angle(h), v=v, a=a, steer=steer, t=state.t + dt_plan)
    return HifiResult(new, integral, ControlCommand(steer_t, accel_t), max_step)


class LofiBackend:
    fidelity = "low"

    def spawn(self, lanelet, agent):
        return place_agent(lanelet, agent)

    def step(self, state, traj, params, dt_plan):
        return lofi_step(state, traj, dt_plan, params.wheelbase), None


class HifiBackend:
    """Per-agent high-fidelity backend holding the PI integrator state.

    The integrator restarts whenever the reference trajectory changes. A
    replanned reference starts at the executed state, so error accumulated
    against the previous one no longer describes the tracking and would only
    bias the new command.
    """

    fidelity = "high"

    def __init__(self, substeps=10, gains=ControllerGains(), noise_std=0.0, seed=0):
        self.substeps = substeps
        self.gains = gains
        self.noise_std = noise_std
        self.rng = np.random.default_rng(seed)
        self.integral = 0.0
        self._reference = None

    def spawn(self, lanelet, agent):
        return place_agent(lanelet, agent)

    def step(self, state, traj, params, dt_plan):
        if traj is not self._reference:
            self._reference = traj
            self.integral = 0.0
        noise = None
        if self.noise_std > 0.0:
            noise = self.rng.normal(0.0, self.noise_std, self.substeps)
        res = hifi_step(state, traj, params, dt_plan, self.substeps, self.gains, self.integral, noise)
        self.integral = res.integral
        return res.state, res.command

