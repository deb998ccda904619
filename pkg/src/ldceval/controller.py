"""Preview steering controller for lane-departure correction.

The steering law feeds back lateral offset and a preview heading error,
the heading error relative to the lane direction ``T_lp`` seconds ahead.
The controller engages once the lateral departure exceeds ``y_s``.
Left departures are handled by reflecting the event to the right side,
simulating, and reflecting the result back.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .features import DepartureEvent, Side, fit_curvature
from .vehicle import StateMatrices, VehicleParams, VehicleState, build_matrices, step

OFFSET_CONVENTIONS = ("paper", "centered")
PREVIEW_CONVENTIONS = ("paper", "consistent")


@dataclass(frozen=True)
class ControllerParams:
    K_y: float = -0.005
    K_psi: float = -0.2
    T_lp: float = 2.0
    y_s: float = 0.2
    w_l: float = 3.6
    steer_limit: float | None = None
    preview_convention: str = "paper"

    def __post_init__(self):
        if self.preview_convention not in PREVIEW_CONVENTIONS:
            raise ValueError(f"preview convention must be one of {PREVIEW_CONVENTIONS}")
        if not self.T_lp > 0:
            raise ValueError("preview time must be positive")
        if self.y_s < 0:
            raise ValueError("trigger threshold must be non-negative")
        if self.steer_limit is not None and not self.steer_limit > 0:
            raise ValueError("steering limit must be positive when set")


class PreviewInputs(NamedTuple):
    psi_l_dot: float
    delta_psi_l: float


def check_trigger(y: float, side, y_s: float) -> bool:
    """Strict threshold test, mirrored for left departures."""
    return (-y if Side.parse(side) is Side.LEFT else y) > y_s


def lateral_offset(y, w_l: float, w_v: float, convention: str = "paper"):
    """Controller offset error for a lateral position ``y``.

    ``"paper"`` adds the half-width margin ``(w_l - w_v) / 2``; ``"centered"``
    regulates the vehicle center to the lane center.
    """
    if convention == "paper":
        return y + (w_l - w_v) / 2.0
    if convention == "centered":
        return y
    raise ValueError(f"offset convention must be one of {OFFSET_CONVENTIONS}, got {convention!r}")


def _index_at(event: DepartureEvent, t_s: float) -> int:
    if not event.t[0] - 1e-9 <= t_s <= event.t[-1] + 1e-9:
        raise ValueError(f"t_s={t_s} outside the event time span")
    i = int(np.argmin(np.abs(event.t - t_s)))
    if abs(event.t[i] - t_s) > 1e-6:
        raise ValueError(f"t_s={t_s} is not a sample time of event {event.event_id!r}")
    return i


def initial_conditions(event: DepartureEvent, t_s: float, w_l: float, w_v: float,
                       offset_convention: str = "paper") -> tuple[VehicleState, bool]:
    """State at the trigger time.

    Lateral speed is a central difference of the lateral offset (one-sided
    at the ends of the record); heading error follows from lateral over
    longitudinal speed and the yaw-rate error starts at zero.

    Returns:
        ``(state, one_sided)`` where ``one_sided`` flags an end-point difference.
    """
    i = _index_at(event, t_s)
    y, t = event.y, event.t
    one_sided = i == 0 or i == len(event) - 1
    if i == 0:
        v_y = (y[1] - y[0]) / (t[1] - t[0])
    elif i == len(event) - 1:
        v_y = (y[-1] - y[-2]) / (t[-1] - t[-2])
    else:
        v_y = (y[i + 1] - y[i - 1]) / (t[i + 1] - t[i - 1])
    e_y = lateral_offset(y[i], w_l, w_v, offset_convention)
    e_psi = np.arctan(v_y / event.v[i])
    return VehicleState(float(e_y), float(v_y), float(e_psi), 0.0), one_sided


def preview_inputs(t, t_s, v_x_ts, c0, delta_c, T, T_lp, convention: str = "paper") -> PreviewInputs:
    """Lane yaw rate at ``t`` and its integral over the preview horizon.

    Curvature is the linear profile ``c0 + delta_c * t / T`` and the speed
    is frozen at its trigger-time value. ``convention="paper"`` returns the
    heading change ``+integral``; ``"consistent"`` returns
    ``psi_l - psi_l(preview) = -integral``, the sign under which the
    feed-forward opposes the lane-yaw disturbance.
    """
    psi_l_dot = v_x_ts * (delta_c / T * t + c0)
    slope = delta_c * T_lp * v_x_ts / T
    offset = delta_c * T_lp**2 * v_x_ts / (2.0 * T) + v_x_ts * c0 * T_lp
    delta_psi_l = slope * t + offset
    if convention == "consistent":
        delta_psi_l = -delta_psi_l
    elif convention != "paper":
        raise ValueError(f"preview convention must be one of {PREVIEW_CONVENTIONS}, got {convention!r}")
    return PreviewInputs(psi_l_dot, delta_psi_l)


def feedback_gains(params: ControllerParams) -> tuple[np.ndarray, float]:
    """State gain row ``F`` and preview gain ``G`` of the steering law."""
    return np.array([params.K_y, 0.0, params.K_psi, 0.0]), params.K_psi


def control_law(state, delta_psi_l: float, params: ControllerParams) -> float:
    e_y, _, e_psi, _ = state
    delta = params.K_y * e_y + params.K_psi * e_psi + params.K_psi * delta_psi_l
    if params.steer_limit is not None:
        delta = float(np.clip(delta, -params.steer_limit, params.steer_limit))
    return delta


def closed_loop_matrices(matrices: StateMatrices, params: ControllerParams) -> tuple[np.ndarray, np.ndarray]:
    """``A_c = A + B F`` and ``B_c = [E, B G]`` for the input ``[psi_l_dot, delta_psi_l]``."""
    F, G = feedback_gains(params)
    A_c = matrices.A + np.outer(matrices.B, F)
    B_c = np.column_stack([matrices.E, matrices.B * G])
    return A_c, B_c


def _rk4_affine(A, u, x, dt):
    def f(xs):
        return A @ xs + u

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True, eq=False)
class ControlledTrajectory:
    """Outcome of one controlled episode.

    ``t`` covers the window from the trigger to the end of the event (the
    whole event when the controller never engaged). ``e_y_uncontrolled`` is
    the recorded lateral offset over the same samples under the active
    offset convention. ``states`` and ``delta`` are empty when not triggered.
    """

    event_id: str
    side: Side
    triggered: bool
    t: np.ndarray
    states: np.ndarray
    delta: np.ndarray
    e_y_uncontrolled: np.ndarray
    trigger_index: int | None = None
    t_s: float | None = None
    mirrored: bool = False
    one_sided_start: bool = False
    info: dict = field(default_factory=dict)

    @property
    def e_y(self) -> np.ndarray:
        return self.states[:, 0]


def find_trigger(event: DepartureEvent, y_s: float) -> int | None:
    hits = np.flatnonzero(np.array([check_trigger(y, event.side, y_s) for y in event.y]))
    return int(hits[0]) if hits.size else None


def run_controlled(event: DepartureEvent, vehicle: VehicleParams = VehicleParams(),
                   ctrl: ControllerParams = ControllerParams(), T_s: float | None = None, *,
                   matrix_convention: str = "paper", offset_convention: str = "paper",
                   method: str = "feedback") -> ControlledTrajectory:
    """Simulate the controller from the first trigger sample to the event end.

    The trajectory is reported on the event's own sample times; ``T_s``
    (default: the event spacing) bounds the integrator step, with inputs held
    over each step. ``method="feedback"`` evaluates the steering law inside
    every RK4 stage; ``method="closed_loop"`` integrates ``A_c x + B_c l``.
    Both describe the same system.
    """
    if method not in ("feedback", "closed_loop"):
        raise ValueError(f"unknown simulation method {method!r}")
    if method == "closed_loop" and ctrl.steer_limit is not None:
        raise ValueError("closed-loop matrices cannot represent a steering limit")
    mirrored = event.side is Side.LEFT
    ev = event.mirrored() if mirrored else event
    sign = -1.0 if mirrored else 1.0
    i_s = find_trigger(ev, ctrl.y_s)
    e_unc = lateral_offset(ev.y, ctrl.w_l, vehicle.w_v, offset_convention)
    if i_s is None:
        return ControlledTrajectory(event.event_id, event.side, False, event.t.copy(), np.empty((0, 4)),
                                    np.empty(0), sign * e_unc, mirrored=mirrored)
    spacing = ev.spacing
    h_max = spacing if T_s is None else T_s
    T = ev.duration
    t_rel = ev.t - ev.t[0]
    c0, delta_c = fit_curvature(ev)
    v_x = float(ev.v[i_s])
    mats = build_matrices(vehicle, v_x, matrix_convention)
    A_c, B_c = closed_loop_matrices(mats, ctrl)
    x0, one_sided = initial_conditions(ev, ev.t[i_s], ctrl.w_l, vehicle.w_v, offset_convention)

    def lane_inputs(tt):
        return preview_inputs(tt, t_rel[i_s], v_x, c0, delta_c, T, ctrl.T_lp, ctrl.preview_convention)

    n = len(ev) - i_s
    states = np.empty((n, 4))
    delta = np.empty(n)
    x = np.asarray(x0, dtype=float)
    for j in range(n):
        tj = t_rel[i_s + j]
        states[j] = x
        delta[j] = control_law(x, lane_inputs(tj).delta_psi_l, ctrl)
        if j == n - 1:
            break
        span = t_rel[i_s + j + 1] - tj
        sub = max(1, int(np.ceil(span / h_max - 1e-9)))
        h = span / sub
        for m in range(sub):
            lane = lane_inputs(tj + m * h)
            if method == "feedback":
                x = np.asarray(step(x, mats, lambda xs, dp=lane.delta_psi_l: control_law(xs, dp, ctrl),
                                    lane.psi_l_dot, h))
            else:
                x = _rk4_affine(A_c, B_c @ np.array(lane), x, h)
    return ControlledTrajectory(
        event.event_id, event.side, True, event.t[i_s:].copy(), sign * states, sign * delta,
        sign * e_unc[i_s:], trigger_index=i_s, t_s=float(event.t[i_s]), mirrored=mirrored,
        one_sided_start=one_sided, info={"v_x": v_x, "c0": sign * c0, "delta_c": sign * delta_c},
    )
