"""Linear single-track lateral dynamics in lane-error coordinates.

State is ``[e_y, e_y_dot, e_psi, e_psi_dot]``; inputs are the front steering
angle and the lane's yaw rate. Two matrix conventions are available:
``"paper"`` couples yaw rate into lateral acceleration through
``-(2 C_af l_f + 2 C_ar l_r) / (M v_x)``; ``"standard"`` uses the usual
textbook term ``(-2 C_af l_f + 2 C_ar l_r) / (M v_x)`` in that entry.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

MIN_SPEED = 0.5
CONVENTIONS = ("paper", "standard")


@dataclass(frozen=True)
class VehicleParams:
    C_alpha_f: float = 80000.0
    C_alpha_r: float = 80000.0
    l_f: float = 1.43
    l_r: float = 1.47
    M: float = 1000.0
    I_z: float = 3344.0
    w_v: float = 1.9

    def __post_init__(self):
        for name, value in vars(self).items():
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"vehicle parameter {name} must be positive, got {value!r}")


class VehicleState(NamedTuple):
    e_y: float = 0.0
    e_y_dot: float = 0.0
    e_psi: float = 0.0
    e_psi_dot: float = 0.0


class StateMatrices(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray


def build_matrices(params: VehicleParams, v_x: float, convention: str = "paper") -> StateMatrices:
    """State, steering-input and lane-yaw-rate matrices at speed ``v_x``.

    A single mass ``M`` is used everywhere a mass appears.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"matrix convention must be one of {CONVENTIONS}, got {convention!r}")
    if not v_x > MIN_SPEED:
        raise ValueError(f"linear model needs v_x > {MIN_SPEED} m/s, got {v_x}")
    cf2, cr2 = 2.0 * params.C_alpha_f, 2.0 * params.C_alpha_r
    lf, lr, M, Iz = params.l_f, params.l_r, params.M, params.I_z
    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[2, 3] = 1.0
    A[1, 1] = -(cf2 + cr2) / (M * v_x)
    A[1, 2] = (cf2 + cr2) / M
    if convention == "paper":
        A[1, 3] = -(cf2 * lf + cr2 * lr) / (M * v_x)
    else:
        A[1, 3] = (-cf2 * lf + cr2 * lr) / (M * v_x)
    A[3, 1] = -(cf2 * lf - cr2 * lr) / (Iz * v_x)
    A[3, 2] = (cf2 * lf - cr2 * lr) / Iz
    A[3, 3] = -(cf2 * lf**2 + cr2 * lr**2) / (Iz * v_x)
    B = np.array([0.0, cf2 / M, 0.0, cf2 * lf / Iz])
    E = np.array([0.0, -(cf2 * lf - cr2 * lr) / (M * v_x) - v_x, 0.0, -(cf2 * lf**2 + cr2 * lr**2) / (Iz * v_x)])
    return StateMatrices(A, B, E)


def step(state, matrices: StateMatrices, delta: float | Callable[[np.ndarray], float],
         psi_l_dot: float, dt: float) -> VehicleState:
    """Advance the state by one classical RK4 step.

    ``psi_l_dot`` is held over the step. ``delta`` is either a held steering
    angle or a state-feedback callable evaluated at every RK4 stage.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(state, dtype=float)
    if not (np.all(np.isfinite(x)) and np.isfinite(psi_l_dot)):
        raise ValueError("non-finite state or input")
    A, B, E = matrices
    if callable(delta):
        steer = delta
    else:
        if not np.isfinite(delta):
            raise ValueError("non-finite steering input")
        steer = lambda _x: delta  # noqa: E731
    disturbance = E * psi_l_dot

    def f(xs):
        return A @ xs + B * steer(xs) + disturbance

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return VehicleState(*(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)))
