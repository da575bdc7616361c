"""Planar rigid-body flight dynamics and the RK4 integrator.

State vector layout (nondimensional throughout):

    index  0  1  2  3  4      5      6  7
    field  x  y  u  v  theta  omega  m  delta_d

``theta`` is the pitch angle of the body axis measured from +x; the body
axis unit vector (cos theta, sin theta) points from the engine base toward
the nose.  ``delta_d`` is the lagged (actual) gimbal deflection responding
to the commanded deflection through a first-order element.

The derivative of the state is

    r'       = v
    v'       = (F_T + eps * F_A) / m + (0, -g)
    theta'   = omega
    omega'   = (M_T + eta * M_A) / J_z
    m'       = -T / c_ex
    delta_d' = (delta - delta_d) / T_d

with thrust applied at the vehicle base, deflected by delta_d from the
body axis:  F_T = T (cos(theta + delta_d), sin(theta + delta_d)) and
M_T = -T sin(delta_d) l_arm.  Positive gimbal therefore pitches the nose
down, which is the sense needed to flip from 170 deg toward 90 deg.

All functions are pure and dtype-generic: feeding long-double states
through produces long-double results, which the finite-difference
gradient oracle relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, NamedTuple, Protocol

import numpy as np

if TYPE_CHECKING:
    from .scenario import NondimScenario

STATE_DIM = 8
IX_X, IX_Y, IX_U, IX_V, IX_TH, IX_OM, IX_M, IX_DD = range(STATE_DIM)
STATE_FIELDS = ("x", "y", "u", "v", "theta", "omega", "m", "delta_d")

SPEED_FLOOR = 1e-12  # below this nondim speed, aero forces and AoA vanish


class IntegrationError(RuntimeError):
    """Raised when an RK4 stage or result goes non-finite."""

    def __init__(self, msg: str, stage: int | None = None, step: int | None = None):
        super().__init__(msg)
        self.stage = stage
        self.step = step


class AeroForces(NamedTuple):
    """Aerodynamic force components and moment about the cg (nondim)."""

    F_Ax: float
    F_Ay: float
    M_A: float


class AeroModel(Protocol):
    """Anything that can produce aero forces (and their state Jacobian)."""

    def forces(self, state: np.ndarray, scn: "NondimScenario") -> AeroForces: ...

    def forces_jac(
        self, state: np.ndarray, scn: "NondimScenario"
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (F, dF_dv, dF_dtheta) with F = (F_Ax, F_Ay, M_A),
        dF_dv of shape (3, 2) and dF_dtheta of shape (3,)."""
        ...


@dataclass(frozen=True)
class VehicleState:
    """Named view of one state vector, for construction and reporting."""

    x: float
    y: float
    u: float
    v: float
    theta: float
    omega: float
    m: float
    delta_d: float

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "VehicleState":
        return cls(*(float(a) for a in arr))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.u, self.v,
                         self.theta, self.omega, self.m, self.delta_d])


def thrust_force_and_moment(T, delta_d, theta, scn) -> tuple[tuple, float]:
    """Thrust force vector and gimbal moment about the cg.

    The engine sits on the body axis at the base, a lever arm of
    (1 - l_cg_frac) vehicle lengths from the cg.
    """
    psi = theta + delta_d
    F = (T * np.cos(psi), T * np.sin(psi))
    M = -T * np.sin(delta_d) * scn.l_arm
    return F, M


def angle_of_attack(state: np.ndarray) -> float:
    """Angle between the velocity vector and the body axis, in [0, 2*pi).

    Returns 0 by convention when the speed is below SPEED_FLOOR (the aero
    forces vanish there anyway); rollout records flag such steps.
    """
    u, v = state[IX_U], state[IX_V]
    if np.hypot(u, v) < SPEED_FLOOR:
        return 0.0
    alpha = np.arctan2(v, u) - state[IX_TH]
    wrapped = float(alpha % (2.0 * np.pi))
    # float modulo can round a barely-negative angle up to exactly 2*pi
    return 0.0 if wrapped >= 2.0 * math.pi else wrapped


def wind_axes(state: np.ndarray):
    """(sin alpha, cos alpha, speed) computed without arctan branch cuts.

    These are the velocity components resolved in body axes, normalized by
    speed, which is what the surrogate consumes; they are smooth in the
    state wherever speed > 0.
    """
    u, v, th = state[IX_U], state[IX_V], state[IX_TH]
    speed = np.hypot(u, v)
    cth = np.cos(th)
    sth = np.sin(th)
    cos_a = (u * cth + v * sth) / speed
    sin_a = (v * cth - u * sth) / speed
    return sin_a, cos_a, speed


def rhs(state: np.ndarray, ctrl: tuple, aero: AeroForces, scn) -> np.ndarray:
    """State derivative given control (T, delta) and aero forces."""
    T, delta = ctrl
    m = state[IX_M]
    psi = state[IX_TH] + state[IX_DD]
    out = np.empty(STATE_DIM, dtype=state.dtype)
    out[IX_X] = state[IX_U]
    out[IX_Y] = state[IX_V]
    out[IX_U] = (T * np.cos(psi) + scn.eps_corr * aero[0]) / m
    out[IX_V] = (T * np.sin(psi) + scn.eps_corr * aero[1]) / m - scn.g
    out[IX_TH] = state[IX_OM]
    out[IX_OM] = (-T * np.sin(state[IX_DD]) * scn.l_arm
                  + scn.eta_corr * aero[2]) / scn.J_z
    out[IX_M] = -T / scn.c_ex
    out[IX_DD] = (delta - state[IX_DD]) / scn.T_d
    return out


def eval_rhs(state: np.ndarray, T, delta, scn, aero_model: AeroModel) -> np.ndarray:
    """RHS with the aero model evaluated at this state."""
    return rhs(state, (T, delta), aero_model.forces(state, scn), scn)


def rhs_and_jacobians(state: np.ndarray, T, delta, scn, aero_model: AeroModel):
    """Derivative plus exact Jacobians d f/d state (8x8) and d f/d ctrl (8x2).

    The aero model contributes the partials of (F_Ax, F_Ay, M_A) with
    respect to (u, v, theta); everything else is closed form.  Gradient
    engines call this in the double-precision hot loop, so the scalar
    work runs on plain Python floats.
    """
    T = float(T)
    m = float(state[IX_M])
    dd = float(state[IX_DD])
    psi = float(state[IX_TH]) + dd
    cpsi = math.cos(psi)
    spsi = math.sin(psi)
    sdd = math.sin(dd)
    cdd = math.cos(dd)

    F, dF_dv, dF_dth = aero_model.forces_jac(state, scn)
    eps, eta = scn.eps_corr, scn.eta_corr

    f_u = (T * cpsi + eps * float(F[0])) / m
    f_v = (T * spsi + eps * float(F[1])) / m - scn.g
    f = np.array([
        float(state[IX_U]), float(state[IX_V]), f_u, f_v,
        float(state[IX_OM]),
        (-T * sdd * scn.l_arm + eta * float(F[2])) / scn.J_z,
        -T / scn.c_ex,
        (float(delta) - dd) / scn.T_d,
    ])

    J = np.zeros((STATE_DIM, STATE_DIM))
    J[IX_X, IX_U] = 1.0
    J[IX_Y, IX_V] = 1.0
    J[IX_TH, IX_OM] = 1.0

    J[IX_U, IX_U] = eps * float(dF_dv[0, 0]) / m
    J[IX_U, IX_V] = eps * float(dF_dv[0, 1]) / m
    J[IX_U, IX_TH] = (-T * spsi + eps * float(dF_dth[0])) / m
    J[IX_U, IX_M] = -f_u / m
    J[IX_U, IX_DD] = -T * spsi / m

    J[IX_V, IX_U] = eps * float(dF_dv[1, 0]) / m
    J[IX_V, IX_V] = eps * float(dF_dv[1, 1]) / m
    J[IX_V, IX_TH] = (T * cpsi + eps * float(dF_dth[1])) / m
    J[IX_V, IX_M] = -(f_v + scn.g) / m
    J[IX_V, IX_DD] = T * cpsi / m

    J[IX_OM, IX_U] = eta * float(dF_dv[2, 0]) / scn.J_z
    J[IX_OM, IX_V] = eta * float(dF_dv[2, 1]) / scn.J_z
    J[IX_OM, IX_TH] = eta * float(dF_dth[2]) / scn.J_z
    J[IX_OM, IX_DD] = -T * cdd * scn.l_arm / scn.J_z

    J[IX_DD, IX_DD] = -1.0 / scn.T_d

    B = np.zeros((STATE_DIM, 2))
    B[IX_U, 0] = cpsi / m
    B[IX_V, 0] = spsi / m
    B[IX_OM, 0] = -sdd * scn.l_arm / scn.J_z
    B[IX_M, 0] = -1.0 / scn.c_ex
    B[IX_DD, 1] = 1.0 / scn.T_d

    return f, J, B


# ---------------------------------------------------------------------------
# RK4
# ---------------------------------------------------------------------------

def rk4_generic(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray,
                dt: float) -> np.ndarray:
    """One classical RK4 step of y' = f(y) for an autonomous system."""
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_advance(state: np.ndarray, T, delta, dt, scn, aero_model: AeroModel):
    """One RK4 step of the vehicle dynamics, returning the stage states.

    Control is held constant over the step (zero-order hold); the aero
    model is re-evaluated at each stage state.  Returns
    (next_state, (a2, a3, a4)) where a2..a4 are the interior stage states
    (the first stage state is ``state`` itself).  Bit-identical across
    repeated calls with the same inputs.
    """
    k1 = eval_rhs(state, T, delta, scn, aero_model)
    a2 = state + (0.5 * dt) * k1
    k2 = eval_rhs(a2, T, delta, scn, aero_model)
    a3 = state + (0.5 * dt) * k2
    k3 = eval_rhs(a3, T, delta, scn, aero_model)
    a4 = state + dt * k3
    k4 = eval_rhs(a4, T, delta, scn, aero_model)
    nxt = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return nxt, (a2, a3, a4)


def rk4_step(state: np.ndarray, ctrl: tuple, aero_model: AeroModel, dt,
             scn) -> np.ndarray:
    """Public single-step integrator with non-finite detection."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    T, delta = ctrl
    nxt, stages = rk4_advance(state, T, delta, dt, scn, aero_model)
    if not np.isfinite(nxt).all():
        for i, a in enumerate(stages):
            if not np.isfinite(a).all():
                raise IntegrationError(
                    f"non-finite RK4 stage state (stage {i + 2})", stage=i + 2)
        bad = [STATE_FIELDS[i] for i in np.flatnonzero(~np.isfinite(nxt))]
        raise IntegrationError(
            f"non-finite RK4 result in field(s) {bad}", stage=4)
    return nxt
