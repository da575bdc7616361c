"""Trajectory rollout, composite loss, and gradients of loss w.r.t. controls.

The rollout advances the coupled dynamics + aero system over K RK4 steps
from the scenario's initial state.  The loss combines terminal residuals
with path penalties (control smoothness, dry-mass floor, pitch error after
the flip deadline).  Three gradient routes are provided:

* :func:`grad_bptt` - reverse accumulation through every RK4 step using
  the exact transposed stage recursion; it stores the K+1 step states,
  so auxiliary memory grows linearly with the horizon.
* :func:`grad_adjoint` - the same adjoint recursion integrated backward,
  but forward states are re-materialized segment by segment from a fixed
  number of checkpoints, so peak auxiliary memory is essentially flat in
  K (at the price of one extra forward recompute).
* :func:`finite_diff_grad` - central differences on the raw parameters,
  the independent validation oracle.  It can evaluate the rollout in
  extended precision to push the difference roundoff floor far below the
  gradient-check tolerances.

Both engines call the identical single-step reverse routine in the same
order, so their results agree to the last bit; what differs is how the
forward states are kept alive, which is exactly what the memory counters
report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .controls import (
    ControlSequence,
    RawControlParams,
    reparameterize,
    reparameterize_grads,
    smoothness_grads,
    smoothness_penalty,
)
from .dynamics import (
    IX_M,
    IX_OM,
    IX_TH,
    IX_U,
    IX_V,
    IX_X,
    IX_Y,
    STATE_DIM,
    STATE_FIELDS,
    AeroModel,
    angle_of_attack,
    rhs_and_jacobians,
    rk4_advance,
)

if TYPE_CHECKING:
    from .scenario import NondimScenario

ADJOINT_TARGET_SEGMENTS = 24  # checkpoint budget; segment length scales with K

LOSS_TERM_NAMES = ("terminal_position", "terminal_velocity", "terminal_pitch",
                   "terminal_omega", "smoothness", "mass_floor", "flip_deadline")


class RolloutError(RuntimeError):
    """Raised when the state goes non-finite during a rollout."""

    def __init__(self, msg: str, step: int, fields: list[str]):
        super().__init__(msg)
        self.step = step
        self.fields = fields


@dataclass(frozen=True)
class LossWeights:
    """Weights of the loss terms; residuals are nondimensional and O(1)."""

    w_r: float = 1.0
    w_v: float = 1.0
    w_theta: float = 1.0
    w_omega: float = 1.0
    w_smooth: float = 0.01
    w_mass: float = 10.0
    w_flip: float = 0.1


@dataclass(frozen=True)
class Trajectory:
    """Record of one rollout: states, controls, and aero logs.

    ``states`` has K+1 rows in the dynamics module's layout; control and
    aero logs have one row per step.  ``alpha_defined`` flags steps whose
    speed was above the floor (angle of attack is 0 by convention below).
    """

    states: np.ndarray        # (K+1, 8)
    thrust: np.ndarray        # (K,)
    delta_cmd: np.ndarray     # (K,)
    aero: np.ndarray          # (K, 3): F_Ax, F_Ay, M_A
    alpha: np.ndarray         # (K,) rad in [0, 2*pi)
    alpha_defined: np.ndarray  # (K,) bool
    dt: float

    @property
    def K(self) -> int:
        return self.thrust.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.states.shape[0]) * self.dt

    def controls(self) -> ControlSequence:
        return ControlSequence(thrust=self.thrust, delta=self.delta_cmd)


@dataclass(frozen=True)
class LossBreakdown:
    """Composite loss and its named terms; total is the exact sum."""

    total: float
    terms: dict[str, float]


@dataclass
class GradientReport:
    """Gradient of the loss with respect to the raw control parameters."""

    grad_u_T: np.ndarray
    grad_u_delta: np.ndarray
    engine: str               # "bptt" | "adjoint" | "finite_diff"
    wall_time_s: float
    peak_aux_floats: int = 0  # peak auxiliary state storage, in float slots
    n_rollouts: int = 0       # forward rollouts consumed (finite differences)
    loss: LossBreakdown | None = None

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.grad_u_T, self.grad_u_delta])


class MemoryMeter:
    """Counts live auxiliary floats; engines report the peak."""

    def __init__(self) -> None:
        self.current = 0
        self.peak = 0

    def alloc(self, n: int) -> None:
        self.current += n
        if self.current > self.peak:
            self.peak = self.current

    def free(self, n: int) -> None:
        self.current -= n


# ---------------------------------------------------------------------------
# Forward simulation
# ---------------------------------------------------------------------------

def _check_finite(x: np.ndarray, k: int) -> None:
    if not np.isfinite(x).all():
        bad = [STATE_FIELDS[i] for i in np.flatnonzero(~np.isfinite(x))]
        raise RolloutError(
            f"non-finite state at step {k}: field(s) {bad}", step=k, fields=bad)


def _simulate(thrust, delta, scn, aero: AeroModel, dtype=None) -> np.ndarray:
    """All K+1 states of the rollout (dtype-generic)."""
    dtype = dtype or np.float64
    K = scn.K
    states = np.empty((K + 1, STATE_DIM), dtype=dtype)
    states[0] = scn.x0.astype(dtype)
    x = states[0]
    # divergence is detected explicitly per step; intermediate overflow is
    # expected on the way to the RolloutError
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            x, _ = rk4_advance(x, thrust[k], delta[k], scn.dt, scn, aero)
            _check_finite(x, k + 1)
            states[k + 1] = x
    return states


def first_flip_index(scn) -> int:
    """Smallest state index k with t_k strictly past the flip deadline."""
    for k in range(scn.K + 1):
        if k * scn.dt > scn.t_flip:
            return k
    return scn.K + 1


class _PathAccumulator:
    """Streams the per-state loss contributions in ascending step order.

    Both gradient engines and the finite-difference oracle feed states
    through this accumulator, so every route sums the loss terms in an
    identical floating-point order.
    """

    def __init__(self, scn, w: LossWeights, dtype=None):
        self.scn = scn
        self.w = w
        self.k_flip = first_flip_index(scn)
        zero = (dtype or np.float64)(0.0)
        self.mass_acc = zero
        self.flip_acc = zero
        self.terminal = None

    def add(self, x: np.ndarray, k: int) -> None:
        m = x[IX_M]
        if m < self.scn.m_dry:
            d = self.scn.m_dry - m
            self.mass_acc = self.mass_acc + d * d
        if k >= self.k_flip:
            e = x[IX_TH] - self.scn.theta_f
            self.flip_acc = self.flip_acc + e * e

    def finish(self, x_final: np.ndarray, seq: ControlSequence):
        scn, w = self.scn, self.w
        dr = (x_final[IX_X] - scn.r_f[0], x_final[IX_Y] - scn.r_f[1])
        dv = (x_final[IX_U] - scn.v_f[0], x_final[IX_V] - scn.v_f[1])
        dth = x_final[IX_TH] - scn.theta_f
        dom = x_final[IX_OM] - scn.omega_f
        terms = (
            w.w_r * (dr[0] * dr[0] + dr[1] * dr[1]),
            w.w_v * (dv[0] * dv[0] + dv[1] * dv[1]),
            w.w_theta * dth * dth,
            w.w_omega * dom * dom,
            w.w_smooth * smoothness_penalty(seq, scn),
            w.w_mass * self.mass_acc,
            w.w_flip * self.flip_acc,
        )
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total, terms


def _breakdown(total, terms) -> LossBreakdown:
    return LossBreakdown(
        total=float(total),
        terms={name: float(t) for name, t in zip(LOSS_TERM_NAMES, terms)},
    )


# ---------------------------------------------------------------------------
# Public rollout and loss
# ---------------------------------------------------------------------------

def rollout(raw: RawControlParams, scn, aero: AeroModel) -> Trajectory:
    """Roll out the reparameterized controls from the scenario start state."""
    seq = reparameterize(raw, scn)
    return rollout_controls(seq, scn, aero)


def rollout_controls(seq: ControlSequence, scn, aero: AeroModel) -> Trajectory:
    """Roll out an explicit control sequence (used by forward-only replay)."""
    if seq.K != scn.K:
        raise ValueError(f"control sequence length {seq.K} != scenario K {scn.K}")
    states = _simulate(seq.thrust, seq.delta, scn, aero)
    K = scn.K
    aero_log = np.empty((K, 3))
    alpha = np.empty(K)
    defined = np.empty(K, dtype=bool)
    for k in range(K):
        x = states[k]
        aero_log[k] = aero.forces(x, scn)
        speed = np.hypot(x[IX_U], x[IX_V])
        defined[k] = bool(speed >= 1e-12)
        alpha[k] = angle_of_attack(x)
    return Trajectory(states=states, thrust=seq.thrust.copy(),
                      delta_cmd=seq.delta.copy(), aero=aero_log, alpha=alpha,
                      alpha_defined=defined, dt=float(scn.dt))


def loss(traj: Trajectory, w: LossWeights, scn) -> LossBreakdown:
    """Composite loss of a completed trajectory.

    The control sequence embedded in the trajectory supplies the
    smoothness term, so no raw parameters are needed here.
    """
    acc = _PathAccumulator(scn, w)
    for k in range(traj.states.shape[0]):
        acc.add(traj.states[k], k)
    total, terms = acc.finish(traj.states[-1], traj.controls())
    return _breakdown(total, terms)


# ---------------------------------------------------------------------------
# Reverse sweep building blocks
# ---------------------------------------------------------------------------

def _terminal_cotangent(x_final: np.ndarray, scn, w: LossWeights) -> np.ndarray:
    lam = np.zeros(STATE_DIM)
    lam[IX_X] = 2.0 * w.w_r * (x_final[IX_X] - scn.r_f[0])
    lam[IX_Y] = 2.0 * w.w_r * (x_final[IX_Y] - scn.r_f[1])
    lam[IX_U] = 2.0 * w.w_v * (x_final[IX_U] - scn.v_f[0])
    lam[IX_V] = 2.0 * w.w_v * (x_final[IX_V] - scn.v_f[1])
    lam[IX_TH] = 2.0 * w.w_theta * (x_final[IX_TH] - scn.theta_f)
    lam[IX_OM] = 2.0 * w.w_omega * (x_final[IX_OM] - scn.omega_f)
    return lam


def _add_path_cotangent(lam: np.ndarray, x: np.ndarray, k: int, k_flip: int,
                        scn, w: LossWeights) -> None:
    m = x[IX_M]
    if m < scn.m_dry:
        lam[IX_M] += -2.0 * w.w_mass * (scn.m_dry - m)
    if k >= k_flip:
        lam[IX_TH] += 2.0 * w.w_flip * (x[IX_TH] - scn.theta_f)


def _step_vjp(x: np.ndarray, T, delta, scn, aero: AeroModel, lam: np.ndarray):
    """Pull the cotangent of the step result back through one RK4 step.

    Reconstructs the stage states from the step-start state (the stage
    derivatives fall out of the Jacobian evaluations for free), then runs
    the transposed stage recursion.  Returns (cotangent w.r.t. the step
    start state, cotangent w.r.t. (T, delta)).
    """
    dt = scn.dt
    f1, J1, B1 = rhs_and_jacobians(x, T, delta, scn, aero)
    a2 = x + (0.5 * dt) * f1
    f2, J2, B2 = rhs_and_jacobians(a2, T, delta, scn, aero)
    a3 = x + (0.5 * dt) * f2
    f3, J3, B3 = rhs_and_jacobians(a3, T, delta, scn, aero)
    a4 = x + dt * f3
    _, J4, B4 = rhs_and_jacobians(a4, T, delta, scn, aero)

    g_k1 = (dt / 6.0) * lam
    g_k2 = (dt / 3.0) * lam
    g_k3 = (dt / 3.0) * lam
    g_k4 = (dt / 6.0) * lam

    g_a4 = J4.T @ g_k4
    g_c = B4.T @ g_k4
    g_x = lam + g_a4
    g_k3 += dt * g_a4

    g_a3 = J3.T @ g_k3
    g_c += B3.T @ g_k3
    g_x += g_a3
    g_k2 += (0.5 * dt) * g_a3

    g_a2 = J2.T @ g_k2
    g_c += B2.T @ g_k2
    g_x += g_a2
    g_k1 += (0.5 * dt) * g_a2

    g_x += J1.T @ g_k1
    g_c += B1.T @ g_k1
    return g_x, g_c


def _controls_to_raw_grad(raw: RawControlParams, seq: ControlSequence,
                          gT: np.ndarray, gd: np.ndarray, scn, w: LossWeights):
    """Add the smoothness term and chain through the squash mapping."""
    sT, sd = smoothness_grads(seq, scn)
    gT = gT + w.w_smooth * sT
    gd = gd + w.w_smooth * sd
    dT_du, dd_du = reparameterize_grads(raw, scn)
    return gT * dT_du, gd * dd_du


def _finalize_report(raw, seq, gT, gd, scn, w, engine, t0, meter, total, terms,
                     n_rollouts=0) -> GradientReport:
    gu_T, gu_d = _controls_to_raw_grad(raw, seq, gT, gd, scn, w)
    for name, g in (("u_T", gu_T), ("u_delta", gu_d)):
        bad = np.flatnonzero(~np.isfinite(g))
        if bad.size:
            raise FloatingPointError(
                f"non-finite gradient component {name}[{bad[0]}]")
    return GradientReport(
        grad_u_T=gu_T, grad_u_delta=gu_d, engine=engine,
        wall_time_s=time.perf_counter() - t0,
        peak_aux_floats=meter.peak, n_rollouts=n_rollouts,
        loss=_breakdown(total, terms))


# ---------------------------------------------------------------------------
# Engine 1: backpropagation through time (linear-memory tape of states)
# ---------------------------------------------------------------------------

def grad_bptt(raw: RawControlParams, scn, aero: AeroModel,
              w: LossWeights | None = None) -> GradientReport:
    """Exact gradient by reverse accumulation over all stored step states."""
    w = w or scn.weights
    t0 = time.perf_counter()
    seq = reparameterize(raw, scn)
    K = scn.K
    meter = MemoryMeter()

    states = _simulate(seq.thrust, seq.delta, scn, aero)
    meter.alloc(states.size)

    acc = _PathAccumulator(scn, w)
    for k in range(K + 1):
        acc.add(states[k], k)
    total, terms = acc.finish(states[K], seq)

    lam = _terminal_cotangent(states[K], scn, w)
    meter.alloc(lam.size)
    _add_path_cotangent(lam, states[K], K, acc.k_flip, scn, w)

    gT = np.zeros(K)
    gd = np.zeros(K)
    for k in range(K - 1, -1, -1):
        lam, g_c = _step_vjp(states[k], seq.thrust[k], seq.delta[k],
                             scn, aero, lam)
        gT[k], gd[k] = g_c
        _add_path_cotangent(lam, states[k], k, acc.k_flip, scn, w)

    meter.free(lam.size)
    meter.free(states.size)
    return _finalize_report(raw, seq, gT, gd, scn, w, "bptt", t0, meter,
                            total, terms)


# ---------------------------------------------------------------------------
# Engine 2: adjoint sweep with checkpointed forward recomputation
# ---------------------------------------------------------------------------

def grad_adjoint(raw: RawControlParams, scn, aero: AeroModel,
                 w: LossWeights | None = None) -> GradientReport:
    """Same adjoint recursion, bounded memory via checkpoint segments.

    The forward pass keeps only a fixed budget of segment-start states;
    the backward sweep re-materializes each segment's step states from
    its checkpoint before pulling the adjoint state through it.  Peak
    auxiliary memory is therefore governed by the checkpoint budget, not
    by K, while the gradient is identical to the linear-memory engine.
    """
    w = w or scn.weights
    t0 = time.perf_counter()
    seq = reparameterize(raw, scn)
    K = scn.K
    seg_len = max(1, -(-K // ADJOINT_TARGET_SEGMENTS))
    n_seg = -(-K // seg_len)
    meter = MemoryMeter()

    checkpoints = np.empty((n_seg, STATE_DIM))
    meter.alloc(checkpoints.size)
    acc = _PathAccumulator(scn, w)

    x = scn.x0.copy()
    meter.alloc(x.size)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            if k % seg_len == 0:
                checkpoints[k // seg_len] = x
            acc.add(x, k)
            x, _ = rk4_advance(x, seq.thrust[k], seq.delta[k], scn.dt, scn,
                               aero)
            _check_finite(x, k + 1)
    acc.add(x, K)
    total, terms = acc.finish(x, seq)

    lam = _terminal_cotangent(x, scn, w)
    meter.alloc(lam.size)
    _add_path_cotangent(lam, x, K, acc.k_flip, scn, w)
    meter.free(x.size)

    gT = np.zeros(K)
    gd = np.zeros(K)
    for seg in range(n_seg - 1, -1, -1):
        s = seg * seg_len
        e = min(s + seg_len, K)
        buf = np.empty((e - s, STATE_DIM))
        meter.alloc(buf.size)
        xs = checkpoints[seg]
        for k in range(s, e):
            buf[k - s] = xs
            if k < e - 1:
                xs, _ = rk4_advance(xs, seq.thrust[k], seq.delta[k],
                                    scn.dt, scn, aero)
        for k in range(e - 1, s - 1, -1):
            lam, g_c = _step_vjp(buf[k - s], seq.thrust[k], seq.delta[k],
                                 scn, aero, lam)
            gT[k], gd[k] = g_c
            _add_path_cotangent(lam, buf[k - s], k, acc.k_flip, scn, w)
        meter.free(buf.size)

    meter.free(lam.size)
    meter.free(checkpoints.size)
    return _finalize_report(raw, seq, gT, gd, scn, w, "adjoint", t0, meter,
                            total, terms)


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------

def _loss_scalar(u_T, u_delta, scn, aero: AeroModel, w: LossWeights, dtype):
    """Streaming loss evaluation in the requested dtype, O(1) state memory."""
    raw = RawControlParams(u_T, u_delta)
    seq = reparameterize(raw, scn)
    acc = _PathAccumulator(scn, w, dtype=dtype)
    x = scn.x0.astype(dtype)
    for k in range(scn.K):
        acc.add(x, k)
        x, _ = rk4_advance(x, seq.thrust[k], seq.delta[k], scn.dt, scn, aero)
    acc.add(x, scn.K)
    total, _ = acc.finish(x, seq)
    return total


def finite_diff_grad(raw: RawControlParams, scn, aero: AeroModel,
                     w: LossWeights | None = None, h: float = 1e-6,
                     dtype=None) -> GradientReport:
    """Central differences on every raw parameter (2 rollouts per entry).

    ``dtype=np.longdouble`` runs the perturbed rollouts in extended
    precision, which drops the cancellation floor of the difference
    quotient by ~5 orders of magnitude on x86; the analytic engines stay
    untouched, so the oracle remains an independent route to the value.
    """
    w = w or scn.weights
    if h <= 0:
        raise ValueError("h must be positive")
    dtype = dtype or np.float64
    t0 = time.perf_counter()
    K = scn.K
    u_T = raw.u_T.astype(dtype)
    u_d = raw.u_delta.astype(dtype)
    gT = np.empty(K)
    gd = np.empty(K)
    n_rollouts = 0

    def probe(base, i):
        nonlocal n_rollouts
        orig = base[i]
        base[i] = orig + h
        lp = _loss_scalar(u_T, u_d, scn, aero, w, dtype)
        base[i] = orig - h
        lm = _loss_scalar(u_T, u_d, scn, aero, w, dtype)
        base[i] = orig
        n_rollouts += 2
        return float((lp - lm) / (2.0 * dtype(h)))

    for i in range(K):
        gT[i] = probe(u_T, i)
    for i in range(K):
        gd[i] = probe(u_d, i)

    total = _loss_scalar(u_T, u_d, scn, aero, w, dtype)
    return GradientReport(
        grad_u_T=gT, grad_u_delta=gd, engine="finite_diff",
        wall_time_s=time.perf_counter() - t0,
        peak_aux_floats=2 * STATE_DIM, n_rollouts=n_rollouts,
        loss=LossBreakdown(total=float(total), terms={}))
