import math
from dataclasses import replace

import numpy as np
import pytest

import flipopt as fo
import flipopt.aero as am
import flipopt.rollout as ro
from conftest import random_raw, truncate
from flipopt import dynamics as dyn


@pytest.fixture(scope="module")
def short_scn(case1_cfg):
    return fo.nondimensionalize(truncate(case1_cfg, 8))


# ---------------------------------------------------------------------------
# Rollout record
# ---------------------------------------------------------------------------

def test_initial_state_matches_preset(case1_scn, simplified):
    traj = ro.rollout(fo.init_raw_params(case1_scn), case1_scn, simplified)
    x0 = traj.states[0]
    assert x0[4] == pytest.approx(math.radians(170.0))
    assert x0[2] == pytest.approx(-18.82 / 335.57)
    assert x0[3] == pytest.approx(-106.73 / 335.57)
    assert x0[6] == case1_scn.m_wet
    assert x0[7] == 0.0


def test_rollout_replay_is_bit_identical(short_scn, simplified):
    raw = random_raw(short_scn, 1)
    a = ro.rollout(raw, short_scn, simplified)
    b = ro.rollout(raw, short_scn, simplified)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.aero, b.aero)
    assert np.array_equal(a.alpha, b.alpha)


def test_states_replay_through_rk4_step(short_scn, simplified):
    raw = random_raw(short_scn, 2)
    traj = ro.rollout(raw, short_scn, simplified)
    for k in range(traj.K):
        nxt = fo.rk4_step(traj.states[k], (traj.thrust[k], traj.delta_cmd[k]),
                          simplified, short_scn.dt, short_scn)
        assert np.array_equal(nxt, traj.states[k + 1])


def test_single_step_against_hand_rolled_rk4(short_scn):
    """Independent RK4 reimplementation in the test, aero disabled."""
    scn = short_scn
    T = scn.T_min
    raw = fo.RawControlParams(np.full(scn.K, -200.0), np.zeros(scn.K))
    traj = ro.rollout(raw, scn, am.NoAero())

    def f(s):
        x, y, u, v, th, om, m, dd = s
        psi = th + dd
        return np.array([
            u, v,
            T * math.cos(psi) / m,
            T * math.sin(psi) / m - scn.g,
            om,
            -T * math.sin(dd) * scn.l_arm / scn.J_z,
            -T / scn.c_ex,
            (0.0 - dd) / scn.T_d,
        ])

    s0 = scn.x0
    k1 = f(s0)
    k2 = f(s0 + 0.5 * scn.dt * k1)
    k3 = f(s0 + 0.5 * scn.dt * k2)
    k4 = f(s0 + scn.dt * k3)
    expected = s0 + scn.dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    np.testing.assert_allclose(traj.states[1], expected, rtol=1e-13, atol=1e-16)
    assert traj.thrust[0] == pytest.approx(scn.T_min, rel=1e-12)


def test_rollout_controls_length_check(short_scn, simplified):
    seq = fo.ControlSequence(thrust=np.full(3, 0.02), delta=np.zeros(3))
    with pytest.raises(ValueError, match="length"):
        fo.rollout_controls(seq, short_scn, simplified)


def test_nonfinite_state_reports_step(short_scn):
    class BlowUpAero:
        def __init__(self):
            self.calls = 0

        def forces(self, s, scn):
            self.calls += 1
            if self.calls > 12:  # poison the fourth step
                return fo.AeroForces(float("nan"), 0.0, 0.0)
            return fo.AeroForces(0.0, 0.0, 0.0)

        def forces_jac(self, s, scn):
            raise NotImplementedError

    raw = fo.init_raw_params(short_scn)
    with pytest.raises(ro.RolloutError) as err:
        ro.rollout(raw, short_scn, BlowUpAero())
    assert err.value.step == 4
    assert err.value.fields


def test_alpha_log_and_flags(short_scn, simplified):
    traj = ro.rollout(fo.init_raw_params(short_scn), short_scn, simplified)
    assert traj.alpha.shape == (short_scn.K,)
    assert traj.alpha_defined.all()
    assert ((0.0 <= traj.alpha) & (traj.alpha < 2 * math.pi)).all()


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def _make_traj_hitting_targets(scn, K=4):
    x = np.zeros((K + 1, 8))
    x[:, 0] = scn.r_f[0]
    x[:, 1] = scn.r_f[1]
    x[:, 2] = scn.v_f[0]
    x[:, 3] = scn.v_f[1]
    x[:, 4] = scn.theta_f
    x[:, 5] = scn.omega_f
    x[:, 6] = scn.m_wet
    return ro.Trajectory(states=x, thrust=np.full(K, 0.02),
                         delta_cmd=np.zeros(K), aero=np.zeros((K, 3)),
                         alpha=np.zeros(K), alpha_defined=np.ones(K, bool),
                         dt=float(scn.dt))


def test_loss_zero_on_exact_targets(case1_scn):
    traj = _make_traj_hitting_targets(case1_scn)
    lb = fo.loss(traj, case1_scn.weights, case1_scn)
    assert lb.total == 0.0
    assert all(v == 0.0 for v in lb.terms.values())


def test_loss_unit_position_residual(case1_scn):
    scn = case1_scn
    traj = _make_traj_hitting_targets(scn)
    states = traj.states.copy()
    states[-1, 0] += 1.0  # one vehicle length off along x
    traj = replace(traj, states=states)
    w = fo.LossWeights(w_r=1.0, w_v=0, w_theta=0, w_omega=0, w_smooth=0,
                       w_mass=0, w_flip=0)
    lb = fo.loss(traj, w, scn)
    assert lb.total == pytest.approx(1.0, rel=1e-12)


def test_loss_total_is_sum_of_terms(case1_scn, simplified):
    traj = ro.rollout(random_raw(case1_scn, 7), case1_scn, simplified)
    lb = fo.loss(traj, case1_scn.weights, case1_scn)
    assert lb.total == pytest.approx(sum(lb.terms.values()), rel=1e-12)
    assert all(v >= 0.0 for v in lb.terms.values())
    assert set(lb.terms) == set(ro.LOSS_TERM_NAMES)


def test_case1_targets_nondimensional(case1_scn):
    np.testing.assert_allclose(case1_scn.r_f, [-7.2, -24.0], rtol=1e-14)


def test_mass_floor_and_flip_terms_activate(case1_scn):
    scn = case1_scn
    # horizon long enough that the flip deadline falls inside it
    traj = _make_traj_hitting_targets(scn, K=16)
    states = traj.states.copy()
    states[2, 6] = scn.m_dry - 0.01
    states[-1, 4] = scn.theta_f + 0.1
    traj = replace(traj, states=states)
    lb = fo.loss(traj, fo.LossWeights(w_r=0, w_v=0, w_theta=0, w_omega=0,
                                      w_smooth=0, w_mass=2.0, w_flip=3.0), scn)
    assert lb.terms["mass_floor"] == pytest.approx(2.0 * 0.01**2, rel=1e-10)
    k_flip = ro.first_flip_index(scn)
    assert k_flip <= traj.K  # deadline falls inside this short horizon
    assert lb.terms["flip_deadline"] == pytest.approx(3.0 * 0.1**2, rel=1e-10)


def test_first_flip_index_strictly_after_deadline(case1_scn):
    k = ro.first_flip_index(case1_scn)
    assert (k - 1) * case1_scn.dt <= case1_scn.t_flip < k * case1_scn.dt


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("model_name", ["simplified", "surrogate"])
def test_bptt_matches_finite_differences(model_name, case1_cfg, surrogate):
    scn = fo.nondimensionalize(truncate(case1_cfg, 6))
    model = am.SimplifiedAero(C_D=1.0) if model_name == "simplified" else surrogate
    raw = random_raw(scn, 11)
    g = ro.grad_bptt(raw, scn, model, scn.weights).stacked()
    r = ro.finite_diff_grad(raw, scn, model, scn.weights, h=1e-6,
                            dtype=np.longdouble).stacked()
    big = np.abs(r) > 1e-8
    np.testing.assert_allclose(g[big], r[big], rtol=1e-5)
    np.testing.assert_allclose(g[~big], r[~big], atol=1e-8)


def test_adjoint_equals_bptt_exactly(case2_cfg, surrogate):
    scn = fo.nondimensionalize(truncate(case2_cfg, 30))
    raw = random_raw(scn, 13)
    gb = ro.grad_bptt(raw, scn, surrogate, scn.weights)
    ga = ro.grad_adjoint(raw, scn, surrogate, scn.weights)
    assert np.array_equal(gb.grad_u_T, ga.grad_u_T)
    assert np.array_equal(gb.grad_u_delta, ga.grad_u_delta)
    assert gb.loss.total == ga.loss.total
    assert gb.engine == "bptt" and ga.engine == "adjoint"


def test_gradient_zero_at_exact_optimum(case1_cfg, simplified):
    """Roll out constant controls, then declare the endpoint the target."""
    scn = fo.nondimensionalize(truncate(case1_cfg, 10))
    raw = fo.RawControlParams(np.full(10, 0.3), np.full(10, -0.2))
    traj = ro.rollout(raw, scn, simplified)
    xK = traj.states[-1]
    scn_opt = replace(
        scn,
        x0=scn.x0.copy(), r_f=np.array([xK[0], xK[1]]),
        v_f=np.array([xK[2], xK[3]]), theta_f=float(xK[4]),
        omega_f=float(xK[5]),
        weights=replace(scn.weights, w_flip=0.0))
    for engine in (ro.grad_bptt, ro.grad_adjoint):
        rep = engine(raw, scn_opt, simplified, scn_opt.weights)
        assert rep.loss.total == 0.0
        assert np.abs(rep.stacked()).max() <= 1e-10


def test_smoothness_gradient_zero_for_constant_controls(case1_cfg, simplified):
    scn = fo.nondimensionalize(truncate(case1_cfg, 6))
    w = fo.LossWeights(w_r=0, w_v=0, w_theta=0, w_omega=0, w_smooth=1.0,
                       w_mass=0, w_flip=0)
    raw = fo.RawControlParams(np.full(6, 0.4), np.full(6, 0.1))
    rep = ro.grad_bptt(raw, scn, simplified, w)
    assert rep.loss.total == 0.0
    np.testing.assert_array_equal(rep.grad_u_T, np.zeros(6))
    np.testing.assert_array_equal(rep.grad_u_delta, np.zeros(6))


def test_fd_rollout_count_and_richardson(case1_cfg, simplified):
    scn = fo.nondimensionalize(truncate(case1_cfg, 5))
    raw = random_raw(scn, 17)
    fd1 = ro.finite_diff_grad(raw, scn, simplified, scn.weights, h=1e-3,
                              dtype=np.longdouble)
    assert fd1.n_rollouts == 2 * (2 * scn.K)
    fd2 = ro.finite_diff_grad(raw, scn, simplified, scn.weights, h=5e-4,
                              dtype=np.longdouble)
    fd4 = ro.finite_diff_grad(raw, scn, simplified, scn.weights, h=2e-3,
                              dtype=np.longdouble)
    # central differences converge at second order: errors shrink ~4x per
    # halving, so successive-step differences shrink ~4x as well
    d21 = np.abs(fd1.stacked() - fd2.stacked()).max()
    d14 = np.abs(fd4.stacked() - fd1.stacked()).max()
    assert d14 / max(d21, 1e-300) == pytest.approx(4.0, rel=0.35)
    with pytest.raises(ValueError):
        ro.finite_diff_grad(raw, scn, simplified, scn.weights, h=0.0)


def test_memory_meter_contract(case2_cfg, surrogate):
    """BPTT memory grows with K; the adjoint engine's stays nearly flat."""
    peaks = {}
    for K in (90, 180):
        scn = fo.nondimensionalize(truncate(case2_cfg, K))
        raw = fo.init_raw_params(scn)
        peaks[("bptt", K)] = ro.grad_bptt(raw, scn, surrogate,
                                          scn.weights).peak_aux_floats
        peaks[("adjoint", K)] = ro.grad_adjoint(raw, scn, surrogate,
                                                scn.weights).peak_aux_floats
    assert peaks[("bptt", 180)] / peaks[("bptt", 90)] > 1.8
    assert peaks[("adjoint", 180)] / peaks[("adjoint", 90)] <= 1.25
    assert peaks[("adjoint", 90)] < peaks[("bptt", 90)]


def test_gradient_nonfinite_raises(short_scn):
    class NaNAero(am.NoAero):
        def forces_jac(self, s, scn):
            F = np.zeros(3)
            dF_dv = np.full((3, 2), np.nan)
            return F, dF_dv, np.zeros(3)

    raw = fo.init_raw_params(short_scn)
    with pytest.raises(FloatingPointError):
        ro.grad_bptt(raw, short_scn, NaNAero(), short_scn.weights)
