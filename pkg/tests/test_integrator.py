"""Rollout grid handling, integrator accuracy and failure behavior."""

import numpy as np
import pytest

from msk.dynamics import forward_dynamics, total_energy
from msk.integrator import ControlTrajectory, ode_rhs, rollout, step
from msk.model import pack


def test_rollout_grid_is_exact(pend):
    x0 = (np.array([0.3]), np.zeros(1))
    tr = rollout(pend, x0, dt=1e-3, horizon=0.25)
    assert tr.times.shape == (251,)
    assert np.array_equal(tr.times, np.arange(251) * 1e-3)
    assert tr.error is None


def test_rk4_convergence_order(pend):
    # Richardson: halving dt should cut the endpoint error ~16x
    x0 = (np.array([1.0]), np.zeros(1))
    ref = rollout(pend, x0, dt=1e-5, horizon=0.5, method="rk4")
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        tr = rollout(pend, x0, dt=dt, horizon=0.5, method="rk4")
        errs.append(abs(tr.q[-1, 0] - ref.q[-1, 0]))
    orders = [np.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) > 3.8, orders


def test_euler_first_order(pend):
    x0 = (np.array([1.0]), np.zeros(1))
    ref = rollout(pend, x0, dt=1e-5, horizon=0.5, method="rk4")
    errs = []
    for dt in (2e-3, 1e-3, 5e-4):
        tr = rollout(pend, x0, dt=dt, horizon=0.5, method="euler")
        errs.append(abs(tr.q[-1, 0] - ref.q[-1, 0]))
    orders = [np.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert 0.7 < np.mean(orders) < 1.3, orders


def test_rk45_matches_fine_rk4(pend):
    x0 = (np.array([1.2]), np.zeros(1))
    a = rollout(pend, x0, dt=1e-2, horizon=1.0, method="rk45")
    b = rollout(pend, x0, dt=1e-4, horizon=1.0, method="rk4")
    assert np.abs(a.q[-1] - b.q[-1]).max() < 1e-6
    assert np.array_equal(a.times, np.arange(101) * 1e-2)


def test_energy_conserved_passive_swing(pend):
    x0 = (np.array([1.0]), np.zeros(1))
    tr = rollout(pend, x0, dt=1e-3, horizon=5.0)
    e0 = total_energy(pend, tr.q[0], tr.qdot[0])
    scale = max(abs(e0), 1.0)
    drift = max(abs(total_energy(pend, tr.q[k], tr.qdot[k]) - e0)
                for k in range(0, 5001, 100))
    assert drift / scale < 1e-8, drift


def test_euler_energy_bounded(pend):
    # symplectic flavor: energy oscillates but does not grow secularly
    x0 = (np.array([1.0]), np.zeros(1))
    tr = rollout(pend, x0, dt=2e-3, horizon=20.0, method="euler")
    assert tr.error is None
    es = [total_energy(pend, tr.q[k], tr.qdot[k])
          for k in range(0, 10001, 200)]
    e0 = es[0]
    assert max(abs(e - e0) for e in es) < 0.02 * abs(e0)


def test_record_accelerations_consistent(dlink):
    ctrl = ControlTrajectory.constant(generalized=np.array([2.0, -1.0]))
    x0 = (np.array([0.2, -0.1]), np.zeros(2))
    tr = rollout(dlink, x0, ctrl, dt=1e-3, horizon=0.05,
                 record_accelerations=True)
    assert tr.qddot is not None and tr.qddot.shape == tr.q.shape
    for k in (0, 17, 50):
        qdd = forward_dynamics(dlink, tr.q[k], tr.qdot[k],
                               np.array([2.0, -1.0]), contact="none")
        assert np.abs(tr.qddot[k] - qdd).max() < 1e-12


def test_ode_rhs_echoes_rates(dlink):
    q = np.array([0.1, 0.2])
    qd = np.array([0.3, 0.4])
    dx = ode_rhs(dlink, 0.0, q, qd)
    assert np.array_equal(dx[:2], qd)
    assert np.abs(dx[2:] - forward_dynamics(dlink, q, qd,
                                            np.zeros(2))).max() == 0.0


def test_controls_validation():
    with pytest.raises(ValueError):
        ControlTrajectory(times=np.array([0.0, 0.0]),
                          generalized=np.zeros((2, 1)))
    with pytest.raises(ValueError):
        ControlTrajectory(times=np.array([0.0, 1.0]),
                          generalized=np.zeros((2, 1)), mode="cubic")


def test_zoh_vs_linear_sampling(pend):
    # a ramp torque: zoh holds the left value, so the response lags the
    # linearly interpolated one
    times = np.array([0.0, 0.5])
    gen = np.array([[0.0], [4.0]])
    x0 = (np.zeros(1), np.zeros(1))
    a = rollout(pend, x0,
                ControlTrajectory(times=times, generalized=gen, mode="zoh"),
                dt=1e-3, horizon=0.5)
    b = rollout(pend, x0,
                ControlTrajectory(times=times, generalized=gen,
                                  mode="linear"),
                dt=1e-3, horizon=0.5)
    # zoh applies 0 torque throughout (single interval, left value)
    assert np.abs(a.q).max() < 1e-12
    assert b.q[-1, 0] != 0.0


def test_rollout_truncates_on_blowup(pend):
    ctrl = ControlTrajectory.constant(generalized=np.array([1e200]))
    x0 = (np.zeros(1), np.zeros(1))
    tr = rollout(pend, x0, ctrl, dt=1e-3, horizon=1.0)
    assert tr.error is not None
    assert tr.times.shape[0] < 1001
    assert np.all(np.isfinite(tr.q)) and np.all(np.isfinite(tr.qdot))


def test_contact_none_matches_auto_in_flight(biped):
    pm = pack(biped)
    q = np.zeros(pm.n)
    q[1] = 3.0  # well above ground for the whole horizon
    x0 = (q, np.zeros(pm.n))
    a = rollout(biped, x0, dt=1e-3, horizon=0.1, contact="auto")
    b = rollout(biped, x0, dt=1e-3, horizon=0.1, contact="none")
    assert np.array_equal(a.q, b.q)


def test_prescribed_contact_needs_forces(biped):
    pm = pack(biped)
    x0 = (np.zeros(pm.n), np.zeros(pm.n))
    with pytest.raises(ValueError):
        rollout(biped, x0, dt=1e-3, horizon=0.01, contact="prescribed")


def test_step_single(pend):
    q, qd = step(pend, (np.array([0.5]), np.zeros(1)), dt=1e-3)
    tr = rollout(pend, (np.array([0.5]), np.zeros(1)), dt=1e-3,
                 horizon=1e-3)
    assert np.allclose(q, tr.q[-1]) and np.allclose(qd, tr.qdot[-1])
