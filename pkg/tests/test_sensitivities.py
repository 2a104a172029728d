"""Forward-mode trajectory sensitivities against central differences."""

import numpy as np
import pytest

from msk.integrator import (ControlTrajectory, control_parameter_count,
                            rollout, rollout_with_sensitivities)
from msk.model import pack


def _controls(scale=1.0):
    times = np.array([0.0, 0.1, 0.2])
    act = scale * np.array([[0.3, 0.1], [0.5, 0.2], [0.2, 0.4]])
    gen = scale * np.array([[0.5], [-0.3], [0.1]])
    return ControlTrajectory(times=times, activations=act, generalized=gen,
                             mode="linear")


def test_x0_sensitivity_vs_fd(pend_muscle):
    x0 = (np.array([0.4]), np.array([-0.2]))
    ctrl = _controls()
    tr, S = rollout_with_sensitivities(pend_muscle, x0, ctrl, dt=1e-3,
                                       horizon=0.2, wrt="x0")
    assert S.shape == (tr.times.shape[0], 2, 2)
    h = 1e-6
    for p in range(2):
        base = np.array([0.4, -0.2])
        ep = base.copy()
        ep[p] += 0.5 * h
        em = base.copy()
        em[p] -= 0.5 * h
        tp = rollout(pend_muscle, (ep[:1], ep[1:]), ctrl, dt=1e-3,
                     horizon=0.2)
        tm = rollout(pend_muscle, (em[:1], em[1:]), ctrl, dt=1e-3,
                     horizon=0.2)
        fd = np.concatenate([tp.q - tm.q, tp.qdot - tm.qdot], axis=1) / h
        assert np.abs(S[:, :, p] - fd).max() < 1e-4


def test_controls_sensitivity_vs_fd(pend_muscle):
    x0 = (np.array([0.1]), np.zeros(1))
    ctrl = _controls()
    nu = control_parameter_count(ctrl)
    assert nu == 9
    tr, S = rollout_with_sensitivities(pend_muscle, x0, ctrl, dt=1e-3,
                                       horizon=0.2, wrt="controls")
    assert S.shape == (tr.times.shape[0], 2, 9)
    h = 1e-6
    # seeding order: activations row-major, then generalized row-major
    for p in range(9):
        act = ctrl.activations.copy()
        gen = ctrl.generalized.copy()
        if p < 6:
            i, j = divmod(p, 2)
            actp = act.copy()
            actp[i, j] += 0.5 * h
            actm = act.copy()
            actm[i, j] -= 0.5 * h
            genp = genm = gen
        else:
            i = p - 6
            genp = gen.copy()
            genp[i, 0] += 0.5 * h
            genm = gen.copy()
            genm[i, 0] -= 0.5 * h
            actp = actm = act
        cp = ControlTrajectory(times=ctrl.times, activations=actp,
                               generalized=genp, mode="linear")
        cm = ControlTrajectory(times=ctrl.times, activations=actm,
                               generalized=genm, mode="linear")
        tp = rollout(pend_muscle, x0, cp, dt=1e-3, horizon=0.2)
        tm = rollout(pend_muscle, x0, cm, dt=1e-3, horizon=0.2)
        fd = np.concatenate([tp.q - tm.q, tp.qdot - tm.qdot], axis=1) / h
        assert np.abs(S[:, :, p] - fd).max() < 1e-4, p


def test_both_concatenates(pend_muscle):
    x0 = (np.array([0.2]), np.zeros(1))
    ctrl = _controls()
    _, Sx = rollout_with_sensitivities(pend_muscle, x0, ctrl, dt=1e-3,
                                       horizon=0.1, wrt="x0")
    _, Su = rollout_with_sensitivities(pend_muscle, x0, ctrl, dt=1e-3,
                                       horizon=0.1, wrt="controls")
    _, Sb = rollout_with_sensitivities(pend_muscle, x0, ctrl, dt=1e-3,
                                       horizon=0.1, wrt="both")
    assert Sb.shape[2] == Sx.shape[2] + Su.shape[2]
    assert np.abs(Sb[:, :, :2] - Sx).max() < 1e-14
    assert np.abs(Sb[:, :, 2:] - Su).max() < 1e-14


def test_primal_matches_plain_rollout(pend_muscle):
    # the dual-number sweep must not perturb the primal trajectory
    x0 = (np.array([0.3]), np.array([0.1]))
    ctrl = _controls()
    tr, _ = rollout_with_sensitivities(pend_muscle, x0, ctrl, dt=1e-3,
                                       horizon=0.2, wrt="x0")
    tr2 = rollout(pend_muscle, x0, ctrl, dt=1e-3, horizon=0.2)
    assert np.abs(tr.q - tr2.q).max() < 1e-14
    assert np.abs(tr.qdot - tr2.qdot).max() < 1e-14


def test_sensitivity_through_contact(biped):
    # ground reaction is state dependent; sensitivities must track it
    pm = pack(biped)
    q0 = np.zeros(pm.n)
    q0[1] = 0.995  # light penetration
    x0 = (q0, np.zeros(pm.n))
    tr, S = rollout_with_sensitivities(biped, x0, dt=1e-3, horizon=0.02,
                                       wrt="x0")
    h = 1e-6
    p = 1  # vertical root translation
    qp = q0.copy()
    qp[p] += 0.5 * h
    qm = q0.copy()
    qm[p] -= 0.5 * h
    tp = rollout(biped, (qp, np.zeros(pm.n)), dt=1e-3, horizon=0.02)
    tm = rollout(biped, (qm, np.zeros(pm.n)), dt=1e-3, horizon=0.02)
    fd = np.concatenate([tp.q - tm.q, tp.qdot - tm.qdot], axis=1) / h
    assert np.abs(S[:, :, p] - fd).max() < 1e-3


def test_wrt_validation(pend):
    with pytest.raises(ValueError):
        rollout_with_sensitivities(pend, (np.zeros(1), np.zeros(1)),
                                   wrt="params")
    with pytest.raises(ValueError):
        rollout_with_sensitivities(pend, (np.zeros(1), np.zeros(1)),
                                   controls=None, wrt="controls")
