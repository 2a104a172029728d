"""Direct collocation: transcription structure, defect feasibility on
constructed references, control recovery, merit behavior."""

import numpy as np
import pytest

from msk.dynamics import contact_forces, forward_dynamics
from msk.integrator import ControlTrajectory, rollout
from msk.model import pack
from msk.ocp import OcpProblem, extract_reference_kinetics, solve_ocp, \
    transcribe


def _simulate_reference(model, tau_fn, tf=0.8, n_knots=41, x0=None):
    """Roll the model under tau_fn and sample it on the knot grid."""
    pm = pack(model)
    dt = tf / 800.0
    times = np.arange(801) * dt
    gen = np.array([tau_fn(t) for t in times])
    ctrl = ControlTrajectory(times=times, generalized=gen, mode="linear")
    if x0 is None:
        x0 = (np.zeros(pm.n), np.zeros(pm.n))
    tr = rollout(model, x0, ctrl, dt=dt, horizon=tf, contact="none",
                 record_accelerations=True)
    assert tr.error is None
    idx = np.linspace(0, 800, n_knots).round().astype(int)
    return (tr.times[idx], tr.q[idx], tr.qdot[idx], tr.qddot[idx],
            gen[idx])


def test_transcription_layout(pend_muscle):
    pm = pack(pend_muscle)
    times = np.linspace(0.0, 0.4, 5)
    zeros = np.zeros((5, pm.n))
    prob = OcpProblem(pend_muscle, times, zeros, zeros, zeros,
                      contact="none")
    nlp = transcribe(prob)
    assert nlp.dim == 5 * (2 * 1 + 3)
    x, u = nlp.split(nlp.z0)
    assert np.array_equal(x, np.zeros((5, 2)))
    assert np.array_equal(u, np.zeros((5, 3)))
    ns = 5 * 2
    # excitations clipped to [0,1], residual torque to the actuator bound
    assert np.all(nlp.lower[ns::3] == 0.0) and np.all(nlp.upper[ns::3]
                                                      == 1.0)
    assert np.all(nlp.lower[ns + 2::3] == -60.0)
    assert np.all(nlp.upper[ns + 2::3] == 60.0)


def test_defects_vanish_on_consistent_reference(dlink):
    # build states satisfying the trapezoid identity exactly by fixed-point
    # iteration, then check the transcription agrees they are feasible
    pm = pack(dlink)
    N, dt = 16, 0.02
    times = np.arange(N) * dt
    u = np.stack([1.5 * np.sin(2 * np.pi * times / 0.3),
                  0.8 * np.cos(2 * np.pi * times / 0.3)], axis=1)
    x = np.zeros((N, 4))
    for k in range(N - 1):
        xk = x[k]
        fk = np.concatenate([xk[2:], forward_dynamics(
            dlink, xk[:2], xk[2:], u[k], contact="none")])
        xn = xk + dt * fk
        for _ in range(60):
            fn = np.concatenate([xn[2:], forward_dynamics(
                dlink, xn[:2], xn[2:], u[k + 1], contact="none")])
            xn2 = xk + 0.5 * dt * (fk + fn)
            if np.abs(xn2 - xn).max() < 1e-15:
                xn = xn2
                break
            xn = xn2
        x[k + 1] = xn
    qdd = np.stack([forward_dynamics(dlink, x[k, :2], x[k, 2:], u[k],
                                     contact="none") for k in range(N)])
    prob = OcpProblem(dlink, times, x[:, :2], x[:, 2:], qdd,
                      contact="none")
    nlp = transcribe(prob)
    z = np.concatenate([x.ravel(), u.ravel()])
    c = nlp.defects(z)
    assert np.abs(c).max() < 1e-12


def test_residual_form_matches_merit(pend_muscle):
    pm = pack(pend_muscle)
    N = 7
    times = np.linspace(0.0, 0.3, N)
    rng = np.random.default_rng(0)
    qr = 0.3 * rng.standard_normal((N, 1))
    prob = OcpProblem(pend_muscle, times, qr,
                      0.1 * rng.standard_normal((N, 1)),
                      rng.standard_normal((N, 1)), contact="none")
    nlp = transcribe(prob)
    z = nlp.z0 + 0.05 * rng.standard_normal(nlp.dim)
    mu = 37.0
    r, J = nlp.residuals(z, mu)
    val, grad = nlp.merit(z, mu)
    assert np.isclose(float(r @ r), val, rtol=1e-12)
    # Gauss-Newton gradient 2 J^T r against the analytic merit gradient
    g = 2.0 * (J.T @ r)
    assert np.abs(g - grad).max() < 1e-8 * max(1.0, np.abs(grad).max())
    # and the analytic gradient against a finite difference of the merit
    h = 1e-6
    for j in rng.choice(nlp.dim, size=6, replace=False):
        e = np.zeros(nlp.dim)
        e[j] = 0.5 * h
        fd = (nlp.merit(z + e, mu)[0] - nlp.merit(z - e, mu)[0]) / h
        assert np.isclose(grad[j], fd, rtol=2e-4, atol=1e-7), j


def test_pendulum_control_recovery(pend):
    times, q, qd, qdd, tau_true = _simulate_reference(
        pend, lambda t: [3.0 * np.sin(2 * np.pi * t / 0.8) * np.exp(-t)])
    prob = OcpProblem(pend, times, q, qd, qdd, contact="none")
    sol = solve_ocp(prob)
    assert sol.status == "converged"
    assert sol.defect_inf < 1e-6
    rms_err = np.sqrt(np.mean((sol.tau - tau_true) ** 2))
    rms_ref = np.sqrt(np.mean(tau_true ** 2))
    assert rms_err / rms_ref < 0.02, rms_err / rms_ref
    # tracking stays tight as well
    assert np.abs(sol.q - q).max() < 1e-3


def test_effort_only_goes_idle(pend_muscle):
    # no tracking terms: cheapest feasible motion from rest is no motion
    pm = pack(pend_muscle)
    N = 21
    times = np.linspace(0.0, 0.4, N)
    zeros = np.zeros((N, pm.n))
    prob = OcpProblem(pend_muscle, times, zeros, zeros, zeros,
                      weights=(1e-3, 0.0, 0.0, 0.0), contact="none")
    sol = solve_ocp(prob)
    assert sol.status == "converged"
    assert np.abs(sol.excitations).max() < 1e-6
    assert np.abs(sol.residual_torques).max() < 1e-6
    assert sol.defect_inf < 1e-8


def test_standing_biped_reaction_matches_weight(biped):
    # static equilibrium: four spheres, Hunt-Crossley depth for W/4 each
    pm = pack(biped)
    W = 50.0 * 9.81
    delta = (W / 4.0 / 1e5) ** (2.0 / 3.0)
    N = 9
    times = np.linspace(0.0, 0.4, N)
    q = np.zeros((N, pm.n))
    q[:, 1] = 1.0 - delta
    zeros = np.zeros((N, pm.n))
    prob = OcpProblem(biped, times, q, zeros, zeros)
    sol = solve_ocp(prob)
    assert sol.status == "converged"
    kin = extract_reference_kinetics(biped, sol)
    lam_y = np.array([k.lambda_total[1] for k in kin])
    assert np.abs(lam_y - W).max() / W < 0.02
    cr = contact_forces(biped, sol.q[-1], sol.qdot[-1])
    assert np.abs(cr.f_normal[:, 1] - W / 4.0).max() / W < 0.02


def test_merit_history_decreases(pend):
    times, q, qd, qdd, _ = _simulate_reference(
        pend, lambda t: [2.0 * np.sin(2 * np.pi * t)], n_knots=21)
    sol = solve_ocp(OcpProblem(pend, times, q, qd, qdd, contact="none"))
    assert sol.merit_history
    for row in sol.merit_history:
        assert row["merit_end"] <= row["merit_start"] + 1e-12
    assert sol.outer_iterations == len(sol.merit_history)


def test_collocation_gap_shrinks_with_grid(pend):
    # integrate the solved controls forward; the endpoint gap is the
    # transcription error and must fall clearly with knot count
    gaps = {}
    for N in (21, 81):
        times, q, qd, qdd, _ = _simulate_reference(
            pend, lambda t: [2.5 * np.sin(2 * np.pi * t / 0.8)], n_knots=N)
        sol = solve_ocp(OcpProblem(pend, times, q, qd, qdd,
                                   contact="none"))
        assert sol.status == "converged"
        ctrl = ControlTrajectory(times=sol.times, generalized=sol.tau,
                                 mode="linear")
        tr = rollout(pend, (sol.q[0], sol.qdot[0]), ctrl, dt=1e-3,
                     horizon=0.8, contact="none")
        gaps[N] = np.abs(tr.q[-1] - sol.q[-1]).max()
    assert gaps[81] < 0.2 * gaps[21], gaps
    assert gaps[81] < 5e-3


def test_reference_shape_validation(pend):
    times = np.linspace(0.0, 0.4, 5)
    good = np.zeros((5, 1))
    with pytest.raises(ValueError):
        OcpProblem(pend, times, np.zeros((4, 1)), good, good)
    with pytest.raises(ValueError):
        OcpProblem(pend, times[::-1].copy(), good, good, good)
    with pytest.raises(ValueError):
        OcpProblem(pend, times, good, good, good, weights=(1.0, -1.0,
                                                           0.0, 0.0))
