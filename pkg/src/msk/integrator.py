"""Time integration of the contact dynamics, with forward sensitivities.

Steppers compose the forward-dynamics kernel at python level so stage
torques (muscle activations, residual actuators, prescribed forces) are
evaluated at the exact stage states and times. The same code path runs on
plain float arrays (compiled kernels) and on object arrays of dual numbers
(interpreted kernels), which is how rollout_with_sensitivities gets exact
derivatives without a second implementation.
"""

from dataclasses import dataclass

import numpy as np

from . import dual, engine
from .model import GeneralizedState, NumericalError, Trajectory, pack, \
    state_to_q

_RTOL = 1e-6
_ATOL = 1e-9


def _mod_for(*arrays):
    for a in arrays:
        if a is not None and getattr(a, "dtype", None) == np.dtype(object):
            return engine.core_py
    return engine.active


@dataclass(eq=False)
class ControlTrajectory:
    """Sampled controls, interpolated zero-order-hold or linearly.

    activations: (P, n_muscles) in [0,1]; torques: (P, n_act) residual
    actuator channel torques; generalized: (P, ndof) direct generalized
    force rows; contact_forces: (P, K, 3) prescribed per-sphere forces for
    contact="prescribed". Any of them may be omitted.
    """
    times: np.ndarray
    activations: np.ndarray = None
    torques: np.ndarray = None
    generalized: np.ndarray = None
    contact_forces: np.ndarray = None
    mode: str = "zoh"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.shape[0] < 1:
            raise ValueError("control times must be a non-empty 1-d array")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("control times must increase strictly")
        if self.mode not in ("zoh", "linear"):
            raise ValueError("mode must be 'zoh' or 'linear'")
        for name in ("activations", "torques", "generalized",
                     "contact_forces"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v)
            if v.dtype != object:
                v = v.astype(float)
            if v.shape[0] != self.times.shape[0]:
                raise ValueError("%s needs one row per control time" % name)
            setattr(self, name, v)

    @classmethod
    def constant(cls, activations=None, torques=None, generalized=None,
                 contact_forces=None):
        def rep(v):
            return None if v is None else np.asarray(v)[None]
        return cls(np.array([0.0]), rep(activations), rep(torques),
                   rep(generalized), rep(contact_forces), mode="zoh")

    def _interp(self, arr, t):
        if arr is None:
            return None
        ts = self.times
        if self.mode == "zoh" or ts.shape[0] == 1:
            i = int(np.searchsorted(ts, t, side="right")) - 1
            return arr[min(max(i, 0), ts.shape[0] - 1)]
        i = int(np.searchsorted(ts, t, side="right")) - 1
        if i < 0:
            return arr[0]
        if i >= ts.shape[0] - 1:
            return arr[-1]
        s = (t - ts[i]) / (ts[i + 1] - ts[i])
        return arr[i] * (1.0 - s) + arr[i + 1] * s

    def sample(self, t):
        return (self._interp(self.activations, t),
                self._interp(self.torques, t),
                self._interp(self.generalized, t))

    def sample_contact(self, t):
        return self._interp(self.contact_forces, t)


def _tau_at(pm, controls, t, q, qdot):
    mod = _mod_for(q, qdot,
                   None if controls is None else controls.activations,
                   None if controls is None else controls.torques,
                   None if controls is None else controls.generalized)
    tau = q * 0.0 + qdot * 0.0
    if controls is None:
        return tau
    act, taur, gen = controls.sample(t)
    if act is not None and pm.n_muscles:
        tau = tau + mod.muscle_tau(*pm.msc, act, q, qdot, pm.root_free)
    if taur is not None and pm.n_act:
        for c in range(pm.n_act):
            i = pm.base + pm.act_rdof[c]
            tau[i] = tau[i] + taur[c]
    if gen is not None:
        tau = tau + gen
    return tau


def _contact_at(pm, controls, contact, t):
    """Kernel contact mode and prescribed force rows at time t."""
    K = pm.n_spheres
    if contact == "auto":
        return (1 if K else 0), np.zeros((K, 3))
    if contact == "none":
        return 0, np.zeros((K, 3))
    if contact == "prescribed":
        if controls is None or controls.contact_forces is None:
            raise ValueError("contact='prescribed' needs "
                             "controls.contact_forces")
        lam = controls.sample_contact(t)
        return 2, np.asarray(lam, dtype=float).reshape(K, 3)
    raise ValueError("contact must be 'auto', 'none', or 'prescribed'")


def _x0_of(model, x0):
    if isinstance(x0, GeneralizedState):
        return state_to_q(model, x0)
    q, qdot = x0
    return (np.asarray(q, dtype=float).copy(),
            np.asarray(qdot, dtype=float).copy())


def ode_rhs(model, t, q, qdot, controls=None, contact="auto"):
    """State derivative [qdot, qddot] of the controlled contact dynamics.

    The first block of the return value is the qdot input itself, so chart
    rates and coordinate rates agree bit for bit.
    """
    pm = pack(model)
    tau = _tau_at(pm, controls, t, q, qdot)
    mode, lam = _contact_at(pm, controls, contact, t)
    mod = _mod_for(q, qdot, tau)
    qdd, ok = mod.fd_core(*pm.kin, *pm.iner, *pm.sph, pm.gravity,
                          q, qdot, tau, mode, lam)
    if not _okval(ok):
        raise NumericalError("mass matrix is not positive definite at "
                             "t=%.6g" % t)
    return np.concatenate([qdot, np.asarray(qdd)])


def _okval(ok):
    return int(ok.val if hasattr(ok, "val") else ok) == 1


def _acc(model, pm, t, q, qdot, controls, contact):
    tau = _tau_at(pm, controls, t, q, qdot)
    mode, lam = _contact_at(pm, controls, contact, t)
    mod = _mod_for(q, qdot, tau)
    qdd, ok = mod.fd_core(*pm.kin, *pm.iner, *pm.sph, pm.gravity,
                          q, qdot, tau, mode, lam)
    if not _okval(ok):
        raise NumericalError("mass matrix is not positive definite at "
                             "t=%.6g" % t)
    return np.asarray(qdd)


def _rk4(model, pm, t, q, qdot, controls, contact, dt):
    a1 = _acc(model, pm, t, q, qdot, controls, contact)
    q2 = q + (0.5 * dt) * qdot
    qd2 = qdot + (0.5 * dt) * a1
    a2 = _acc(model, pm, t + 0.5 * dt, q2, qd2, controls, contact)
    q3 = q + (0.5 * dt) * qd2
    qd3 = qdot + (0.5 * dt) * a2
    a3 = _acc(model, pm, t + 0.5 * dt, q3, qd3, controls, contact)
    q4 = q + dt * qd3
    qd4 = qdot + dt * a3
    a4 = _acc(model, pm, t + dt, q4, qd4, controls, contact)
    qn = q + (dt / 6.0) * (qdot + 2.0 * qd2 + 2.0 * qd3 + qd4)
    qdn = qdot + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return qn, qdn


def _euler(model, pm, t, q, qdot, controls, contact, dt):
    # symplectic flavor: position update uses the fresh velocity
    a = _acc(model, pm, t, q, qdot, controls, contact)
    qdn = qdot + dt * a
    qn = q + dt * qdn
    return qn, qdn


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def _dp_step(model, pm, t, x, controls, contact, h):
    """One embedded Dormand-Prince step; returns (x5, err_norm)."""
    n = x.shape[0] // 2
    ks = []
    for s in range(7):
        xs = x
        for j, a in enumerate(_DP_A[s]):
            if a != 0.0:
                xs = xs + (h * a) * ks[j]
        q, qd = xs[:n], xs[n:]
        acc = _acc(model, pm, t + _DP_C[s] * h, q, qd, controls, contact)
        ks.append(np.concatenate([qd, acc]))
    x5 = x
    x4 = x
    for s in range(7):
        if _DP_B5[s] != 0.0:
            x5 = x5 + (h * _DP_B5[s]) * ks[s]
        if _DP_B4[s] != 0.0:
            x4 = x4 + (h * _DP_B4[s]) * ks[s]
    diff = dual.values(x5 - x4) if x.dtype == object else (x5 - x4)
    ref = dual.values(x5) if x.dtype == object else x5
    sc = _ATOL + _RTOL * np.maximum(np.abs(ref),
                                    np.abs(dual.values(x)
                                           if x.dtype == object else x))
    err = float(np.sqrt(np.mean((diff / sc) ** 2)))
    return x5, err


def _rk45(model, pm, t, q, qdot, controls, contact, dt):
    """Adaptive advance over [t, t+dt], output at the grid point."""
    x = np.concatenate([q, qdot])
    n = q.shape[0]
    t_end = t + dt
    h = dt
    while t < t_end - 1e-12 * max(1.0, abs(t_end)):
        h = min(h, t_end - t)
        x_new, err = _dp_step(model, pm, t, x, controls, contact, h)
        if err <= 1.0:
            t = t + h
            x = x_new
            h = h * min(5.0, max(0.2, 0.9 * (max(err, 1e-16)) ** -0.2))
        else:
            h = h * max(0.1, 0.9 * err ** -0.2)
            if h < 1e-10:
                raise NumericalError("step size underflow at t=%.6g" % t)
    return x[:n], x[n:]


_STEPPERS = {"rk4": _rk4, "euler": _euler, "rk45": _rk45}


def step(model, x0, controls=None, dt=1e-3, t=0.0, method="rk4",
         contact="auto"):
    """One integration step from (q, qdot) or a GeneralizedState."""
    if method not in _STEPPERS:
        raise ValueError("method must be one of %s" % sorted(_STEPPERS))
    pm = pack(model)
    q, qdot = x0 if isinstance(x0, tuple) else _x0_of(model, x0)
    return _STEPPERS[method](model, pm, t, q, qdot, controls, contact, dt)


def _finite(q, qdot):
    if q.dtype == object:
        return (np.all(np.isfinite(dual.values(q)))
                and np.all(np.isfinite(dual.values(qdot))))
    return np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))


def rollout(model, x0, controls=None, dt=1e-3, horizon=1.0, method="rk4",
            contact="auto", record_accelerations=False):
    """Integrate forward over a fixed grid; truncate on numerical failure.

    Returns a Trajectory with times (N+1,) for N = round(horizon/dt). When
    a step fails (indefinite mass matrix, non-finite state, rk45 underflow)
    the trajectory holds the samples up to the failure and .error says what
    happened; no exception escapes.
    """
    if method not in _STEPPERS:
        raise ValueError("method must be one of %s" % sorted(_STEPPERS))
    if dt <= 0.0 or horizon <= 0.0:
        raise ValueError("dt and horizon must be positive")
    pm = pack(model)
    q, qdot = _x0_of(model, x0) if not isinstance(x0, tuple) \
        else (np.array(x0[0], dtype=float), np.array(x0[1], dtype=float))
    N = int(round(horizon / dt))
    times = np.arange(N + 1) * dt
    qs = [q]
    qds = [qdot]
    err = None
    stepper = _STEPPERS[method]
    for k in range(N):
        try:
            q, qdot = stepper(model, pm, times[k], q, qdot, controls,
                              contact, dt)
        except NumericalError as e:
            err = str(e)
            break
        if not _finite(q, qdot):
            err = "state became non-finite at t=%.6g" % times[k + 1]
            break
        qs.append(q)
        qds.append(qdot)
    T = len(qs)
    traj = Trajectory(times=times[:T], q=np.stack(qs),
                      qdot=np.stack(qds), error=err)
    if record_accelerations and err is None:
        acc = np.zeros_like(traj.q)
        for k in range(T):
            acc[k] = _acc(model, pm, traj.times[k], traj.q[k], traj.qdot[k],
                          controls, contact)
        traj.qddot = acc
    return traj


def _seed_controls(controls, width, offset):
    """Dual-lift a ControlTrajectory, seeding its value arrays in order.

    Returns (lifted controls, parameter count). Seeding order: activations
    row-major, then torques, then generalized rows.
    """
    if controls is None:
        return None, 0
    count = 0
    arrays = {}
    for name in ("activations", "torques", "generalized"):
        v = getattr(controls, name)
        if v is None:
            arrays[name] = None
            continue
        flat = np.asarray(v, dtype=float).ravel()
        rows = np.zeros((flat.shape[0], width))
        for i in range(flat.shape[0]):
            rows[i, offset + count + i] = 1.0
        arrays[name] = dual.seed(flat, rows).reshape(v.shape)
        count += flat.shape[0]
    out = ControlTrajectory(times=controls.times.copy(),
                            activations=arrays["activations"],
                            torques=arrays["torques"],
                            generalized=arrays["generalized"],
                            contact_forces=controls.contact_forces,
                            mode=controls.mode)
    return out, count


def control_parameter_count(controls):
    if controls is None:
        return 0
    c = 0
    for name in ("activations", "torques", "generalized"):
        v = getattr(controls, name)
        if v is not None:
            c += int(np.asarray(v).size)
    return c


def rollout_with_sensitivities(model, x0, controls=None, dt=1e-3,
                               horizon=1.0, method="rk4", contact="auto",
                               wrt="x0"):
    """Rollout plus d(state)/d(seeds) via forward-mode dual numbers.

    wrt: "x0" (2n initial-state parameters), "controls" (every stored
    control value, activations then torques then generalized, row-major),
    or "both" (x0 block first). Returns (Trajectory, S) with S of shape
    (T, 2n, n_params). Truncation mirrors rollout().
    """
    if wrt not in ("x0", "controls", "both"):
        raise ValueError("wrt must be 'x0', 'controls', or 'both'")
    pm = pack(model)
    q0, qd0 = _x0_of(model, x0) if not isinstance(x0, tuple) \
        else (np.array(x0[0], dtype=float), np.array(x0[1], dtype=float))
    n = q0.shape[0]
    nx = 2 * n if wrt in ("x0", "both") else 0
    nu = control_parameter_count(controls) if wrt in ("controls", "both") \
        else 0
    width = nx + nu
    if width == 0:
        raise ValueError("nothing to differentiate")
    if nx:
        rows = np.zeros((2 * n, width))
        rows[:2 * n, :2 * n] = np.eye(2 * n)[:, :2 * n]
        x = dual.seed(np.concatenate([q0, qd0]), rows)
        q, qdot = x[:n], x[n:]
    else:
        q = dual.lift(q0, width)
        qdot = dual.lift(qd0, width)
    if nu:
        ctrl, _ = _seed_controls(controls, width, nx)
    else:
        ctrl = controls
    N = int(round(horizon / dt))
    times = np.arange(N + 1) * dt
    qs = [q]
    qds = [qdot]
    err = None
    stepper = _STEPPERS[method]
    for k in range(N):
        try:
            q, qdot = stepper(model, pm, times[k], q, qdot, ctrl, contact,
                              dt)
        except NumericalError as e:
            err = str(e)
            break
        if not _finite(q, qdot):
            err = "state became non-finite at t=%.6g" % times[k + 1]
            break
        qs.append(q)
        qds.append(qdot)
    T = len(qs)
    qarr = np.zeros((T, n))
    qdarr = np.zeros((T, n))
    sens = np.zeros((T, 2 * n, width))
    for k in range(T):
        qarr[k] = dual.values(qs[k])
        qdarr[k] = dual.values(qds[k])
        sens[k, :n] = dual.tangents(qs[k], width)
        sens[k, n:] = dual.tangents(qds[k], width)
    traj = Trajectory(times=times[:T], q=qarr, qdot=qdarr, error=err)
    return traj, sens
