"""Rigid-body dynamics: mass matrix, inverse/forward dynamics, contact,
muscle torques, and energy.

Conventions: generalized forces follow the coordinate layout [T, R, joints]
(root rows first when the root floats). inverse_dynamics returns the force
needed to realize an acceleration after external contact is credited, so a
dynamically consistent motion shows near-zero root rows.
"""

from dataclasses import dataclass

import numpy as np

from . import engine
from .kinematics import _as_q, _as_q_qdot, _frames
from .model import KineticState, NumericalError, pack


@dataclass(eq=False)
class ContactResult:
    """Per-sphere ground forces at one instant."""
    f_normal: np.ndarray            # (K,3)
    f_tangential: np.ndarray        # (K,3)
    centers: np.ndarray             # (K,3) world sphere centers
    total: np.ndarray               # (3,) sum of all sphere forces

    def center_of_pressure(self):
        w = self.f_normal[:, 1]
        s = w.sum()
        if s <= 0.0:
            return None
        cop = (self.centers * w[:, None]).sum(axis=0) / s
        cop[1] = 0.0
        return cop


@dataclass(eq=False)
class IdResult:
    """Inverse dynamics output: full generalized force plus kinetics."""
    tau: np.ndarray                 # (n,) generalized force
    kinetic: KineticState
    root_residual: np.ndarray = None   # (6,) when the root floats


def mass_matrix(model, state):
    pm = pack(model)
    q = _as_q(model, state)
    return engine.active.crba(*pm.kin, *pm.iner, q)


def gravity_forces(model, state):
    """Generalized gravity load g(q)."""
    pm = pack(model)
    q = _as_q(model, state)
    z = np.zeros_like(q)
    return engine.active.rnea(*pm.kin, *pm.iner, pm.gravity, q, z, z)


def bias_forces(model, state, qdot=None):
    """Velocity products plus gravity: C(q, qdot) qdot + g(q)."""
    pm = pack(model)
    q, qd = _as_q_qdot(model, state, qdot)
    return engine.active.rnea(*pm.kin, *pm.iner, pm.gravity, q, qd,
                              np.zeros_like(q))


def contact_forces(model, state, qdot=None):
    """Sphere/ground contact forces at (q, qdot)."""
    pm = pack(model)
    q, qd = _as_q_qdot(model, state, qdot)
    Fn, Ft, cen = engine.active.contact(*pm.kin, *pm.sph, q, qd)
    Fn = np.asarray(Fn)
    Ft = np.asarray(Ft)
    return ContactResult(Fn, Ft, np.asarray(cen),
                         Fn.sum(axis=0) + Ft.sum(axis=0)
                         if Fn.shape[0] else np.zeros(3))


def _contact_tau(pm, q, cen, F):
    Rw, pw, dof = _frames(pm, q)
    return engine.active.points_force_tau(pm.parents, pm.sph_seg, cen, F,
                                          *dof, q[0] * 0.0)


def muscle_torques(model, state, qdot=None, activations=None, residual=None):
    """Generalized torques from Hill-type muscles plus residual actuators.

    activations: (n_muscles,) in [0, 1]. residual: per actuator channel
    torque, mapped onto its rotational DoF.
    """
    pm = pack(model)
    q, qd = _as_q_qdot(model, state, qdot)
    if activations is None:
        activations = np.zeros(pm.n_muscles)
    act = np.atleast_1d(np.asarray(activations, dtype=float))
    if act.shape[0] != pm.n_muscles:
        raise ValueError("expected %d activations, got %d"
                         % (pm.n_muscles, act.shape[0]))
    tau = np.asarray(engine.active.muscle_tau(*pm.msc, act, q, qd,
                                              pm.root_free))
    if residual is not None:
        tau = pm.apply_residual(tau.copy(), residual)
    return tau


def inverse_dynamics(model, state, qdot=None, qddot=None, contact="auto"):
    """Generalized force explaining an observed acceleration.

    contact: "auto" uses the model's contact law at (q, qdot); "none" skips
    it; an array (K,3) prescribes per-sphere world forces at the centers.
    Returns IdResult; the KineticState carries rotational torques and the
    ground reaction split.
    """
    pm = pack(model)
    q, qd = _as_q_qdot(model, state, qdot)
    if qddot is None:
        raise ValueError("qddot is required")
    qdd = np.asarray(qddot, dtype=float)
    if qdd.shape != q.shape:
        raise ValueError("qddot must have length %d" % q.shape[0])
    tau = np.asarray(engine.active.rnea(*pm.kin, *pm.iner, pm.gravity,
                                        q, qd, qdd))
    K = pm.n_spheres
    if isinstance(contact, str) and contact == "auto" and K:
        cr = contact_forces(model, q, qd)
        fn, ft, cen = cr.f_normal, cr.f_tangential, cr.centers
    elif isinstance(contact, str):
        if contact not in ("auto", "none"):
            raise ValueError("contact must be 'auto', 'none', or a (K,3) "
                             "array")
        fn = np.zeros((K, 3))
        ft = np.zeros((K, 3))
        cen = np.zeros((K, 3))
    else:
        lam = np.asarray(contact, dtype=float).reshape(K, 3)
        fn = np.zeros((K, 3))
        ft = np.zeros((K, 3))
        fn[:, 1] = lam[:, 1]
        ft[:, 0] = lam[:, 0]
        ft[:, 2] = lam[:, 2]
        Rw, pw = engine.active.fk(*pm.kin, q)
        cen = np.asarray(engine.active.body_points(pm.sph_seg, pm.sph_pos,
                                                   Rw, pw, q[0] * 0.0))
    if K and (np.any(fn) or np.any(ft)):
        tau = tau - np.asarray(_contact_tau(pm, q, np.asarray(cen),
                                            np.asarray(fn + ft)))
    total = (fn.sum(axis=0) + ft.sum(axis=0)) if K else np.zeros(3)
    ks = KineticState(tau=tau[pm.base:], lambda_total=total,
                      f_normal=fn, f_tangential=ft)
    if K:
        w = fn[:, 1]
        s = w.sum()
        if s > 0.0:
            cop = (np.asarray(cen) * w[:, None]).sum(axis=0) / s
            cop[1] = 0.0
            ks = KineticState(tau=tau[pm.base:], lambda_total=total,
                              f_normal=fn, f_tangential=ft, cop=cop)
    root = tau[:6].copy() if pm.root_free else None
    return IdResult(tau=tau, kinetic=ks, root_residual=root)


def forward_dynamics(model, state, qdot=None, tau=None, contact="auto"):
    """Accelerations from applied generalized force; raises NumericalError
    when the mass matrix is not positive definite."""
    pm = pack(model)
    q, qd = _as_q_qdot(model, state, qdot)
    if tau is None:
        tau = np.zeros_like(q)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != q.shape:
        raise ValueError("tau must have length %d" % q.shape[0])
    mode, lam = _contact_mode(pm, contact)
    qdd, ok = engine.active.fd_core(*pm.kin, *pm.iner, *pm.sph, pm.gravity,
                                    q, qd, tau, mode, lam)
    if not _ok(ok):
        raise NumericalError("mass matrix is not positive definite")
    return np.asarray(qdd)


def _contact_mode(pm, contact):
    """Normalize the contact argument to (kernel mode, lam array)."""
    K = pm.n_spheres
    if isinstance(contact, str):
        if contact == "auto":
            return (1 if K else 0), np.zeros((K, 3))
        if contact == "none":
            return 0, np.zeros((K, 3))
        raise ValueError("contact must be 'auto', 'none', or a (K,3) array")
    lam = np.asarray(contact, dtype=float).reshape(K, 3)
    return 2, lam


def _ok(ok):
    v = ok
    if hasattr(v, "val"):
        v = v.val
    return int(v) == 1


def total_energy(model, state, qdot=None):
    """Kinetic plus gravitational potential energy of the rigid bodies."""
    pm = pack(model)
    q, qd = _as_q_qdot(model, state, qdot)
    M = np.asarray(mass_matrix(model, q))
    ke = 0.5 * float(qd @ M @ qd)
    Rw, pw = engine.active.fk(*pm.kin, q)
    pe = 0.0
    for i in range(pm.ns):
        c = np.asarray(pw)[i] + np.asarray(Rw)[i] @ pm.com[i]
        pe -= pm.mass[i] * float(pm.gravity @ c)
    return ke + pe
