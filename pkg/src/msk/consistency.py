"""Inverse-forward consistency losses, roundtrip verification, surrogate.

The causality check at the heart of the toolkit: kinetics estimated from a
motion should reproduce that motion when integrated forward. This module
provides the kinetic and kinematic consistency losses, a roundtrip verifier
(per-frame inverse dynamics, then a forward rollout under the recovered
kinetics), and a small trainable inverse-dynamics surrogate (ridge
polynomial in [q, qdot]) whose training loss is differentiated through the
rollout itself.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import contact_forces, inverse_dynamics
from .integrator import ControlTrajectory, rollout, rollout_with_sensitivities
from .kinematics import forward_kinematics, points_jacobian_packed
from .model import NumericalError, Trajectory, pack


@dataclass(eq=False)
class LossWeights:
    """Nonnegative weights: contact force, torque, coordinate, joint terms."""
    w_lambda: float = 1.0
    w_tau: float = 1.0
    w_q: float = 1.0
    w_joint: float = 1.0

    def __post_init__(self):
        for name in ("w_lambda", "w_tau", "w_q", "w_joint"):
            v = float(getattr(self, name))
            if v < 0.0 or not np.isfinite(v):
                raise ValueError("%s must be a nonnegative number" % name)
            setattr(self, name, v)


def kinetic_loss(pred, ref, weights=None):
    """w_lambda * sum ||lam_hat - lam_ref||^2 + w_tau * sum ||tau_hat - tau_ref||^2.

    pred and ref are equal-length sequences of KineticState (or anything
    with .tau and .lambda_total). Returns (total, breakdown).
    """
    if weights is None:
        weights = LossWeights()
    if len(pred) != len(ref):
        raise ValueError("kinetic series length mismatch: %d vs %d"
                         % (len(pred), len(ref)))
    s_lam = 0.0
    s_tau = 0.0
    for a, b in zip(pred, ref):
        dl = np.asarray(a.lambda_total, dtype=float) \
            - np.asarray(b.lambda_total, dtype=float)
        dt_ = np.asarray(a.tau, dtype=float) - np.asarray(b.tau, dtype=float)
        s_lam += float(dl @ dl)
        s_tau += float(dt_ @ dt_)
    breakdown = {"lambda": weights.w_lambda * s_lam,
                 "tau": weights.w_tau * s_tau}
    return breakdown["lambda"] + breakdown["tau"], breakdown


def joint_positions(model, q):
    """World positions of every segment origin, shape (n_segments, 3)."""
    return forward_kinematics(model, q).origins.copy()


def consistency_loss(fd_states, fk_joints, ref_states, ref_joints,
                     weights=None):
    """w_q * sum ||q_fd - q_ref||^2 + w_joint * sum ||J_fk - J_ref||^2.

    fd_states/ref_states: (T, d) generalized coordinates; fk_joints and
    ref_joints: (T, K, 3) joint positions (pass None for both to drop the
    joint term). Returns (total, breakdown).
    """
    if weights is None:
        weights = LossWeights()
    fd_states = np.asarray(fd_states, dtype=float)
    ref_states = np.asarray(ref_states, dtype=float)
    if fd_states.shape != ref_states.shape:
        raise ValueError("state series shape mismatch: %s vs %s"
                         % (fd_states.shape, ref_states.shape))
    dq = fd_states - ref_states
    s_q = float(np.sum(dq * dq))
    s_j = 0.0
    if fk_joints is not None or ref_joints is not None:
        fk_joints = np.asarray(fk_joints, dtype=float)
        ref_joints = np.asarray(ref_joints, dtype=float)
        if fk_joints.shape != ref_joints.shape:
            raise ValueError("joint series shape mismatch: %s vs %s"
                             % (fk_joints.shape, ref_joints.shape))
        if fk_joints.shape[0] != fd_states.shape[0]:
            raise ValueError("joint series length %d does not match states %d"
                             % (fk_joints.shape[0], fd_states.shape[0]))
        dj = fk_joints - ref_joints
        s_j = float(np.sum(dj * dj))
    breakdown = {"q": weights.w_q * s_q, "joint": weights.w_joint * s_j}
    return breakdown["q"] + breakdown["joint"], breakdown


@dataclass(eq=False)
class RoundtripReport:
    """Residuals from the ID -> FD closed loop, per frame and aggregated."""
    times: np.ndarray
    q_residual: np.ndarray           # (T,) per-frame ||q_fd - q_ref||
    joint_residual: np.ndarray       # (T,) per-frame ||J_fk - J_ref||_F
    tau_residual: np.ndarray         # (T,) re-derived torque error norms
    lambda_residual: np.ndarray      # (T,) contact force error norms
    loss_q: float
    loss_joint: float
    loss_tau: float
    loss_lambda: float
    total: float
    divergence_time: float = None    # None when the rollout survived
    reconstructed: Trajectory = None


def _kinetics_along(model, traj, contact):
    """Per-frame (tau_full, per-sphere forces, total lambda) by ID."""
    pm = pack(model)
    T = traj.q.shape[0]
    taus = np.zeros((T, pm.n))
    sph = np.zeros((T, pm.n_spheres, 3))
    total = np.zeros((T, 3))
    for k in range(T):
        idr = inverse_dynamics(model, traj.q[k], traj.qdot[k], traj.qddot[k],
                               contact=contact)
        taus[k] = idr.tau
        if contact != "none" and pm.n_spheres:
            cr = contact_forces(model, traj.q[k], traj.qdot[k])
            sph[k] = cr.f_normal + cr.f_tangential
            total[k] = cr.total
    return taus, sph, total


def roundtrip_check(model, trajectory, contact="auto", method="rk4",
                    weights=None, control_mode="linear"):
    """Inverse dynamics per frame, forward rollout under the result.

    contact: "auto" resolves to "prescribed" when the model has contact
    spheres (the recovered per-sphere forces are applied as external forces
    during the rollout) and to "none" otherwise; "model" re-evaluates the
    contact model from the rolled state instead. The report carries per-frame
    residuals; if the rollout dies early, divergence_time is set and the
    residuals cover the surviving prefix.
    """
    if trajectory.qddot is None:
        raise ValueError("trajectory needs accelerations; run "
                         "differentiate_trajectory or record them")
    times = np.asarray(trajectory.times, dtype=float)
    if times.shape[0] < 2:
        raise ValueError("trajectory needs at least 2 frames")
    dts = np.diff(times)
    if np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
        raise ValueError("trajectory must be uniformly sampled")
    if weights is None:
        weights = LossWeights()
    pm = pack(model)
    if contact == "auto":
        contact = "prescribed" if pm.n_spheres else "none"
    if contact not in ("none", "model", "prescribed"):
        raise ValueError("contact must be 'auto', 'none', 'model', or "
                         "'prescribed'")

    id_contact = "none" if contact == "none" else "auto"
    taus, sph, lam_ref = _kinetics_along(model, trajectory, id_contact)
    dt = float(dts[0])
    ctrl = ControlTrajectory(times=times - times[0], generalized=taus,
                             contact_forces=sph if contact == "prescribed"
                             else None, mode=control_mode)
    roll_contact = {"none": "none", "model": "auto",
                    "prescribed": "prescribed"}[contact]
    recon = rollout(model, (trajectory.q[0], trajectory.qdot[0]), ctrl,
                    dt=dt, horizon=float(times[-1] - times[0]),
                    method=method, contact=roll_contact,
                    record_accelerations=True)
    T = recon.q.shape[0]
    divergence_time = None if recon.error is None \
        else float(times[0] + recon.times[-1])

    q_res = np.linalg.norm(recon.q - trajectory.q[:T], axis=1)
    j_res = np.zeros(T)
    for k in range(T):
        dj = joint_positions(model, recon.q[k]) \
            - joint_positions(model, trajectory.q[k])
        j_res[k] = np.linalg.norm(dj)
    tau_res = np.zeros(T)
    lam_res = np.zeros(T)
    if recon.qddot is not None:
        sub = Trajectory(times=times[:T], q=recon.q, qdot=recon.qdot,
                         qddot=recon.qddot)
        if contact == "prescribed":
            # torque mismatch under the same prescribed forces
            taus2 = np.zeros((T, pm.n))
            for k in range(T):
                idr = inverse_dynamics(model, recon.q[k], recon.qdot[k],
                                       recon.qddot[k], contact=sph[k])
                taus2[k] = idr.tau
            lam2 = np.array([contact_forces(model, recon.q[k],
                                            recon.qdot[k]).total
                             for k in range(T)])
        else:
            taus2, _, lam2 = _kinetics_along(model, sub, id_contact)
        tau_res = np.linalg.norm(taus2 - taus[:T], axis=1)
        lam_res = np.linalg.norm(lam2 - lam_ref[:T], axis=1)

    loss_q = weights.w_q * float(q_res @ q_res)
    loss_j = weights.w_joint * float(j_res @ j_res)
    loss_t = weights.w_tau * float(tau_res @ tau_res)
    loss_l = weights.w_lambda * float(lam_res @ lam_res)
    return RoundtripReport(times=times[:T].copy(), q_residual=q_res,
                           joint_residual=j_res, tau_residual=tau_res,
                           lambda_residual=lam_res, loss_q=loss_q,
                           loss_joint=loss_j, loss_tau=loss_t,
                           loss_lambda=loss_l,
                           total=loss_q + loss_j + loss_t + loss_l,
                           divergence_time=divergence_time,
                           reconstructed=recon)


@dataclass(eq=False)
class SurrogateId:
    """Polynomial inverse-dynamics surrogate: [q, qdot] -> (tau_rot, lam).

    Features are degree <= 2 monomials of the stacked coordinate/rate
    vector; coef maps features to the rotational torques (n_rot rows)
    followed by the aggregate contact force (3 rows).
    """
    n_coords: int
    n_rot: int
    degree: int = 2
    ridge: float = 1e-8
    coef: np.ndarray = None          # (n_rot + 3, n_features)

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        if self.ridge < 0.0:
            raise ValueError("ridge must be nonnegative")
        if self.coef is None:
            self.coef = np.zeros((self.out_dim, self.n_features))
        else:
            self.coef = np.asarray(self.coef, dtype=float)
            if self.coef.shape != (self.out_dim, self.n_features):
                raise ValueError("coef must have shape (%d, %d)"
                                 % (self.out_dim, self.n_features))
            if not np.all(np.isfinite(self.coef)):
                raise ValueError("coef must be finite")

    @property
    def out_dim(self):
        return self.n_rot + 3

    @property
    def n_features(self):
        z = 2 * self.n_coords
        n = 1 + z
        if self.degree == 2:
            n += z * (z + 1) // 2
        return n

    def features_matrix(self, Q, Qd):
        Z = np.concatenate([np.atleast_2d(Q), np.atleast_2d(Qd)], axis=1)
        cols = [np.ones((Z.shape[0], 1)), Z]
        if self.degree == 2:
            i, j = np.triu_indices(Z.shape[1])
            cols.append(Z[:, i] * Z[:, j])
        return np.concatenate(cols, axis=1)

    def features(self, q, qdot):
        return self.features_matrix(q[None], qdot[None])[0]

    def predict(self, q, qdot):
        out = self.coef @ self.features(np.asarray(q, dtype=float),
                                        np.asarray(qdot, dtype=float))
        return out[:self.n_rot], out[self.n_rot:]


@dataclass(eq=False)
class TrainingReport:
    rows: list = field(default_factory=list)
    initial_loss: float = 0.0
    final_loss: float = 0.0


def _dataset_arrays(model, dataset):
    """Stacked (per trajectory) reference states, features targets."""
    pm = pack(model)
    if not dataset:
        raise ValueError("dataset must contain at least one trajectory")
    out = []
    for traj, kin in dataset:
        T = traj.q.shape[0]
        if len(kin) != T:
            raise ValueError("kinetics length %d does not match trajectory "
                             "length %d" % (len(kin), T))
        Y = np.zeros((T, pm.nr + 3))
        for k, ks in enumerate(kin):
            tau = np.asarray(ks.tau, dtype=float)
            if tau.shape[0] != pm.nr:
                raise ValueError("reference tau must have %d rotational "
                                 "rows" % pm.nr)
            Y[k, :pm.nr] = tau
            Y[k, pm.nr:] = np.asarray(ks.lambda_total, dtype=float)
        out.append((traj, Y))
    return out


def _joint_grad_vec(model, pm, q_hat, q_ref, w_q, w_joint, dq):
    """Gradient of the per-frame consistency terms wrt the rolled q."""
    g = 2.0 * w_q * dq
    if w_joint > 0.0:
        seg_ids = np.arange(pm.ns, dtype=np.int64)
        zeros = np.zeros((pm.ns, 3))
        JP, pts = points_jacobian_packed(pm, q_hat, seg_ids, zeros)
        rvec = (pts - joint_positions(model, q_ref)).ravel()
        g = g + 2.0 * w_joint * (JP.T @ rvec)
    return g


def surrogate_loss(model, sur, dataset, weights, single_step=True,
                   contact="auto", need_grad=True):
    """Training loss (kinetic + consistency + ridge) and its coef gradient.

    The consistency term rolls the model forward under the surrogate's
    torque predictions (one step per frame by default, the whole horizon
    in multi-step mode) and differentiates through the rollout.
    """
    pm = pack(model)
    data = _dataset_arrays(model, dataset)
    w = weights
    grad = np.zeros_like(sur.coef) if need_grad else None
    kin_tau = 0.0
    kin_lam = 0.0
    cons_q = 0.0
    cons_j = 0.0
    want_cons = (w.w_q > 0.0 or w.w_joint > 0.0)
    for traj, Y in data:
        Phi = sur.features_matrix(traj.q, traj.qdot)
        pred = Phi @ sur.coef.T
        resid = pred - Y
        kin_tau += float(np.sum(resid[:, :pm.nr] ** 2))
        kin_lam += float(np.sum(resid[:, pm.nr:] ** 2))
        if need_grad:
            rw = resid.copy()
            rw[:, :pm.nr] *= w.w_tau
            rw[:, pm.nr:] *= w.w_lambda
            grad += 2.0 * rw.T @ Phi
        if not want_cons:
            continue
        times = traj.times
        dt = float(times[1] - times[0])
        T = traj.q.shape[0]
        G = np.zeros((T, pm.n))
        G[:, pm.base:] = Phi @ sur.coef[:pm.nr].T
        if single_step:
            for t in range(T - 1):
                ctrl = ControlTrajectory(times=np.array([0.0]),
                                         generalized=G[t][None])
                cons_q, cons_j, ok = _cons_step(
                    model, pm, sur, w, ctrl, traj, Phi, grad, t, dt,
                    contact, cons_q, cons_j, need_grad)
                if not ok:
                    raise NumericalError(
                        "consistency rollout failed at frame %d" % t)
        else:
            ctrl = ControlTrajectory(times=times - times[0], generalized=G)
            cons_q, cons_j, ok = _cons_multi(
                model, pm, sur, w, ctrl, traj, Phi, grad, dt, contact,
                cons_q, cons_j, need_grad)
            if not ok:
                raise NumericalError("consistency rollout failed")
    pen = sur.ridge * float(np.sum(sur.coef ** 2))
    if need_grad:
        grad += 2.0 * sur.ridge * sur.coef
    breakdown = {"kinetic_tau": w.w_tau * kin_tau,
                 "kinetic_lambda": w.w_lambda * kin_lam,
                 "consistency_q": w.w_q * cons_q,
                 "consistency_joint": w.w_joint * cons_j,
                 "ridge": pen}
    total = sum(breakdown.values())
    breakdown["kinetic"] = breakdown["kinetic_tau"] \
        + breakdown["kinetic_lambda"]
    breakdown["consistency"] = breakdown["consistency_q"] \
        + breakdown["consistency_joint"]
    return total, grad, breakdown


def _cons_step(model, pm, sur, w, ctrl, traj, Phi, grad, t, dt, contact,
               cons_q, cons_j, need_grad):
    """One-step rollout from frame t; accumulate residuals and gradient."""
    x0 = (traj.q[t], traj.qdot[t])
    if need_grad:
        recon, S = rollout_with_sensitivities(model, x0, ctrl, dt=dt,
                                              horizon=dt, contact=contact,
                                              wrt="controls")
    else:
        recon = rollout(model, x0, ctrl, dt=dt, horizon=dt, contact=contact)
    if recon.error is not None or recon.q.shape[0] < 2:
        return cons_q, cons_j, False
    q_hat = recon.q[1]
    dq = q_hat - traj.q[t + 1]
    cons_q += float(dq @ dq)
    if w.w_joint > 0.0:
        dj = joint_positions(model, q_hat) \
            - joint_positions(model, traj.q[t + 1])
        cons_j += float(np.sum(dj * dj))
    if need_grad:
        g = _joint_grad_vec(model, pm, q_hat, traj.q[t + 1], w.w_q,
                            w.w_joint, dq)
        dLdG = g @ S[1, :pm.n, :]
        grad[:pm.nr] += np.outer(dLdG[pm.base:], Phi[t])
    return cons_q, cons_j, True


def _cons_multi(model, pm, sur, w, ctrl, traj, Phi, grad, dt, contact,
                cons_q, cons_j, need_grad):
    """Whole-horizon rollout under per-frame surrogate torques."""
    T = traj.q.shape[0]
    horizon = float(traj.times[-1] - traj.times[0])
    x0 = (traj.q[0], traj.qdot[0])
    if need_grad:
        recon, S = rollout_with_sensitivities(model, x0, ctrl, dt=dt,
                                              horizon=horizon,
                                              contact=contact,
                                              wrt="controls")
    else:
        recon = rollout(model, x0, ctrl, dt=dt, horizon=horizon,
                        contact=contact)
    if recon.error is not None or recon.q.shape[0] != T:
        return cons_q, cons_j, False
    dLdG = np.zeros((T, pm.n)) if need_grad else None
    for k in range(1, T):
        dq = recon.q[k] - traj.q[k]
        cons_q += float(dq @ dq)
        if w.w_joint > 0.0:
            dj = joint_positions(model, recon.q[k]) \
                - joint_positions(model, traj.q[k])
            cons_j += float(np.sum(dj * dj))
        if need_grad:
            g = _joint_grad_vec(model, pm, recon.q[k], traj.q[k], w.w_q,
                                w.w_joint, dq)
            dLdG += (g @ S[k, :pm.n, :]).reshape(T, pm.n)
    if need_grad:
        grad[:pm.nr] += dLdG[:, pm.base:].T @ Phi
    return cons_q, cons_j, True


def fit_surrogate_id(model, dataset, weights=None, degree=2, ridge=1e-8,
                     lr=1e-4, steps=25, single_step=True, contact="auto"):
    """Ridge least-squares warm start, then gradient descent on the full
    training loss with gradients taken through the consistency rollouts.

    dataset: sequence of (Trajectory, kinetics) pairs where kinetics is a
    per-frame KineticState series (e.g. from extract_reference_kinetics).
    Returns (surrogate, TrainingReport). Backtracking halves the step when
    it would increase the loss, so a fixed lr is safe to start large.
    """
    pm = pack(model)
    if weights is None:
        weights = LossWeights()
    data = _dataset_arrays(model, dataset)
    sur = SurrogateId(n_coords=pm.n, n_rot=pm.nr, degree=degree, ridge=ridge)
    Phi = np.concatenate([sur.features_matrix(traj.q, traj.qdot)
                          for traj, _ in data])
    Y = np.concatenate([y for _, y in data])
    F = Phi.shape[1]
    if ridge > 0.0:
        A = np.concatenate([Phi, np.sqrt(ridge) * np.eye(F)])
        B = np.concatenate([Y, np.zeros((F, Y.shape[1]))])
    else:
        A, B = Phi, Y
    sol = np.linalg.lstsq(A, B, rcond=None)[0]
    sur.coef = sol.T.copy()

    report = TrainingReport()
    loss, grad, br = surrogate_loss(model, sur, dataset, weights,
                                    single_step=single_step, contact=contact)
    report.initial_loss = loss
    for step in range(int(steps)):
        if not np.isfinite(loss):
            raise NumericalError("surrogate training diverged at step %d"
                                 % step)
        report.rows.append({"step": step, "total": loss,
                            "kinetic": br["kinetic"],
                            "consistency": br["consistency"],
                            "ridge": br["ridge"], "lr": lr})
        if lr == 0.0:
            continue
        lr_k = lr
        accepted = False
        for _ in range(30):
            old = sur.coef
            sur.coef = old - lr_k * grad
            val, _, _ = surrogate_loss(model, sur, dataset, weights,
                                       single_step=single_step,
                                       contact=contact, need_grad=False)
            if np.isfinite(val) and val <= loss:
                accepted = True
                break
            sur.coef = old
            lr_k *= 0.5
        if not accepted:
            break                    # no descent direction left
        loss, grad, br = surrogate_loss(model, sur, dataset, weights,
                                        single_step=single_step,
                                        contact=contact)
    report.final_loss = loss
    report.rows.append({"step": len(report.rows), "total": loss,
                        "kinetic": br["kinetic"],
                        "consistency": br["consistency"],
                        "ridge": br["ridge"], "lr": lr})
    return sur, report


def save_surrogate(path, sur):
    """Write surrogate weights as structured text (JSON)."""
    doc = {"type": "surrogate_id", "version": 1, "n_coords": sur.n_coords,
           "n_rot": sur.n_rot, "degree": sur.degree, "ridge": sur.ridge,
           "coef": sur.coef.tolist()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_surrogate(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("type") != "surrogate_id":
        raise ValueError("%s is not a surrogate weights file" % path)
    return SurrogateId(n_coords=int(doc["n_coords"]),
                       n_rot=int(doc["n_rot"]), degree=int(doc["degree"]),
                       ridge=float(doc["ridge"]),
                       coef=np.asarray(doc["coef"], dtype=float))
