"""Direct-collocation optimal control for reference kinetics.

Trapezoidal transcription over a uniform knot grid: decision vector is all
knot states followed by all knot controls (muscle excitations, then residual
actuator torques). Dynamics enter as defect equality constraints handled by
a quadratic-penalty outer loop; each penalty subproblem is an exact sum of
squares, so the inner solve is a box-constrained trust-region Gauss-Newton
step on the stacked residual vector, with Jacobians assembled from per-knot
dynamics linearizations.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import dual, engine
from .dynamics import contact_forces, muscle_torques
from .model import KineticState, NumericalError, pack

DEFAULT_WEIGHTS = (1e-3, 1.0, 1e-1, 1e-3)


@dataclass(eq=False)
class OcpProblem:
    """Tracking problem: follow reference kinematics with minimal effort."""
    model: object
    times: np.ndarray                # (N,) uniform knots
    q_ref: np.ndarray                # (N,d)
    qdot_ref: np.ndarray             # (N,d)
    qddot_ref: np.ndarray            # (N,d)
    weights: tuple = DEFAULT_WEIGHTS  # (w1 effort, w2 q, w3 qdot, w4 qddot)
    contact: str = "auto"
    enforcement: str = "trapezoid"
    jacobians: str = "fd"            # knot linearization: "fd" or "dual"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        N = self.times.shape[0]
        if N < 2:
            raise ValueError("grid needs at least 2 knots")
        dts = np.diff(self.times)
        if np.any(dts <= 0) or np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
            raise ValueError("knot grid must be uniform and increasing")
        d = pack(self.model).n
        for name in ("q_ref", "qdot_ref", "qddot_ref"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (N, d):
                raise ValueError("%s must have shape (%d, %d)" % (name, N, d))
            setattr(self, name, v)
        w = tuple(float(x) for x in self.weights)
        if len(w) != 4 or any(x < 0 for x in w):
            raise ValueError("weights must be four nonnegative numbers")
        self.weights = w
        if self.contact not in ("auto", "none"):
            raise ValueError("contact must be 'auto' or 'none'")
        if self.jacobians not in ("fd", "dual"):
            raise ValueError("jacobians must be 'fd' or 'dual'")

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])


def _knot_tau(pm, mod, e, taur, q, qdot):
    tau = q * 0.0 + qdot * 0.0
    if pm.n_muscles:
        tau = tau + mod.muscle_tau(*pm.msc, e, q, qdot, pm.root_free)
    for c in range(pm.n_act):
        i = pm.base + pm.act_rdof[c]
        tau[i] = tau[i] + taur[c]
    return tau


def _knot_acc(pm, contact, q, qdot, e, taur):
    mod = engine.core_py if any(
        getattr(a, "dtype", None) == np.dtype(object)
        for a in (q, qdot, e, taur)) else engine.active
    tau = _knot_tau(pm, mod, e, taur, q, qdot)
    mode = 1 if (contact == "auto" and pm.n_spheres) else 0
    qdd, ok = mod.fd_core(*pm.kin, *pm.iner, *pm.sph, pm.gravity,
                          q, qdot, tau, mode, np.zeros((pm.n_spheres, 3)))
    okv = int(ok.val if hasattr(ok, "val") else ok)
    return np.asarray(qdd), okv


def _knot_lin_dual(pm, contact, q, qdot, e, taur):
    """Acceleration and its Jacobians wrt (x, u) at one knot via duals."""
    d = q.shape[0]
    me = e.shape[0]
    mt = taur.shape[0]
    width = 2 * d + me + mt
    vals = np.concatenate([q, qdot, e, taur])
    rows = np.eye(width)
    z = dual.seed(vals, rows)
    a, okv = _knot_acc(pm, contact, z[:d], z[d:2 * d],
                       z[2 * d:2 * d + me], z[2 * d + me:])
    acc = dual.values(a)
    T = dual.tangents(a, width)
    return acc, T[:, :2 * d], T[:, 2 * d:], okv


def _knot_lin_fd(pm, contact, q, qdot, e, taur):
    """Same Jacobians by central differences on the compiled kernels."""
    d = q.shape[0]
    me = e.shape[0]
    width = 2 * d + me + taur.shape[0]
    acc, okv = _knot_acc(pm, contact, q, qdot, e, taur)
    T = np.zeros((d, width))
    vals = np.concatenate([q, qdot, e, taur])
    for i in range(width):
        h = 6e-6 * max(1.0, abs(vals[i]))
        vp = vals.copy()
        vp[i] += h
        vm = vals.copy()
        vm[i] -= h
        ap, okp = _knot_acc(pm, contact, vp[:d], vp[d:2 * d],
                            vp[2 * d:2 * d + me], vp[2 * d + me:])
        am, okm = _knot_acc(pm, contact, vm[:d], vm[d:2 * d],
                            vm[2 * d:2 * d + me], vm[2 * d + me:])
        okv = okv * okp * okm
        T[:, i] = (ap - am) / (2.0 * h)
    return acc, T[:, :2 * d], T[:, 2 * d:], okv


@dataclass(eq=False)
class OcpNlp:
    """Transcribed nonlinear program (decision vector = states ⊕ controls)."""
    problem: OcpProblem
    N: int
    d: int                          # state q dimension (ndof)
    m: int                          # controls per knot
    n_muscles: int
    z0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def dim(self):
        return self.N * (2 * self.d + self.m)

    def split(self, z):
        ns = self.N * 2 * self.d
        x = z[:ns].reshape(self.N, 2 * self.d)
        u = z[ns:].reshape(self.N, self.m)
        return x, u

    def join(self, x, u):
        return np.concatenate([x.ravel(), u.ravel()])

    def _eval_knots(self, x, u, need_jac):
        """Accelerations (and Jacobians) at every knot."""
        pm = pack(self.problem.model)
        d = self.d
        me = self.n_muscles
        acc = np.zeros((self.N, d))
        Ax = np.zeros((self.N, d, 2 * d)) if need_jac else None
        Bu = np.zeros((self.N, d, self.m)) if need_jac else None
        lin = _knot_lin_dual if self.problem.jacobians == "dual" \
            else _knot_lin_fd
        for k in range(self.N):
            q, qd = x[k, :d], x[k, d:]
            e, taur = u[k, :me], u[k, me:]
            if need_jac:
                a, A, B, okv = lin(pm, self.problem.contact, q, qd, e, taur)
                Ax[k] = A
                Bu[k] = B
            else:
                a, okv = _knot_acc(pm, self.problem.contact, q, qd, e, taur)
            if okv != 1 or not np.all(np.isfinite(a)):
                raise NumericalError(
                    "dynamics evaluation failed at knot %d" % k)
            acc[k] = a
        return acc, Ax, Bu

    def defects(self, z):
        """Trapezoidal collocation defects, shape (N-1, 2d)."""
        x, u = self.split(z)
        acc, _, _ = self._eval_knots(x, u, False)
        d = self.d
        f = np.concatenate([x[:, d:], acc], axis=1)
        dt = self.problem.dt
        return x[1:] - x[:-1] - (dt / 2.0) * (f[:-1] + f[1:])

    def objective(self, z):
        val, _, br = self._merit(z, 0.0, need_grad=False)
        return val, br

    def merit(self, z, mu):
        val, grad, _ = self._merit(z, mu, need_grad=True)
        return val, grad

    def residuals(self, z, mu, need_jac=True):
        """Stacked residual r (and dense Jacobian) with ‖r‖² = merit(z, mu).

        Row layout: per knot [effort, q, qdot, qddot] tracking residuals,
        then per interval the sqrt(mu)-scaled collocation defects.
        """
        p = self.problem
        d, me, N, m = self.d, self.n_muscles, self.N, self.m
        dt = p.dt
        w1, w2, w3, w4 = p.weights
        x, u = self.split(z)
        acc, Ax, Bu = self._eval_knots(x, u, need_jac)
        cw = np.full(N, dt)
        cw[0] = cw[-1] = dt / 2.0
        s1, s2, s3, s4 = (np.sqrt(w * cw) for w in (w1, w2, w3, w4))
        smu = np.sqrt(mu)

        per = me + 3 * d
        rows = N * per + (N - 1) * 2 * d
        r = np.zeros(rows)
        J = np.zeros((rows, self.dim)) if need_jac else None
        ns = N * 2 * d
        eye_d = np.eye(d)
        for k in range(N):
            o = k * per
            xc = k * 2 * d
            uc = ns + k * m
            if me:
                r[o:o + me] = s1[k] * u[k, :me]
            r[o + me:o + me + d] = s2[k] * (x[k, :d] - p.q_ref[k])
            r[o + me + d:o + me + 2 * d] = s3[k] * (x[k, d:] - p.qdot_ref[k])
            r[o + me + 2 * d:o + per] = s4[k] * (acc[k] - p.qddot_ref[k])
            if need_jac:
                for i in range(me):
                    J[o + i, uc + i] = s1[k]
                J[o + me:o + me + d, xc:xc + d] = s2[k] * eye_d
                J[o + me + d:o + me + 2 * d, xc + d:xc + 2 * d] = s3[k] * eye_d
                J[o + me + 2 * d:o + per, xc:xc + 2 * d] = s4[k] * Ax[k]
                J[o + me + 2 * d:o + per, uc:uc + m] = s4[k] * Bu[k]

        f = np.concatenate([x[:, d:], acc], axis=1)
        c = x[1:] - x[:-1] - (dt / 2.0) * (f[:-1] + f[1:])
        base = N * per
        for k in range(N - 1):
            o = base + k * 2 * d
            r[o:o + 2 * d] = smu * c[k]
            if need_jac:
                # d c_k / d x_j = sgn I - dt/2 F_j, F_j = [[0, I], [Aq, Aqd]]
                for j, sgn in ((k, -1.0), (k + 1, 1.0)):
                    xc = j * 2 * d
                    uc = ns + j * m
                    blk = sgn * np.eye(2 * d)
                    blk[:d, d:] -= (dt / 2.0) * eye_d
                    blk[d:, :] -= (dt / 2.0) * Ax[j]
                    J[o:o + 2 * d, xc:xc + 2 * d] = smu * blk
                    J[o + d:o + 2 * d, uc:uc + m] = smu * (-dt / 2.0) * Bu[j]
        return (r, J) if need_jac else (r, None)

    def _merit(self, z, mu, need_grad=True):
        p = self.problem
        d = self.d
        me = self.n_muscles
        N = self.N
        dt = p.dt
        w1, w2, w3, w4 = p.weights
        x, u = self.split(z)
        acc, Ax, Bu = self._eval_knots(x, u, need_grad)
        cw = np.full(N, dt)
        cw[0] = cw[-1] = dt / 2.0

        dq = x[:, :d] - p.q_ref
        dqd = x[:, d:] - p.qdot_ref
        da = acc - p.qddot_ref
        e = u[:, :me]
        eff = float(np.sum(cw * np.sum(e * e, axis=1))) if me else 0.0
        term_q = float(np.sum(cw * np.sum(dq * dq, axis=1)))
        term_qd = float(np.sum(cw * np.sum(dqd * dqd, axis=1)))
        term_a = float(np.sum(cw * np.sum(da * da, axis=1)))
        obj = w1 * eff + w2 * term_q + w3 * term_qd + w4 * term_a

        f = np.concatenate([x[:, d:], acc], axis=1)
        c = x[1:] - x[:-1] - (dt / 2.0) * (f[:-1] + f[1:])
        pen = float(np.sum(c * c))
        val = obj + mu * pen
        breakdown = {"effort": w1 * eff, "q": w2 * term_q,
                     "qdot": w3 * term_qd, "qddot": w4 * term_a,
                     "defect_sq": pen,
                     "defect_inf": float(np.max(np.abs(c), initial=0.0))}
        if not need_grad:
            return val, None, breakdown

        gx = np.zeros((N, 2 * d))
        gu = np.zeros((N, self.m))
        # tracking terms
        gx[:, :d] += 2.0 * w2 * cw[:, None] * dq
        gx[:, d:] += 2.0 * w3 * cw[:, None] * dqd
        if me:
            gu[:, :me] += 2.0 * w1 * cw[:, None] * e
        for k in range(N):
            lam_a = 2.0 * w4 * cw[k] * da[k]
            gx[k] += lam_a @ Ax[k]
            gu[k] += lam_a @ Bu[k]
        # penalty term
        if mu > 0.0:
            for k in range(N - 1):
                ck = c[k]
                # d c_k / d x_k = -I - dt/2 F_k; / d x_{k+1} = I - dt/2 F_{k+1}
                top = ck[:d]
                bot = ck[d:]
                # F_j = [[0, I], [Aq, Aqd]]; G_j = [[0], [B]]
                for j, sgn in ((k, -1.0), (k + 1, 1.0)):
                    g = np.zeros(2 * d)
                    g += sgn * ck
                    g[:d] += -(dt / 2.0) * (bot @ Ax[j][:, :d])
                    g[d:] += -(dt / 2.0) * (top + bot @ Ax[j][:, d:])
                    gx[j] += 2.0 * mu * g
                    gu[j] += 2.0 * mu * (-(dt / 2.0)) * (bot @ Bu[j])
        grad = self.join(gx, gu)
        return val, grad, breakdown


def transcribe(problem):
    """Build the NLP: decision layout, bounds, and initial guess."""
    pm = pack(problem.model)
    N = problem.times.shape[0]
    d = pm.n
    me = pm.n_muscles
    mt = pm.n_act
    m = me + mt
    x0 = np.concatenate([problem.q_ref, problem.qdot_ref], axis=1)
    u0 = np.zeros((N, m))
    lo = np.full(N * (2 * d + m), -np.inf)
    hi = np.full(N * (2 * d + m), np.inf)
    ns = N * 2 * d
    for k in range(N):
        base = ns + k * m
        lo[base:base + me] = 0.0
        hi[base:base + me] = 1.0
        for c in range(mt):
            lo[base + me + c] = -pm.act_bound[c]
            hi[base + me + c] = pm.act_bound[c]
    nlp = OcpNlp(problem=problem, N=N, d=d, m=m, n_muscles=me,
                 z0=np.concatenate([x0.ravel(), u0.ravel()]),
                 lower=lo, upper=hi)
    return nlp


@dataclass(eq=False)
class OcpSolution:
    times: np.ndarray
    q: np.ndarray                    # (N,d)
    qdot: np.ndarray
    excitations: np.ndarray          # (N, n_muscles)
    residual_torques: np.ndarray     # (N, n_act)
    tau: np.ndarray                  # (N, ndof) total generalized torque
    lam: np.ndarray                  # (N, 3) aggregate contact force
    objective: float
    breakdown: dict = field(default_factory=dict)
    defect_inf: float = 0.0
    status: str = "converged"
    outer_iterations: int = 0
    merit_history: list = field(default_factory=list)


def solve_ocp(problem, mu0=1e2, mu_factor=10.0, max_outer=8,
              inner_maxiter=100, defect_tol=1e-6):
    """Penalty solve of the transcribed problem.

    Each penalty subproblem min ‖r(z)‖² is handled by a box-constrained
    trust-region Gauss-Newton solver; the penalty weight escalates until the
    collocation defects drop below defect_tol (status "converged").
    "max-iter" means the inner solver kept hitting its evaluation cap,
    "stalled" means escalation stopped helping.
    """
    nlp = transcribe(problem)
    z = nlp.z0.copy()
    mu = mu0
    status = "stalled"
    prev_def = np.inf
    hit_cap = False
    outer = 0
    history = []
    for outer in range(1, max_outer + 1):
        m_start = nlp.merit(z, mu)[0]
        res = least_squares(
            lambda zz: nlp.residuals(zz, mu, need_jac=False)[0], z,
            jac=lambda zz: nlp.residuals(zz, mu)[1],
            bounds=(nlp.lower, nlp.upper), method="trf", x_scale="jac",
            ftol=1e-12, xtol=1e-12, gtol=1e-12, max_nfev=inner_maxiter)
        z = res.x
        hit_cap = (res.status == 0)
        c = nlp.defects(z)
        dinf = float(np.max(np.abs(c), initial=0.0))
        history.append({"outer": outer, "mu": mu, "merit_start": m_start,
                        "merit_end": float(2.0 * res.cost),
                        "defect_inf": dinf, "nfev": int(res.nfev)})
        if dinf < defect_tol:
            status = "converged"
            break
        if dinf > 0.9 * prev_def and outer > 2:
            status = "stalled"
            break
        prev_def = dinf
        mu *= mu_factor
    else:
        status = "max-iter" if hit_cap else "stalled"

    x, u = nlp.split(z)
    d = nlp.d
    me = nlp.n_muscles
    obj, br = nlp.objective(z)
    c = nlp.defects(z)
    model = problem.model
    pm = pack(model)
    N = nlp.N
    tau = np.zeros((N, d))
    lam = np.zeros((N, 3))
    for k in range(N):
        tau[k] = muscle_torques(model, x[k, :d], x[k, d:], u[k, :me]
                                if me else None, residual=u[k, me:]
                                if pm.n_act else None)
        if problem.contact == "auto" and pm.n_spheres:
            lam[k] = contact_forces(model, x[k, :d], x[k, d:]).total
    return OcpSolution(times=problem.times.copy(), q=x[:, :d],
                       qdot=x[:, d:], excitations=u[:, :me].copy(),
                       residual_torques=u[:, me:].copy(), tau=tau, lam=lam,
                       objective=obj, breakdown=br,
                       defect_inf=float(np.max(np.abs(c), initial=0.0)),
                       status=status, outer_iterations=outer,
                       merit_history=history)


def extract_reference_kinetics(model, solution):
    """Per-knot KineticState series (τ̃, λ̃) along an OCP solution."""
    pm = pack(model)
    out = []
    for k in range(solution.times.shape[0]):
        q, qd = solution.q[k], solution.qdot[k]
        if pm.n_spheres:
            cr = contact_forces(model, q, qd)
            fn, ft, total = cr.f_normal, cr.f_tangential, cr.total
        else:
            fn = np.zeros((pm.n_spheres, 3))
            ft = np.zeros((pm.n_spheres, 3))
            total = np.zeros(3)
        out.append(KineticState(tau=solution.tau[k][pm.base:],
                                lambda_total=total, f_normal=fn,
                                f_tangential=ft))
    return out
