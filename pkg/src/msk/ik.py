"""Marker-based inverse kinematics and trajectory differentiation.

Damped Gauss-Newton over generalized coordinates against weighted marker
targets, with joint-limit projection, missing-marker handling (zero weight),
an observability pre-check, and warm-started sequence solving.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, filtfilt

from .kinematics import points_jacobian_packed
from .model import Trajectory, pack


class IkError(RuntimeError):
    """Inverse kinematics could not be set up or did not make sense."""


@dataclass(eq=False)
class MarkerFrame:
    """Measured marker positions; NaN rows mean the marker is missing."""
    positions: np.ndarray            # (M,3)
    weights: np.ndarray = None       # (M,) nonnegative

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise IkError("marker positions must be (M,3)")
        M = self.positions.shape[0]
        w = np.ones(M) if self.weights is None \
            else np.asarray(self.weights, dtype=float).copy()
        if w.shape != (M,) or np.any(w < 0.0):
            raise IkError("weights must be (M,) nonnegative")
        w[~np.isfinite(self.positions).all(axis=1)] = 0.0
        self.weights = w


@dataclass(eq=False)
class IkSolution:
    q: np.ndarray
    residual: float                  # weighted RMS marker distance, m
    iterations: int
    converged: bool
    marker_errors: np.ndarray        # (M,) distances; NaN where missing


def _canon_root(pm, q):
    if not pm.root_free:
        return q
    R = q[3:6]
    theta = np.linalg.norm(R)
    while theta >= np.pi:
        R = R * (1.0 - 2.0 * np.pi / theta)
        theta = np.linalg.norm(R)
    q = q.copy()
    q[3:6] = R
    return q


def _project(pm, q):
    q = _canon_root(pm, q)
    if pm.nr:
        q[pm.base:] = np.clip(q[pm.base:], pm.dof_limits[:, 0],
                              pm.dof_limits[:, 1])
    return q


def check_observability(model, weights):
    """Raise IkError listing joints whose DoFs the visible markers cannot
    pin down (fewer subtree markers than the joint's DoF count), or a root
    with fewer than three visible markers when it floats."""
    pm = pack(model)
    visible = np.asarray(weights) > 0.0
    bad = []
    if pm.root_free and int(visible.sum()) < 3:
        bad.append("root (needs >= 3 visible markers, has %d)"
                   % int(visible.sum()))
    # visible markers per segment subtree
    count = np.zeros(pm.ns, dtype=int)
    for k in range(pm.mark_seg.shape[0]):
        if visible[k]:
            b = pm.mark_seg[k]
            while b >= 0:
                count[b] += 1
                b = pm.parents[b]
    jmap = {model.segment_index(j.child): j for j in model.joints}
    for i in range(1, pm.ns):
        j = jmap.get(i)
        if j is not None and j.dof_count > 0 and count[i] < j.dof_count:
            bad.append("%s (subtree has %d visible markers, needs >= %d)"
                       % (j.name, count[i], j.dof_count))
    if bad:
        raise IkError("underdetermined coordinates: " + "; ".join(bad))


def solve_ik_frame(model, frame, q0=None, tol=1e-10, max_iter=100,
                   damping=1e-3):
    """Fit generalized coordinates to one marker frame.

    frame: MarkerFrame or raw (M,3) positions matching the model's markers
    in declaration order. Returns an IkSolution; convergence means the
    projected-gradient norm fell below tol.
    """
    pm = pack(model)
    M = pm.mark_seg.shape[0]
    if M == 0:
        raise IkError("model has no markers")
    if not isinstance(frame, MarkerFrame):
        frame = MarkerFrame(np.asarray(frame, dtype=float))
    if frame.positions.shape[0] != M:
        raise IkError("expected %d markers, got %d"
                      % (M, frame.positions.shape[0]))
    check_observability(model, frame.weights)
    w = frame.weights
    target = np.where(np.isfinite(frame.positions), frame.positions, 0.0)
    sw = np.repeat(np.sqrt(w), 3)

    q = np.zeros(pm.n) if q0 is None else np.asarray(q0, dtype=float).copy()
    q = _project(pm, q)

    def residual(qv):
        J, pts = points_jacobian_packed(pm, qv, pm.mark_seg, pm.mark_pos)
        r = (np.asarray(pts) - target).ravel() * sw
        return np.asarray(J) * sw[:, None], r, np.asarray(pts)

    J, r, pts = residual(q)
    cost = 0.5 * float(r @ r)
    lam = damping
    it = 0
    converged = False
    while it < max_iter:
        grad = J.T @ r
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        H = J.T @ J + lam * np.eye(pm.n)
        try:
            dq = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        q_new = _project(pm, q + dq)
        J_new, r_new, pts_new = residual(q_new)
        cost_new = 0.5 * float(r_new @ r_new)
        it += 1
        if cost_new < cost:
            q, J, r, pts, cost = q_new, J_new, r_new, pts_new, cost_new
            lam = max(lam * 0.5, 1e-12)
        else:
            lam *= 10.0
            if lam > 1e10:
                break
    dist = np.linalg.norm(pts - target, axis=1)
    errs = np.where(w > 0.0, dist, np.nan)
    wsum = float(w.sum())
    rms = float(np.sqrt((w * dist ** 2).sum() / wsum)) if wsum > 0 else 0.0
    return IkSolution(q=q, residual=rms, iterations=it, converged=converged,
                      marker_errors=errs)


def solve_ik_sequence(model, times, frames, q0=None, tol=1e-10,
                      max_iter=100):
    """Warm-started IK over a marker sequence.

    frames: (T,M,3) array or list of MarkerFrame. The first frame starts
    from q0 (or rest); each later frame starts from the previous solution.
    Returns (Trajectory with zero rates, [IkSolution]).
    """
    times = np.asarray(times, dtype=float)
    sols = []
    qprev = q0
    for f in frames:
        s = solve_ik_frame(model, f, q0=qprev, tol=tol, max_iter=max_iter)
        sols.append(s)
        qprev = s.q
    if len(sols) != times.shape[0]:
        raise IkError("got %d frames for %d times"
                      % (len(sols), times.shape[0]))
    qs = np.stack([s.q for s in sols])
    traj = Trajectory(times=times, q=qs, qdot=np.zeros_like(qs))
    return traj, sols


def _unwrap_root(pm, q):
    """Keep the root exponential coordinates continuous across frames."""
    if not pm.root_free or q.shape[0] < 2:
        return q
    q = q.copy()
    for t in range(1, q.shape[0]):
        R = q[t, 3:6]
        theta = np.linalg.norm(R)
        best = R
        bestd = np.linalg.norm(R - q[t - 1, 3:6])
        if theta > 1e-12:
            for k in (-1.0, 1.0):
                cand = R * (1.0 + k * 2.0 * np.pi / theta)
                d = np.linalg.norm(cand - q[t - 1, 3:6])
                if d < bestd:
                    best, bestd = cand, d
        q[t, 3:6] = best
    return q


def differentiate_trajectory(model, times, q, smooth=True, cutoff_hz=6.0):
    """Rates and accelerations from sampled coordinates.

    Root exponential coordinates are unwrapped for continuity first; a
    zero-phase 4th-order Butterworth low-pass (cutoff_hz) is applied when
    smooth=True and the series is long enough for it. Interior samples use
    central differences, the ends one-sided ones.
    """
    pm = pack(model)
    times = np.asarray(times, dtype=float)
    q = np.asarray(q, dtype=float)
    T = q.shape[0]
    if T < 2:
        raise ValueError("need at least two samples to differentiate")
    dt = float(times[1] - times[0])
    if dt <= 0.0 or np.max(np.abs(np.diff(times) - dt)) > 1e-9 * max(1.0, dt):
        raise ValueError("times must be uniformly spaced")
    q = _unwrap_root(pm, q)
    if smooth and T > 15:
        b, a = butter(4, cutoff_hz / (0.5 / dt), btype="low")
        q = filtfilt(b, a, q, axis=0)

    def diff(y):
        d = np.zeros_like(y)
        d[1:-1] = (y[2:] - y[:-2]) / (2.0 * dt)
        d[0] = (y[1] - y[0]) / dt
        d[-1] = (y[-1] - y[-2]) / dt
        return d

    qdot = diff(q)
    qddot = diff(qdot)
    return q, qdot, qddot
