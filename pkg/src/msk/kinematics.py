"""Forward kinematics and geometric Jacobians over skeleton models.

Thin typed wrappers around the packed kernels: inputs are models plus
GeneralizedState (or raw generalized vectors), outputs are plain arrays in
world coordinates.
"""

from dataclasses import dataclass

import numpy as np

from . import engine
from .model import GeneralizedState, pack, state_to_q


def _as_q(model, state):
    """Accept a GeneralizedState or a raw generalized vector."""
    if isinstance(state, GeneralizedState):
        q, _ = state_to_q(model, state)
        return q
    q = np.asarray(state, dtype=float)
    if q.shape != (model.ndof,):
        raise ValueError("expected a generalized vector of length %d, got %s"
                         % (model.ndof, q.shape))
    return q


def _as_q_qdot(model, state, qdot=None):
    if isinstance(state, GeneralizedState):
        return state_to_q(model, state)
    q = _as_q(model, state)
    if qdot is None:
        raise ValueError("qdot is required when state is a raw vector")
    qdot = np.asarray(qdot, dtype=float)
    if qdot.shape != (model.ndof,):
        raise ValueError("expected qdot of length %d, got %s"
                         % (model.ndof, qdot.shape))
    return q, qdot


@dataclass(eq=False)
class PoseResult:
    """World pose of every segment, in model (topological) order."""
    model: object
    rotations: np.ndarray           # (ns,3,3)
    origins: np.ndarray             # (ns,3)
    ang_vel: np.ndarray = None      # (ns,3) world, when velocities requested
    lin_vel: np.ndarray = None      # (ns,3) origin velocity

    def rotation(self, name):
        return self.rotations[self.model.segment_index(name)]

    def origin(self, name):
        return self.origins[self.model.segment_index(name)]

    def com_positions(self):
        pm = pack(self.model)
        out = np.zeros((pm.ns, 3))
        for i in range(pm.ns):
            out[i] = self.origins[i] + self.rotations[i] @ pm.com[i]
        return out


def forward_kinematics(model, state, qdot=None, velocities=False):
    """World rotations and origins for all segments; velocities on request."""
    pm = pack(model)
    if velocities:
        q, qd = _as_q_qdot(model, state, qdot)
        Rw, pw, om, vo = engine.active.fk_vel(*pm.kin, q, qd)
        return PoseResult(model, Rw, pw, om, vo)
    q = _as_q(model, state)
    Rw, pw = engine.active.fk(*pm.kin, q)
    return PoseResult(model, Rw, pw)


def segment_pose(model, state, name):
    pose = forward_kinematics(model, state)
    return pose.rotation(name), pose.origin(name)


def marker_positions(model, state):
    """World positions of the model's markers, in declaration order (M,3)."""
    pm = pack(model)
    q = _as_q(model, state)
    Rw, pw = engine.active.fk(*pm.kin, q)
    if pm.mark_seg.shape[0] == 0:
        return np.zeros((0, 3))
    return engine.active.body_points(pm.mark_seg, pm.mark_pos, Rw, pw,
                                     q[0] * 0.0)


def point_positions(model, state, segments, local_points):
    """World positions of caller-supplied body-fixed points.

    Local points follow the same convention as stored model points: they are
    expressed pre-scaling and the segment scale is applied here.
    """
    pm = pack(model)
    q = _as_q(model, state)
    seg_ids = np.array([model.segment_index(s) for s in segments],
                       dtype=np.int64)
    pts = np.asarray(local_points, dtype=float).reshape(-1, 3).copy()
    for r, i in enumerate(seg_ids):
        pts[r] = pts[r] * model.segments[i].scale
    Rw, pw = engine.active.fk(*pm.kin, q)
    return engine.active.body_points(seg_ids, pts, Rw, pw, q[0] * 0.0)


def _frames(pm, q):
    Rw, pw = engine.active.fk(*pm.kin, q)
    dof = engine.active.dof_frames(*pm.kin, q, Rw, pw)
    return Rw, pw, dof


def points_jacobian_packed(pm, q, seg_ids, local_pts):
    """Stacked (3K, n) Jacobian for pre-scaled local points (internal)."""
    Rw, pw, dof = _frames(pm, q)
    pts = engine.active.body_points(seg_ids, local_pts, Rw, pw, q[0] * 0.0)
    J = engine.active.points_jacobian(pm.parents, seg_ids, pts, *dof,
                                      q[0] * 0.0)
    return J, pts


def point_jacobian(model, state, segment, local_point):
    """(3, n) world-velocity Jacobian of one body-fixed point."""
    pm = pack(model)
    q = _as_q(model, state)
    i = model.segment_index(segment)
    pts = np.asarray(local_point, dtype=float).reshape(1, 3) \
        * model.segments[i].scale
    J, _ = points_jacobian_packed(pm, q, np.array([i], dtype=np.int64), pts)
    return J


def marker_jacobian(model, state):
    """(3M, n) stacked Jacobian of all marker positions."""
    pm = pack(model)
    q = _as_q(model, state)
    if pm.mark_seg.shape[0] == 0:
        return np.zeros((0, model.ndof))
    J, _ = points_jacobian_packed(pm, q, pm.mark_seg, pm.mark_pos)
    return J


def contact_jacobian(model, state):
    """(3K, n) stacked Jacobian of the contact sphere centers."""
    pm = pack(model)
    q = _as_q(model, state)
    if pm.sph_seg.shape[0] == 0:
        return np.zeros((0, model.ndof))
    J, _ = points_jacobian_packed(pm, q, pm.sph_seg, pm.sph_pos)
    return J
