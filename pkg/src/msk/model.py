"""Skeleton model definition, validation, file I/O, scaling, and packing.

A model is a rooted tree of rigid segments connected by joints with 0..3
rotational DoFs each. The root segment normally floats (free translation T
and exponential-coordinates rotation R); ``root_free=False`` welds it to the
world for bench fixtures like a hinged pendulum. Generalized coordinates are
stacked as [T(3), R(3), joint angles...] when the root is free, else just
the joint angles.

All heavy math runs on a PackedModel: plain arrays with scaling baked in,
shaped for the kernels in msk._core.
"""

import json
import weakref
from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    """Model parse or validation failure."""


class NumericalError(RuntimeError):
    """Numerical failure inside dynamics or integration."""


def _ro(a, dtype=np.float64):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


DEFAULT_CURVES = {
    "fl_width": 0.45,
    "fv_k_con": 0.25,
    "fv_k_ecc": 0.08,
    "fv_plateau": 1.4,
    "pass_shape": 4.0,
    "pass_norm": 0.6,
}

_CURVE_ORDER = ("fl_width", "fv_k_con", "fv_k_ecc", "fv_plateau",
                "pass_shape", "pass_norm")


@dataclass(frozen=True, eq=False)
class SegmentSpec:
    name: str
    mass: float
    com: np.ndarray                  # (3,) m, local frame
    inertia: np.ndarray              # (3,3) kg m^2 about the COM, local frame
    local_offset: np.ndarray         # (3,) m, inboard joint position in parent
    scale: np.ndarray = None         # (3,) dimensionless

    def __post_init__(self):
        object.__setattr__(self, "com", _ro(self.com))
        object.__setattr__(self, "inertia", _ro(self.inertia))
        object.__setattr__(self, "local_offset", _ro(self.local_offset))
        s = np.ones(3) if self.scale is None else self.scale
        object.__setattr__(self, "scale", _ro(s))


@dataclass(frozen=True, eq=False)
class JointSpec:
    name: str
    parent: str
    child: str
    dof_count: int
    axes: np.ndarray                 # (D,3) unit axes, child-local
    fixed_orientation: np.ndarray = None   # (3,) rad, exp-map constant
    limits: np.ndarray = None        # (D,2) rad

    def __post_init__(self):
        object.__setattr__(self, "axes",
                           _ro(np.asarray(self.axes).reshape(-1, 3)))
        fo = np.zeros(3) if self.fixed_orientation is None \
            else self.fixed_orientation
        object.__setattr__(self, "fixed_orientation", _ro(fo))
        if self.limits is None:
            lim = np.tile([-np.pi, np.pi], (self.dof_count, 1))
        else:
            lim = np.asarray(self.limits, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "limits", _ro(lim))


@dataclass(frozen=True, eq=False)
class ContactSphereSpec:
    segment: str
    local_position: np.ndarray       # (3,) m
    radius: float
    k_n: float                       # N / m^1.5
    c_n: float                       # s / m
    mu: float
    eps: float                       # m/s, tangential smoothing

    def __post_init__(self):
        object.__setattr__(self, "local_position", _ro(self.local_position))


@dataclass(frozen=True, eq=False)
class MuscleSpec:
    name: str
    f_max: float
    optimal_fiber_length: float
    moment_arms: dict                # {(joint, dof): m}
    q_ref: dict = field(default_factory=dict)   # {(joint, dof): rad}
    v_max: float = None              # m/s; default 10 * optimal_fiber_length
    curves: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.v_max is None:
            object.__setattr__(self, "v_max",
                               10.0 * float(self.optimal_fiber_length))
        merged = dict(DEFAULT_CURVES)
        merged.update(self.curves)
        object.__setattr__(self, "curves", merged)


@dataclass(frozen=True, eq=False)
class ActuatorSpec:
    joint: str
    bounds: np.ndarray               # (D,) N m, per-DoF torque bound

    def __post_init__(self):
        object.__setattr__(self, "bounds",
                           _ro(np.atleast_1d(np.asarray(self.bounds,
                                                        dtype=float))))


@dataclass(frozen=True, eq=False)
class MarkerSpec:
    name: str
    segment: str
    local_position: np.ndarray       # (3,) m

    def __post_init__(self):
        object.__setattr__(self, "local_position", _ro(self.local_position))


@dataclass(frozen=True, eq=False)
class SkeletonModel:
    segments: tuple                  # topological order, root first
    joints: tuple
    contact_spheres: tuple = ()
    muscles: tuple = ()
    actuators: tuple = ()
    markers: tuple = ()
    gravity: np.ndarray = None       # (3,) m/s^2
    root_free: bool = True

    def __post_init__(self):
        g = np.array([0.0, -9.81, 0.0]) if self.gravity is None \
            else self.gravity
        object.__setattr__(self, "gravity", _ro(g))
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "contact_spheres",
                           tuple(self.contact_spheres))
        object.__setattr__(self, "muscles", tuple(self.muscles))
        object.__setattr__(self, "actuators", tuple(self.actuators))
        object.__setattr__(self, "markers", tuple(self.markers))

    # convenience lookups (computed, not stored: the dataclass stays frozen)
    @property
    def root(self):
        return self.segments[0]

    def segment_index(self, name):
        for i, s in enumerate(self.segments):
            if s.name == name:
                return i
        raise ModelError("unknown segment '%s'" % name)

    def joint_for_child(self, child):
        for j in self.joints:
            if j.child == child:
                return j
        return None

    @property
    def n_rot(self):
        return sum(j.dof_count for j in self.joints)

    @property
    def ndof(self):
        return self.n_rot + (6 if self.root_free else 0)


@dataclass(frozen=True, eq=False)
class GeneralizedState:
    """Eq.-style generalized coordinates: root pose plus joint angles."""
    T: np.ndarray                    # (3,) m
    R: np.ndarray                    # (3,) rad, exponential coordinates
    q_r: np.ndarray                  # (n_rot,) rad
    qdot: np.ndarray                 # (ndof,) units/s

    def __post_init__(self):
        object.__setattr__(self, "T", _ro(self.T))
        object.__setattr__(self, "R", _ro(self.R))
        object.__setattr__(self, "q_r", _ro(np.atleast_1d(self.q_r)))
        object.__setattr__(self, "qdot", _ro(np.atleast_1d(self.qdot)))

    @classmethod
    def zeros(cls, model):
        return cls(np.zeros(3), np.zeros(3), np.zeros(model.n_rot),
                   np.zeros(model.ndof))


@dataclass(frozen=True, eq=False)
class KineticState:
    """Joint torques and ground reaction forces for one frame."""
    tau: np.ndarray                  # (n_rot,) N m, rotational DoFs only
    lambda_total: np.ndarray         # (3,) N
    f_normal: np.ndarray = None      # (K,3) N per sphere
    f_tangential: np.ndarray = None  # (K,3) N per sphere
    cop: np.ndarray = None           # optional (3,) m

    def __post_init__(self):
        object.__setattr__(self, "tau", _ro(np.atleast_1d(self.tau)))
        object.__setattr__(self, "lambda_total", _ro(self.lambda_total))
        fn = np.zeros((0, 3)) if self.f_normal is None else self.f_normal
        ft = np.zeros((0, 3)) if self.f_tangential is None \
            else self.f_tangential
        object.__setattr__(self, "f_normal", _ro(np.asarray(fn).reshape(-1, 3)))
        object.__setattr__(self, "f_tangential",
                           _ro(np.asarray(ft).reshape(-1, 3)))
        if self.cop is not None:
            object.__setattr__(self, "cop", _ro(self.cop))

    @property
    def lambda_spheres(self):
        return [(self.f_normal[k], self.f_tangential[k])
                for k in range(self.f_normal.shape[0])]

    def validate(self, mu=None):
        s = self.f_normal.sum(axis=0) + self.f_tangential.sum(axis=0)
        if np.max(np.abs(s - self.lambda_total), initial=0.0) > 1e-9:
            raise ModelError("lambda_total does not equal the sphere sum")
        if mu is not None:
            fn = np.linalg.norm(self.f_normal, axis=1)
            ft = np.linalg.norm(self.f_tangential, axis=1)
            if np.any(ft > np.asarray(mu) * fn + 1e-9):
                raise ModelError("tangential force outside the friction cone")


@dataclass(eq=False)
class Trajectory:
    """Time-indexed states (arrays, one row per sample)."""
    times: np.ndarray                # (T,)
    q: np.ndarray                    # (T, ndof)
    qdot: np.ndarray                 # (T, ndof)
    qddot: np.ndarray = None         # optional (T, ndof)
    kinetics: list = None            # optional [KineticState]
    error: str = None                # set when a rollout was truncated

    def __len__(self):
        return self.times.shape[0]

    def state(self, model, i):
        return state_from_q(model, self.q[i], self.qdot[i])


# ---------------------------------------------------------------------------
# state packing

def state_to_q(model, state):
    """Flatten a GeneralizedState into kernel vectors (q, qdot)."""
    nr = model.n_rot
    if state.q_r.shape[0] != nr:
        raise ModelError("state has %d joint coordinates, model needs %d"
                         % (state.q_r.shape[0], nr))
    if state.qdot.shape[0] != model.ndof:
        raise ModelError("state qdot has length %d, model needs %d"
                         % (state.qdot.shape[0], model.ndof))
    if model.root_free:
        q = np.concatenate([state.T, state.R, state.q_r])
    else:
        q = np.array(state.q_r, dtype=float)
    return q, np.array(state.qdot, dtype=float)


def state_from_q(model, q, qdot):
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    if q.shape[0] != model.ndof or qdot.shape[0] != model.ndof:
        raise ModelError("generalized vector length %d, model needs %d"
                         % (q.shape[0], model.ndof))
    if model.root_free:
        return GeneralizedState(q[0:3], q[3:6], q[6:], qdot)
    return GeneralizedState(np.zeros(3), np.zeros(3), q, qdot)


def _jl(w):
    t2 = float(w @ w)
    W = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    if t2 < 1e-6:
        B = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        C = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        t = np.sqrt(t2)
        B = (1.0 - np.cos(t)) / t2
        C = (t - np.sin(t)) / (t2 * t)
    return np.eye(3) + B * W + C * (W @ W)


def canonicalize_state(state):
    """Reduce the root rotation below pi, preserving angular velocity.

    The exponential-coordinate chart changes, so the R-rate block is mapped
    through the left Jacobians of the old and new charts.
    """
    R = np.array(state.R, dtype=float)
    theta = np.linalg.norm(R)
    if theta < np.pi:
        return state
    qdot = np.array(state.qdot, dtype=float)
    rdot = qdot[3:6].copy()
    while theta >= np.pi:
        omega = _jl(R) @ rdot
        R = R * (1.0 - 2.0 * np.pi / theta)
        rdot = np.linalg.solve(_jl(R), omega)
        theta = np.linalg.norm(R)
    qdot[3:6] = rdot
    return GeneralizedState(state.T, R, state.q_r, qdot)


# ---------------------------------------------------------------------------
# validation

def _check(cond, msg):
    if not cond:
        raise ModelError(msg)


def validate_model(model):
    """Raise ModelError naming the first violated invariant."""
    segs = model.segments
    _check(len(segs) >= 1, "model has no segments")
    names = [s.name for s in segs]
    for n in names:
        _check(names.count(n) == 1, "duplicate segment name '%s'" % n)
    idx = {n: i for i, n in enumerate(names)}

    for s in segs:
        _check(np.isfinite(s.mass) and s.mass >= 0.0,
               "segment '%s': mass must be finite and >= 0" % s.name)
        _check(s.com.shape == (3,), "segment '%s': com must be a 3-vector"
               % s.name)
        _check(s.inertia.shape == (3, 3),
               "segment '%s': inertia must be 3x3" % s.name)
        _check(np.allclose(s.inertia, s.inertia.T, atol=1e-9),
               "segment '%s': inertia must be symmetric" % s.name)
        _check(np.linalg.eigvalsh(np.asarray(s.inertia)).min() >= -1e-9,
               "segment '%s': inertia must be positive semidefinite" % s.name)
        _check(s.local_offset.shape == (3,),
               "segment '%s': local_offset must be a 3-vector" % s.name)
        _check(np.all(s.scale > 0.0),
               "segment '%s': scale components must be > 0" % s.name)

    jnames = [j.name for j in model.joints]
    for n in jnames:
        _check(jnames.count(n) == 1, "duplicate joint name '%s'" % n)
    children = [j.child for j in model.joints]
    for c in children:
        _check(children.count(c) == 1,
               "segment '%s' has more than one inboard joint" % c)
    for j in model.joints:
        _check(j.parent in idx, "joint '%s': unknown parent segment '%s'"
               % (j.name, j.parent))
        _check(j.child in idx, "joint '%s': unknown child segment '%s'"
               % (j.name, j.child))
        _check(j.parent != j.child, "joint '%s': parent equals child" % j.name)
        _check(0 <= j.dof_count <= 3,
               "joint '%s': D_i exceeds 3" % j.name if j.dof_count > 3
               else "joint '%s': dof_count must be in 0..3" % j.name)
        _check(j.axes.shape == (j.dof_count, 3),
               "joint '%s': expected %d axes" % (j.name, j.dof_count))
        for k in range(j.dof_count):
            _check(abs(np.linalg.norm(j.axes[k]) - 1.0) <= 1e-9,
                   "joint '%s': axis %d is not unit-norm" % (j.name, k))
        if j.dof_count > 1:
            _check(np.linalg.matrix_rank(j.axes, tol=1e-9) == j.dof_count,
                   "joint '%s': axes are linearly dependent" % j.name)
        _check(j.limits.shape == (j.dof_count, 2),
               "joint '%s': limits shape mismatch" % j.name)
        for k in range(j.dof_count):
            _check(j.limits[k, 0] <= j.limits[k, 1],
                   "joint '%s': limit min > max at dof %d" % (j.name, k))

    # tree rooted at segments[0]
    roots = [n for n in names if n not in children]
    _check(len(roots) == 1,
           "model must have exactly one root segment, found %s" % roots)
    _check(segs[0].name == roots[0], "segments must be ordered root-first")
    parent_of = {j.child: j.parent for j in model.joints}
    for i, s in enumerate(segs[1:], start=1):
        _check(s.name in parent_of, "segment '%s' is disconnected" % s.name)
        _check(idx[parent_of[s.name]] < i,
               "segments are not in topological order near '%s'" % s.name)

    _check(model.gravity.shape == (3,) and np.all(np.isfinite(model.gravity)),
           "gravity must be a finite 3-vector")
    _check(model.ndof >= 1, "model has no degrees of freedom")

    dof_lookup = {}
    for j in model.joints:
        for k in range(j.dof_count):
            dof_lookup[(j.name, k)] = True

    for c in model.contact_spheres:
        _check(c.segment in idx, "contact sphere: unknown segment '%s'"
               % c.segment)
        _check(c.radius > 0.0, "contact sphere on '%s': radius must be > 0"
               % c.segment)
        _check(c.k_n > 0.0, "contact sphere on '%s': k_n must be > 0"
               % c.segment)
        _check(c.c_n >= 0.0, "contact sphere on '%s': c_n must be >= 0"
               % c.segment)
        _check(c.mu >= 0.0, "contact sphere on '%s': mu must be >= 0"
               % c.segment)
        _check(c.eps > 0.0, "contact sphere on '%s': eps must be > 0"
               % c.segment)

    for m in model.muscles:
        _check(m.f_max > 0.0, "muscle '%s': f_max must be > 0" % m.name)
        _check(m.optimal_fiber_length > 0.0,
               "muscle '%s': optimal_fiber_length must be > 0" % m.name)
        _check(m.v_max > 0.0, "muscle '%s': v_max must be > 0" % m.name)
        _check(len(m.moment_arms) > 0,
               "muscle '%s': needs at least one moment arm" % m.name)
        for key in list(m.moment_arms) + list(m.q_ref):
            _check(tuple(key) in dof_lookup,
                   "muscle '%s': unknown joint dof %s" % (m.name, (key,)))

    jmap = {j.name: j for j in model.joints}
    for a in model.actuators:
        _check(a.joint in jmap, "actuator: unknown joint '%s'" % a.joint)
        _check(a.bounds.shape[0] == jmap[a.joint].dof_count,
               "actuator on '%s': needs %d bounds"
               % (a.joint, jmap[a.joint].dof_count))
        _check(np.all(np.isfinite(a.bounds)) and np.all(a.bounds >= 0.0),
               "actuator on '%s': bounds must be finite and >= 0" % a.joint)

    for mk in model.markers:
        _check(mk.segment in idx, "marker '%s': unknown segment '%s'"
               % (mk.name, mk.segment))
    mnames = [mk.name for mk in model.markers]
    for n in mnames:
        _check(mnames.count(n) == 1, "duplicate marker name '%s'" % n)

    # IK observability: segments driven by a D-DoF joint need >= D markers
    # in their subtree (only checked when the model carries markers at all)
    if model.markers:
        sub_count = {n: 0 for n in names}
        for mk in model.markers:
            s = mk.segment
            while s is not None:
                sub_count[s] += 1
                s = parent_of.get(s)
        for j in model.joints:
            _check(sub_count[j.child] >= j.dof_count,
                   "joint '%s': subtree of '%s' carries %d markers, needs "
                   ">= %d for IK" % (j.name, j.child, sub_count[j.child],
                                     j.dof_count))
    return model


def make_model(segments, joints, contact_spheres=(), muscles=(),
               actuators=(), markers=(), gravity=None, root_free=True):
    """Topologically order the segments, validate, and freeze a model."""
    segments = list(segments)
    children = {j.child for j in joints}
    roots = [s for s in segments if s.name not in children]
    if len(roots) != 1:
        raise ModelError("model must have exactly one root segment, found %s"
                         % [s.name for s in roots])
    by_parent = {}
    jmap = {j.child: j for j in joints}
    for s in segments:
        j = jmap.get(s.name)
        if j is not None:
            by_parent.setdefault(j.parent, []).append(s)
    ordered = [roots[0]]
    stack = list(reversed(by_parent.get(roots[0].name, [])))
    while stack:
        s = stack.pop()
        ordered.append(s)
        stack.extend(reversed(by_parent.get(s.name, [])))
    if len(ordered) != len(segments):
        missing = {s.name for s in segments} - {s.name for s in ordered}
        raise ModelError("segments disconnected from the root: %s"
                         % sorted(missing))
    model = SkeletonModel(segments=tuple(ordered), joints=tuple(joints),
                          contact_spheres=tuple(contact_spheres),
                          muscles=tuple(muscles), actuators=tuple(actuators),
                          markers=tuple(markers), gravity=gravity,
                          root_free=root_free)
    return validate_model(model)


# ---------------------------------------------------------------------------
# file I/O

def _vec(x, n, what):
    a = np.asarray(x, dtype=float)
    if a.shape != (n,):
        raise ModelError("%s must be a %d-vector" % (what, n))
    return a


def model_from_dict(doc):
    try:
        segs = []
        for d in doc.get("segments", []):
            segs.append(SegmentSpec(
                name=str(d["name"]), mass=float(d["mass"]),
                com=_vec(d["com"], 3, "com"),
                inertia=np.asarray(d["inertia"], dtype=float),
                local_offset=_vec(d["local_offset"], 3, "local_offset"),
                scale=_vec(d["scale"], 3, "scale") if "scale" in d else None))
        joints = []
        for d in doc.get("joints", []):
            joints.append(JointSpec(
                name=str(d["name"]), parent=str(d["parent"]),
                child=str(d["child"]), dof_count=int(d["dof_count"]),
                axes=np.asarray(d.get("axes", []), dtype=float),
                fixed_orientation=(_vec(d["fixed_orientation"], 3,
                                        "fixed_orientation")
                                   if "fixed_orientation" in d else None),
                limits=(np.asarray(d["limits"], dtype=float)
                        if "limits" in d else None)))
        spheres = []
        for d in doc.get("contact_spheres", []):
            spheres.append(ContactSphereSpec(
                segment=str(d["segment"]),
                local_position=_vec(d["local_position"], 3, "local_position"),
                radius=float(d["radius"]), k_n=float(d["k_n"]),
                c_n=float(d["c_n"]), mu=float(d["mu"]), eps=float(d["eps"])))
        muscles = []
        for d in doc.get("muscles", []):
            arms = {(str(e["joint"]), int(e["dof"])): float(e["value"])
                    for e in d.get("moment_arms", [])}
            qref = {(str(e["joint"]), int(e["dof"])): float(e["value"])
                    for e in d.get("q_ref", [])}
            muscles.append(MuscleSpec(
                name=str(d["name"]), f_max=float(d["f_max"]),
                optimal_fiber_length=float(d["optimal_fiber_length"]),
                moment_arms=arms, q_ref=qref,
                v_max=float(d["v_max"]) if "v_max" in d else None,
                curves=dict(d.get("curves", {}))))
        actuators = []
        for d in doc.get("actuators", []):
            actuators.append(ActuatorSpec(joint=str(d["joint"]),
                                          bounds=np.asarray(d["bounds"],
                                                            dtype=float)))
        markers = []
        for d in doc.get("markers", []):
            markers.append(MarkerSpec(
                name=str(d["name"]), segment=str(d["segment"]),
                local_position=_vec(d["local_position"], 3,
                                    "local_position")))
        grav = doc.get("gravity")
        if grav is not None:
            grav = (np.array([0.0, -float(grav), 0.0])
                    if np.isscalar(grav) else _vec(grav, 3, "gravity"))
        root_free = bool(doc.get("root_free", True))
    except KeyError as e:
        raise ModelError("missing required model field %s" % e) from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ModelError):
            raise
        raise ModelError("malformed model field: %s" % e) from e
    return make_model(segs, joints, spheres, muscles, actuators, markers,
                      gravity=grav, root_free=root_free)


def model_to_dict(model):
    doc = {
        "gravity": model.gravity.tolist(),
        "root_free": bool(model.root_free),
        "segments": [{
            "name": s.name, "mass": s.mass, "com": s.com.tolist(),
            "inertia": s.inertia.tolist(),
            "local_offset": s.local_offset.tolist(),
            "scale": s.scale.tolist(),
        } for s in model.segments],
        "joints": [{
            "name": j.name, "parent": j.parent, "child": j.child,
            "dof_count": int(j.dof_count), "axes": j.axes.tolist(),
            "fixed_orientation": j.fixed_orientation.tolist(),
            "limits": j.limits.tolist(),
        } for j in model.joints],
        "contact_spheres": [{
            "segment": c.segment,
            "local_position": c.local_position.tolist(),
            "radius": c.radius, "k_n": c.k_n, "c_n": c.c_n, "mu": c.mu,
            "eps": c.eps,
        } for c in model.contact_spheres],
        "muscles": [{
            "name": m.name, "f_max": m.f_max,
            "optimal_fiber_length": m.optimal_fiber_length,
            "moment_arms": [{"joint": j, "dof": k, "value": v}
                            for (j, k), v in sorted(m.moment_arms.items())],
            "q_ref": [{"joint": j, "dof": k, "value": v}
                      for (j, k), v in sorted(m.q_ref.items())],
            "v_max": m.v_max,
            "curves": dict(m.curves),
        } for m in model.muscles],
        "actuators": [{"joint": a.joint, "bounds": a.bounds.tolist()}
                      for a in model.actuators],
        "markers": [{
            "name": mk.name, "segment": mk.segment,
            "local_position": mk.local_position.tolist(),
        } for mk in model.markers],
    }
    return doc


def load_model(path):
    """Parse a model file (JSON syntax), validate, return the model."""
    try:
        with open(path, "r") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ModelError("cannot read model file '%s': %s" % (path, e)) from e
    except json.JSONDecodeError as e:
        raise ModelError("model file '%s' is not valid JSON: %s"
                         % (path, e)) from e
    if not isinstance(doc, dict):
        raise ModelError("model file '%s' must hold a JSON object" % path)
    return model_from_dict(doc)


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def scale_model(model, scales, scale_mass=False):
    """New model with per-segment scale vectors multiplied in.

    scales: {segment name: 3-vector}. Scaling is geometric (offsets, local
    points); with scale_mass=True the mass also picks up the volume factor
    s_x s_y s_z (inertia is left alone either way).
    """
    names = {s.name for s in model.segments}
    for n in scales:
        if n not in names:
            raise ModelError("unknown segment '%s'" % n)
        if not np.all(np.asarray(scales[n], dtype=float) > 0.0):
            raise ModelError("segment '%s': scale components must be > 0" % n)
    new_segments = []
    for s in model.segments:
        if s.name in scales:
            f = np.asarray(scales[s.name], dtype=float)
            mass = s.mass * float(np.prod(f)) if scale_mass else s.mass
            new_segments.append(SegmentSpec(
                name=s.name, mass=mass, com=s.com, inertia=s.inertia,
                local_offset=s.local_offset, scale=s.scale * f))
        else:
            new_segments.append(s)
    return make_model(new_segments, model.joints, model.contact_spheres,
                      model.muscles, model.actuators, model.markers,
                      gravity=model.gravity, root_free=model.root_free)


# ---------------------------------------------------------------------------
# packing

@dataclass(eq=False)
class PackedModel:
    """Kernel-ready arrays with topological order and scaling baked in."""
    model: SkeletonModel
    ns: int
    n: int                          # total generalized DoFs
    nr: int                         # rotational DoFs
    base: int                       # 6 if the root floats else 0
    parents: np.ndarray
    offsets: np.ndarray             # scaled local offsets (ns,3)
    orients: np.ndarray             # (ns,3) inboard fixed_orientation
    dof_start: np.ndarray
    dof_num: np.ndarray
    axes: np.ndarray                # (ns,3,3)
    mass: np.ndarray
    com: np.ndarray                 # scaled (ns,3)
    inertia: np.ndarray             # (ns,3,3)
    gravity: np.ndarray
    root_free: int
    sph_seg: np.ndarray
    sph_pos: np.ndarray             # scaled (K,3)
    sph_rad: np.ndarray
    sph_kn: np.ndarray
    sph_cn: np.ndarray
    sph_mu: np.ndarray
    sph_eps: np.ndarray
    mark_seg: np.ndarray
    mark_pos: np.ndarray            # scaled (M,3)
    marker_names: tuple
    msc_r: np.ndarray               # (m, nr)
    msc_lopt: np.ndarray
    msc_fmax: np.ndarray
    msc_vmax: np.ndarray
    msc_qref: np.ndarray            # (m, nr)
    msc_curve: np.ndarray           # (m, 6)
    act_rdof: np.ndarray            # (na,) rotational dof index per channel
    act_bound: np.ndarray           # (na,)
    dof_names: tuple                # length n
    dof_limits: np.ndarray          # (nr, 2)
    rdof_of: dict                   # {(joint name, k): rotational index}

    @property
    def kin(self):
        return (self.parents, self.offsets, self.orients, self.dof_start,
                self.dof_num, self.axes, self.root_free)

    @property
    def iner(self):
        return (self.mass, self.com, self.inertia)

    @property
    def sph(self):
        return (self.sph_seg, self.sph_pos, self.sph_rad, self.sph_kn,
                self.sph_cn, self.sph_mu, self.sph_eps)

    @property
    def msc(self):
        return (self.msc_r, self.msc_lopt, self.msc_fmax, self.msc_vmax,
                self.msc_qref, self.msc_curve)

    @property
    def n_muscles(self):
        return self.msc_r.shape[0]

    @property
    def n_act(self):
        return self.act_rdof.shape[0]

    @property
    def n_spheres(self):
        return self.sph_seg.shape[0]

    def apply_residual(self, tau_full, residual):
        """Add residual actuator channel torques into a full tau vector."""
        residual = np.atleast_1d(np.asarray(residual))
        if residual.shape[0] != self.n_act:
            raise ModelError("expected %d residual torques, got %d"
                             % (self.n_act, residual.shape[0]))
        for c in range(self.n_act):
            tau_full[self.base + self.act_rdof[c]] = \
                tau_full[self.base + self.act_rdof[c]] + residual[c]
        return tau_full


_packed_cache = weakref.WeakKeyDictionary()


def pack(model):
    """Packed (cached) arrays for a validated model."""
    hit = _packed_cache.get(model)
    if hit is not None:
        return hit
    ns = len(model.segments)
    idx = {s.name: i for i, s in enumerate(model.segments)}
    parents = np.full(ns, -1, dtype=np.int64)
    offsets = np.zeros((ns, 3))
    orients = np.zeros((ns, 3))
    dof_start = np.zeros(ns, dtype=np.int64)
    dof_num = np.zeros(ns, dtype=np.int64)
    axes = np.zeros((ns, 3, 3))
    mass = np.zeros(ns)
    com = np.zeros((ns, 3))
    inertia = np.zeros((ns, 3, 3))
    jmap = {j.child: j for j in model.joints}
    dof_names = []
    dof_limits = []
    rdof_of = {}
    base = 6 if model.root_free else 0
    if model.root_free:
        dof_names = ["T_x", "T_y", "T_z", "R_x", "R_y", "R_z"]
    run = 0
    for i, s in enumerate(model.segments):
        mass[i] = s.mass
        com[i] = s.com * s.scale
        inertia[i] = s.inertia
        offsets[i] = s.local_offset * s.scale
        j = jmap.get(s.name)
        if i == 0:
            parents[i] = -1
            dof_start[i] = 0
            dof_num[i] = 0
        else:
            parents[i] = idx[j.parent]
            orients[i] = j.fixed_orientation
            dof_start[i] = run
            dof_num[i] = j.dof_count
            for k in range(j.dof_count):
                axes[i, k] = j.axes[k]
                rdof_of[(j.name, k)] = run
                dof_names.append("%s[%d]" % (j.name, k))
                dof_limits.append(j.limits[k])
                run += 1
    nr = run
    n = base + nr

    K = len(model.contact_spheres)
    sph_seg = np.zeros(K, dtype=np.int64)
    sph_pos = np.zeros((K, 3))
    sph_rad = np.zeros(K)
    sph_kn = np.zeros(K)
    sph_cn = np.zeros(K)
    sph_mu = np.zeros(K)
    sph_eps = np.zeros(K)
    for k, c in enumerate(model.contact_spheres):
        i = idx[c.segment]
        sph_seg[k] = i
        sph_pos[k] = c.local_position * model.segments[i].scale
        sph_rad[k] = c.radius
        sph_kn[k] = c.k_n
        sph_cn[k] = c.c_n
        sph_mu[k] = c.mu
        sph_eps[k] = c.eps

    M = len(model.markers)
    mark_seg = np.zeros(M, dtype=np.int64)
    mark_pos = np.zeros((M, 3))
    for k, mk in enumerate(model.markers):
        i = idx[mk.segment]
        mark_seg[k] = i
        mark_pos[k] = mk.local_position * model.segments[i].scale

    nm = len(model.muscles)
    msc_r = np.zeros((nm, nr))
    msc_lopt = np.zeros(nm)
    msc_fmax = np.zeros(nm)
    msc_vmax = np.zeros(nm)
    msc_qref = np.zeros((nm, nr))
    msc_curve = np.zeros((nm, 6))
    for k, m in enumerate(model.muscles):
        msc_lopt[k] = m.optimal_fiber_length
        msc_fmax[k] = m.f_max
        msc_vmax[k] = m.v_max
        for key, v in m.moment_arms.items():
            msc_r[k, rdof_of[tuple(key)]] = v
        for key, v in m.q_ref.items():
            msc_qref[k, rdof_of[tuple(key)]] = v
        msc_curve[k] = [m.curves[c] for c in _CURVE_ORDER]

    chans = []
    for a in model.actuators:
        for k in range(a.bounds.shape[0]):
            chans.append((rdof_of[(a.joint, k)], a.bounds[k]))
    act_rdof = np.array([c[0] for c in chans], dtype=np.int64)
    act_bound = np.array([c[1] for c in chans], dtype=float)

    pm = PackedModel(
        model=model, ns=ns, n=n, nr=nr, base=base, parents=parents,
        offsets=offsets, orients=orients, dof_start=dof_start,
        dof_num=dof_num, axes=axes, mass=mass, com=com, inertia=inertia,
        gravity=np.array(model.gravity, dtype=float),
        root_free=1 if model.root_free else 0,
        sph_seg=sph_seg, sph_pos=sph_pos, sph_rad=sph_rad, sph_kn=sph_kn,
        sph_cn=sph_cn, sph_mu=sph_mu, sph_eps=sph_eps,
        mark_seg=mark_seg, mark_pos=mark_pos,
        marker_names=tuple(mk.name for mk in model.markers),
        msc_r=msc_r, msc_lopt=msc_lopt, msc_fmax=msc_fmax, msc_vmax=msc_vmax,
        msc_qref=msc_qref, msc_curve=msc_curve,
        act_rdof=act_rdof, act_bound=act_bound,
        dof_names=tuple(dof_names),
        dof_limits=(np.asarray(dof_limits, dtype=float).reshape(nr, 2)
                    if nr else np.zeros((0, 2))),
        rdof_of=rdof_of)
    for a in (pm.parents, pm.offsets, pm.orients, pm.dof_start, pm.dof_num,
              pm.axes, pm.mass, pm.com, pm.inertia, pm.gravity, pm.sph_seg,
              pm.sph_pos, pm.sph_rad, pm.sph_kn, pm.sph_cn, pm.sph_mu,
              pm.sph_eps, pm.mark_seg, pm.mark_pos, pm.msc_r, pm.msc_lopt,
              pm.msc_fmax, pm.msc_vmax, pm.msc_qref, pm.msc_curve,
              pm.act_rdof, pm.act_bound, pm.dof_limits):
        a.setflags(write=False)
    _packed_cache[model] = pm
    return pm
