"""CSV readers/writers for trajectories, kinetics, markers, and reports.

Every file starts with a `# schema_version=1` comment followed by a header
row. Floats are written with repr (shortest round-trip form) so re-running
a command byte-reproduces its outputs.
"""

import csv

import numpy as np

from .model import KineticState, Trajectory, pack

SCHEMA_LINE = "# schema_version=1"


def _fmt(x):
    return repr(float(x))


def _open_rows(path):
    """Rows of a schema CSV: checks the version comment, returns header+data."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != SCHEMA_LINE:
            raise ValueError("%s: missing '%s' header" % (path, SCHEMA_LINE))
        reader = csv.reader(fh)
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError("%s: no header row" % path)
    return rows[0], rows[1:]


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA_LINE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def trajectory_columns(model, accelerations=False):
    names = list(pack(model).dof_names)
    cols = ["time"] + names + [n + "_dot" for n in names]
    if accelerations:
        cols += [n + "_ddot" for n in names]
    return cols


def write_trajectory(path, model, traj):
    """time, coordinates, velocities[, accelerations when recorded]."""
    has_acc = traj.qddot is not None
    header = trajectory_columns(model, accelerations=has_acc)
    rows = []
    for k in range(traj.times.shape[0]):
        row = [_fmt(traj.times[k])]
        row += [_fmt(v) for v in traj.q[k]]
        row += [_fmt(v) for v in traj.qdot[k]]
        if has_acc:
            row += [_fmt(v) for v in traj.qddot[k]]
        rows.append(row)
    _write_rows(path, header, rows)


def read_trajectory(path, model):
    header, data = _open_rows(path)
    n = pack(model).n
    want = trajectory_columns(model)
    if header[:1 + 2 * n] != want:
        raise ValueError("%s: header does not match the model's %d "
                         "coordinates" % (path, n))
    has_acc = len(header) == 1 + 3 * n
    times = np.array([float(r[0]) for r in data])
    vals = np.array([[float(v) for v in r[1:]] for r in data]) \
        if data else np.zeros((0, len(header) - 1))
    q = vals[:, :n]
    qdot = vals[:, n:2 * n]
    qddot = vals[:, 2 * n:3 * n] if has_acc else None
    return Trajectory(times=times, q=q, qdot=qdot, qddot=qddot)


def kinetics_columns(model):
    pm = pack(model)
    rot = [pm.dof_names[pm.base + r] for r in range(pm.nr)]
    return ["time"] + ["tau_" + n for n in rot] \
        + ["lam_x", "lam_y", "lam_z"]


def write_kinetics(path, model, times, kinetics):
    """time, rotational torques, aggregate contact force."""
    if len(times) != len(kinetics):
        raise ValueError("times and kinetics must have equal length")
    rows = []
    for t, ks in zip(times, kinetics):
        rows.append([_fmt(t)] + [_fmt(v) for v in ks.tau]
                    + [_fmt(v) for v in ks.lambda_total])
    _write_rows(path, kinetics_columns(model), rows)


def read_kinetics(path, model):
    header, data = _open_rows(path)
    want = kinetics_columns(model)
    if header != want:
        raise ValueError("%s: kinetics header mismatch" % path)
    nr = pack(model).nr
    times = np.array([float(r[0]) for r in data])
    kin = []
    for r in data:
        vals = [float(v) for v in r[1:]]
        kin.append(KineticState(tau=np.array(vals[:nr]),
                                lambda_total=np.array(vals[nr:nr + 3])))
    return times, kin


def marker_columns(names):
    cols = ["time"]
    for n in names:
        cols += ["%s_x" % n, "%s_y" % n, "%s_z" % n]
    return cols


def write_markers(path, names, times, positions):
    """positions: (T, M, 3); NaN entries become empty cells (missing)."""
    positions = np.asarray(positions, dtype=float)
    rows = []
    for k in range(len(times)):
        row = [_fmt(times[k])]
        for m in range(positions.shape[1]):
            p = positions[k, m]
            if np.any(np.isnan(p)):
                row += ["", "", ""]
            else:
                row += [_fmt(v) for v in p]
        rows.append(row)
    _write_rows(path, marker_columns(list(names)), rows)


def read_markers(path):
    """Returns (names, times, positions) with NaN for empty cells."""
    header, data = _open_rows(path)
    if not header or header[0] != "time" or (len(header) - 1) % 3 != 0:
        raise ValueError("%s: marker header must be time,<name>_x,..." % path)
    names = []
    for i in range(1, len(header), 3):
        if not header[i].endswith("_x"):
            raise ValueError("%s: bad marker column '%s'" % (path, header[i]))
        names.append(header[i][:-2])
    times = np.array([float(r[0]) for r in data])
    M = len(names)
    pos = np.full((len(data), M, 3), np.nan)
    for k, r in enumerate(data):
        for m in range(M):
            cell = r[1 + 3 * m:4 + 3 * m]
            if all(c.strip() != "" for c in cell):
                pos[k, m] = [float(c) for c in cell]
    return names, times, pos


def write_report(path, columns, rows):
    """Generic report table (roundtrip residuals, training curves)."""
    out = []
    for r in rows:
        out.append([_fmt(r[c]) if isinstance(r[c], (int, float, np.floating))
                    else str(r[c]) for c in columns])
    _write_rows(path, list(columns), out)


def controls_columns(model):
    pm = pack(model)
    cols = ["time"]
    cols += ["act_%s" % n for n in
             (m.name for m in model.muscles)]
    cols += ["gen_%s" % n for n in pm.dof_names]
    return cols


def write_controls(path, model, ctrl):
    """time, act_<muscle> columns, gen_<dof> columns (zeros when absent)."""
    pm = pack(model)
    T = ctrl.times.shape[0]
    act = ctrl.activations if ctrl.activations is not None \
        else np.zeros((T, pm.n_muscles))
    gen = ctrl.generalized if ctrl.generalized is not None \
        else np.zeros((T, pm.n))
    if ctrl.torques is not None:
        gen = gen.copy()
        for k in range(T):
            gen[k] = pm.apply_residual(gen[k].copy(), ctrl.torques[k])
    rows = []
    for k in range(T):
        rows.append([_fmt(ctrl.times[k])] + [_fmt(v) for v in act[k]]
                    + [_fmt(v) for v in gen[k]])
    _write_rows(path, controls_columns(model), rows)


def read_controls(path, model, mode="linear"):
    from .integrator import ControlTrajectory
    header, data = _open_rows(path)
    want = controls_columns(model)
    if header != want:
        raise ValueError("%s: controls header mismatch (want %s)"
                         % (path, ",".join(want)))
    pm = pack(model)
    nm = pm.n_muscles
    times = np.array([float(r[0]) for r in data])
    act = np.array([[float(v) for v in r[1:1 + nm]] for r in data]) \
        if nm else None
    gen = np.array([[float(v) for v in r[1 + nm:]] for r in data])
    return ControlTrajectory(times=times, activations=act, generalized=gen,
                             mode=mode)
