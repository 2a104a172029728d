"""msk command line: simulate, ik, id, ocp, roundtrip.

Each command reads/writes schema-stamped CSVs (see csvio) so pipelines are
diffable and re-runs byte-reproduce their outputs. Errors print one JSON
line on stderr; exit codes: 0 success, 1 numerical failure, 2 bad
input/validation. Set MSK_LOG=1 for progress notes on stderr.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import csvio
from .consistency import roundtrip_check
from .dynamics import inverse_dynamics
from .ik import IkError, MarkerFrame, differentiate_trajectory, \
    solve_ik_sequence
from .integrator import rollout
from .kinematics import marker_positions
from .model import ModelError, NumericalError, Trajectory, load_model, pack
from .ocp import OcpProblem, solve_ocp, extract_reference_kinetics


class CliError(Exception):
    """Validation or I/O problem: exit code 2."""


def _log(msg):
    if os.environ.get("MSK_LOG"):
        print("msk: %s" % msg, file=sys.stderr)


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) in (None, ""):
            raise CliError("--%s is required for this command" % n)


def _load_model(args):
    _need(args, "model")
    if not os.path.exists(args.model):
        raise CliError("model file not found: %s" % args.model)
    return load_model(args.model)


def _emit_gnuplot(csv_path, n_cols, title):
    """Companion gnuplot script plotting every value column against time."""
    gp = csv_path + ".gp"
    lines = ["set datafile separator ','",
             "set key autotitle columnhead",
             "set xlabel 'time [s]'",
             "set title '%s'" % title,
             "plot " + ", ".join("'%s' using 1:%d with lines"
                                 % (os.path.basename(csv_path), c)
                                 for c in range(2, n_cols + 1))]
    with open(gp, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _traj_with_acc(model, traj, smooth=False):
    """Ensure accelerations; differentiate when the CSV lacked them."""
    if traj.qddot is not None:
        return traj
    q, qdot, qddot = differentiate_trajectory(model, traj.times, traj.q,
                                              smooth=smooth)
    return Trajectory(times=traj.times, q=q, qdot=qdot, qddot=qddot)


def cmd_simulate(args):
    model = _load_model(args)
    _need(args, "out")
    controls = None
    if args.input:
        controls = csvio.read_controls(args.input, model)
    n = pack(model).n
    x0 = (np.zeros(n), np.zeros(n))
    _log("rollout dt=%g horizon=%g method=%s" % (args.dt, args.horizon,
                                                 args.method))
    traj = rollout(model, x0, controls, dt=args.dt, horizon=args.horizon,
                   method=args.method, contact=args.contact,
                   record_accelerations=True)
    if traj.error is not None:
        raise NumericalError("simulation failed: %s" % traj.error)
    csvio.write_trajectory(args.out, model, traj)
    if args.emit_gnuplot:
        _emit_gnuplot(args.out, 1 + n, "simulated trajectory")
    _log("wrote %s (%d frames)" % (args.out, traj.times.shape[0]))
    return 0


def cmd_ik(args):
    model = _load_model(args)
    _need(args, "input", "out")
    pm = pack(model)
    if args.synthesize:
        traj = csvio.read_trajectory(args.input, model)
        pos = np.zeros((traj.times.shape[0], len(pm.marker_names), 3))
        for k in range(traj.times.shape[0]):
            pos[k] = marker_positions(model, traj.q[k])
        if args.noise > 0.0:
            rng = np.random.default_rng(args.seed)
            pos = pos + args.noise * rng.standard_normal(pos.shape)
        csvio.write_markers(args.out, pm.marker_names, traj.times, pos)
        _log("synthesized %d marker frames" % pos.shape[0])
        return 0
    names, times, pos = csvio.read_markers(args.input)
    if list(names) != list(pm.marker_names):
        raise CliError("marker columns do not match the model's markers")
    frames = [MarkerFrame(positions=pos[k]) for k in range(pos.shape[0])]
    traj, sols = solve_ik_sequence(model, times, frames)
    csvio.write_trajectory(args.out, model, traj)
    if args.emit_gnuplot:
        _emit_gnuplot(args.out, 1 + pm.n, "ik states")
    worst = max(s.residual for s in sols) if sols else 0.0
    _log("ik done, worst frame residual %.3g m" % worst)
    return 0


def cmd_id(args):
    model = _load_model(args)
    _need(args, "input", "out")
    traj = _traj_with_acc(model, csvio.read_trajectory(args.input, model))
    kin = []
    for k in range(traj.times.shape[0]):
        idr = inverse_dynamics(model, traj.q[k], traj.qdot[k],
                               traj.qddot[k], contact=args.contact)
        kin.append(idr.kinetic)
    csvio.write_kinetics(args.out, model, traj.times, kin)
    if args.emit_gnuplot:
        _emit_gnuplot(args.out, len(csvio.kinetics_columns(model)),
                      "inverse dynamics")
    _log("wrote %s (%d frames)" % (args.out, len(kin)))
    return 0


def cmd_ocp(args):
    _need(args, "input", "out")
    if not os.path.exists(args.input):
        raise CliError("problem file not found: %s" % args.input)
    with open(args.input) as fh:
        try:
            prob_doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise CliError("problem file is not valid JSON: %s" % e)
    for key in ("model", "reference"):
        if key not in prob_doc:
            raise CliError("problem file needs a '%s' entry" % key)
    base = os.path.dirname(os.path.abspath(args.input))

    def _resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    model_path = _resolve(prob_doc["model"])
    if not os.path.exists(model_path):
        raise CliError("model file not found: %s" % model_path)
    model = load_model(model_path)
    ref_path = _resolve(prob_doc["reference"])
    if not os.path.exists(ref_path):
        raise CliError("reference file not found: %s" % ref_path)
    ref = _traj_with_acc(model, csvio.read_trajectory(ref_path, model))

    weights = prob_doc.get("weights")
    if args.weights:
        weights = [float(v) for v in args.weights.split(",")]
    grid = args.grid if args.grid else prob_doc.get("grid")
    times, q, qd, qdd = ref.times, ref.q, ref.qdot, ref.qddot
    if grid:
        grid = int(grid)
        if grid < 2:
            raise CliError("--grid must be at least 2")
        tg = np.linspace(times[0], times[-1], grid)
        q = np.stack([np.interp(tg, times, q[:, i])
                      for i in range(q.shape[1])], axis=1)
        qd = np.stack([np.interp(tg, times, qd[:, i])
                       for i in range(qd.shape[1])], axis=1)
        qdd = np.stack([np.interp(tg, times, qdd[:, i])
                        for i in range(qdd.shape[1])], axis=1)
        times = tg
    kw = {"contact": prob_doc.get("contact", "auto")}
    if weights:
        kw["weights"] = tuple(weights)
    problem = OcpProblem(model, times, q, qd, qdd, **kw)
    _log("solving ocp: %d knots, %d coords" % (times.shape[0], q.shape[1]))
    sol = solve_ocp(problem)
    if sol.status != "converged":
        raise NumericalError("ocp did not converge (status %s, defects %g)"
                             % (sol.status, sol.defect_inf))
    prefix = args.out[:-4] if args.out.endswith(".csv") else args.out
    states = Trajectory(times=sol.times, q=sol.q, qdot=sol.qdot)
    csvio.write_trajectory(prefix + "_states.csv", model, states)
    kin = extract_reference_kinetics(model, sol)
    csvio.write_kinetics(prefix + "_kinetics.csv", model, sol.times, kin)
    if args.emit_gnuplot:
        _emit_gnuplot(prefix + "_states.csv", 1 + pack(model).n,
                      "ocp states")
        _emit_gnuplot(prefix + "_kinetics.csv",
                      len(csvio.kinetics_columns(model)), "ocp kinetics")
    _log("ocp %s, defects %.3g, objective %.6g"
         % (sol.status, sol.defect_inf, sol.objective))
    return 0


def cmd_roundtrip(args):
    model = _load_model(args)
    _need(args, "input", "out")
    traj = _traj_with_acc(model, csvio.read_trajectory(args.input, model))
    rep = roundtrip_check(model, traj, contact=args.contact,
                          method=args.method)
    cols = ["time", "q_residual", "joint_residual", "tau_residual",
            "lambda_residual"]
    rows = []
    for k in range(rep.times.shape[0]):
        rows.append({"time": rep.times[k], "q_residual": rep.q_residual[k],
                     "joint_residual": rep.joint_residual[k],
                     "tau_residual": rep.tau_residual[k],
                     "lambda_residual": rep.lambda_residual[k]})
    csvio.write_report(args.out, cols, rows)
    if args.emit_gnuplot:
        _emit_gnuplot(args.out, len(cols), "roundtrip residuals")
    if rep.divergence_time is not None:
        _log("rollout diverged at t=%.6g; partial report written"
             % rep.divergence_time)
    _log("max q residual %.3g rad" % rep.q_residual.max(initial=0.0))
    return 0


def _add_common(p):
    p.add_argument("--model", type=str, help="model JSON path")
    p.add_argument("--input", type=str, help="input file for the command")
    p.add_argument("--out", type=str, help="output file (or prefix)")
    p.add_argument("--contact", type=str, default="auto",
                   choices=["auto", "none"], help="contact handling")
    p.add_argument("--emit-gnuplot", action="store_true",
                   help="write a .gp plot script next to each CSV")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="msk", description="Musculoskeletal dynamics toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate the model forward")
    _add_common(p)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--method", type=str, default="rk4",
                   choices=["rk4", "rk45", "euler"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ik", help="fit states to marker trajectories")
    _add_common(p)
    p.add_argument("--synthesize", action="store_true",
                   help="input is a states CSV; write synthetic markers")
    p.add_argument("--noise", type=float, default=0.0,
                   help="marker noise sigma for --synthesize [m]")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ik)

    p = sub.add_parser("id", help="inverse dynamics along a trajectory")
    _add_common(p)
    p.set_defaults(func=cmd_id)

    p = sub.add_parser("ocp", help="solve a tracking optimal control problem")
    _add_common(p)
    p.add_argument("--weights", type=str,
                   help="w1,w2,w3,w4 override for the objective")
    p.add_argument("--grid", type=int, help="resample reference to N knots")
    p.set_defaults(func=cmd_ocp)

    p = sub.add_parser("roundtrip", help="inverse-forward consistency check")
    _add_common(p)
    p.add_argument("--method", type=str, default="rk4",
                   choices=["rk4", "rk45", "euler"])
    p.set_defaults(func=cmd_roundtrip)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ModelError, ValueError, OSError) as e:
        print(json.dumps({"error": str(e), "exit_code": 2}), file=sys.stderr)
        return 2
    except (NumericalError, IkError) as e:
        print(json.dumps({"error": str(e), "exit_code": 1}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
