"""CSV schemas: exact round-trips, schema stamping, NaN encoding."""

import numpy as np
import pytest

from msk import csvio
from msk.integrator import ControlTrajectory
from msk.model import KineticState, Trajectory, pack


def test_trajectory_roundtrip_bitexact(tmp_path, dlink):
    rng = np.random.default_rng(0)
    times = np.arange(7) * 0.01
    q = rng.standard_normal((7, 2))
    qd = rng.standard_normal((7, 2))
    qdd = rng.standard_normal((7, 2))
    path = str(tmp_path / "t.csv")
    csvio.write_trajectory(path, dlink, Trajectory(times=times, q=q,
                                                   qdot=qd, qddot=qdd))
    with open(path) as fh:
        assert fh.readline() == "# schema_version=1\n"
        header = fh.readline().strip().split(",")
    assert header == ["time", "shoulder[0]", "elbow[0]", "shoulder[0]_dot",
                      "elbow[0]_dot", "shoulder[0]_ddot", "elbow[0]_ddot"]
    back = csvio.read_trajectory(path, dlink)
    assert np.array_equal(back.times, times)
    assert np.array_equal(back.q, q)
    assert np.array_equal(back.qdot, qd)
    assert np.array_equal(back.qddot, qdd)


def test_trajectory_without_accelerations(tmp_path, pend):
    times = np.arange(3) * 0.1
    q = np.ones((3, 1))
    path = str(tmp_path / "t.csv")
    csvio.write_trajectory(path, pend, Trajectory(times=times, q=q,
                                                  qdot=0.5 * q))
    back = csvio.read_trajectory(path, pend)
    assert back.qddot is None
    assert np.array_equal(back.q, q)


def test_trajectory_header_mismatch_rejected(tmp_path, pend, dlink):
    path = str(tmp_path / "t.csv")
    csvio.write_trajectory(path, pend,
                           Trajectory(times=np.zeros(1), q=np.zeros((1, 1)),
                                      qdot=np.zeros((1, 1))))
    with pytest.raises(ValueError):
        csvio.read_trajectory(path, dlink)


def test_missing_schema_line_rejected(tmp_path, pend):
    path = tmp_path / "x.csv"
    path.write_text("time,hinge[0],hinge[0]_dot\n0.0,0.0,0.0\n")
    with pytest.raises(ValueError):
        csvio.read_trajectory(str(path), pend)


def test_kinetics_roundtrip(tmp_path, biped):
    pm = pack(biped)
    rng = np.random.default_rng(1)
    times = np.arange(4) * 0.01
    kin = [KineticState(tau=rng.standard_normal(pm.nr),
                        lambda_total=rng.standard_normal(3))
           for _ in range(4)]
    path = str(tmp_path / "k.csv")
    csvio.write_kinetics(path, biped, times, kin)
    with open(path) as fh:
        fh.readline()
        header = fh.readline().strip().split(",")
    assert header == ["time", "tau_hip_r[0]", "tau_hip_l[0]", "lam_x",
                      "lam_y", "lam_z"]
    bt, bk = csvio.read_kinetics(path, biped)
    assert np.array_equal(bt, times)
    for a, b in zip(kin, bk):
        assert np.array_equal(a.tau, b.tau)
        assert np.array_equal(a.lambda_total, b.lambda_total)


def test_markers_nan_as_empty_cells(tmp_path):
    names = ["a", "b"]
    times = np.array([0.0, 0.1])
    pos = np.array([[[1.0, 2.0, 3.0], [np.nan, np.nan, np.nan]],
                    [[4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]])
    path = str(tmp_path / "m.csv")
    csvio.write_markers(path, names, times, pos)
    text = open(path).read().splitlines()
    assert text[2] == "0.0,1.0,2.0,3.0,,,"
    bn, bt, bp = csvio.read_markers(path)
    assert list(bn) == names
    assert np.array_equal(bt, times)
    assert np.isnan(bp[0, 1]).all()
    assert np.array_equal(bp[1], pos[1])


def test_controls_roundtrip(tmp_path, pend_muscle):
    times = np.array([0.0, 0.05, 0.1])
    act = np.array([[0.1, 0.9], [0.5, 0.2], [0.0, 1.0]])
    gen = np.array([[1.0], [0.0], [-2.0]])
    ctrl = ControlTrajectory(times=times, activations=act, generalized=gen,
                            mode="linear")
    path = str(tmp_path / "c.csv")
    csvio.write_controls(path, pend_muscle, ctrl)
    back = csvio.read_controls(path, pend_muscle)
    assert np.array_equal(back.times, times)
    assert np.array_equal(back.activations, act)
    assert np.array_equal(back.generalized, gen)


def test_float_repr_is_deterministic(tmp_path, pend):
    # write the same irrational-looking values twice: identical bytes
    times = np.array([0.0, 1.0 / 3.0])
    q = np.array([[np.pi], [np.e * 1e-17]])
    tr = Trajectory(times=times, q=q, qdot=np.sqrt(q))
    p1, p2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    csvio.write_trajectory(p1, pend, tr)
    csvio.write_trajectory(p2, pend, tr)
    assert open(p1, "rb").read() == open(p2, "rb").read()
    back = csvio.read_trajectory(p1, pend)
    assert np.array_equal(back.q, q)  # repr() round-trips exactly


def test_report_writer(tmp_path):
    path = str(tmp_path / "r.csv")
    csvio.write_report(path, ["time", "v"], [{"time": 0.0, "v": 1.5},
                                             {"time": 0.1, "v": -2.0}])
    lines = open(path).read().splitlines()
    assert lines[0] == "# schema_version=1"
    assert lines[1] == "time,v"
    assert lines[2] == "0.0,1.5"
