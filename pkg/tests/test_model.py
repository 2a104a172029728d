"""Model construction, validation, serialization, canonicalization."""

import numpy as np
import pytest

from msk.fixtures import double_link, full_body, pendulum, standing_biped
from msk.kinematics import forward_kinematics, marker_positions
from msk.model import (GeneralizedState, JointSpec, MarkerSpec, ModelError,
                       MuscleSpec, SegmentSpec, canonicalize_state,
                       load_model, make_model, pack, save_model, scale_model,
                       state_from_q, state_to_q)

Z = (0.0, 0.0, 1.0)


def _seg(name, mass=1.0):
    return SegmentSpec(name, mass, np.zeros(3), np.eye(3) * 0.01, np.zeros(3))


def test_fixture_shapes():
    pm = pack(pendulum())
    assert pm.n == 1 and not pm.root_free
    assert pm.dof_names == ("hinge[0]",)
    pm = pack(full_body())
    assert pm.root_free and pm.n == 45
    assert pm.dof_names[:6] == ("T_x", "T_y", "T_z", "R_x", "R_y", "R_z")
    assert pm.n_spheres == 6 and pm.n_muscles == 8


def test_validation_rejects_bad_models():
    with pytest.raises(ModelError):
        make_model([_seg("a"), _seg("a")], [])  # duplicate segment
    with pytest.raises(ModelError):
        make_model([_seg("a"), _seg("b")],
                   [JointSpec("j", "a", "nope", 1, [Z])])
    with pytest.raises(ModelError):
        make_model([SegmentSpec("a", -1.0, np.zeros(3), np.eye(3),
                                np.zeros(3)), _seg("b")],
                   [JointSpec("j", "a", "b", 1, [Z])])
    with pytest.raises(ModelError):
        make_model([_seg("a"), _seg("b")],
                   [JointSpec("j", "a", "b", 1, [(0.0, 0.0, 0.0)])])
    with pytest.raises(ModelError):
        make_model([_seg("a"), _seg("b")],
                   [JointSpec("j", "a", "b", 1, [Z])],
                   muscles=[MuscleSpec("m", 100.0, 0.1,
                                       {("nope", 0): 0.05})])
    with pytest.raises(ModelError):
        make_model([_seg("a"), _seg("b")],
                   [JointSpec("j", "a", "b", 1, [Z])],
                   markers=[MarkerSpec("mk", "nope", np.zeros(3))])


def test_cycle_detection():
    segs = [_seg("a"), _seg("b"), _seg("c")]
    joints = [JointSpec("j1", "a", "b", 1, [Z]),
              JointSpec("j2", "b", "c", 1, [Z]),
              JointSpec("j3", "c", "b", 1, [Z])]
    with pytest.raises(ModelError):
        make_model(segs, joints)


@pytest.mark.parametrize("builder", [pendulum, double_link, full_body,
                                     standing_biped])
def test_save_load_roundtrip(tmp_path, builder):
    m = builder()
    path = tmp_path / "m.json"
    save_model(m, str(path))
    m2 = load_model(str(path))
    pm, pm2 = pack(m), pack(m2)
    assert pm.dof_names == pm2.dof_names
    rng = np.random.default_rng(3)
    for _ in range(5):
        q = 0.3 * rng.standard_normal(pm.n)
        pr = forward_kinematics(m, q)
        pr2 = forward_kinematics(m2, q)
        assert np.array_equal(pr.origins, pr2.origins)
        assert np.array_equal(pr.rotations, pr2.rotations)


def test_state_q_roundtrip(body):
    pm = pack(body)
    rng = np.random.default_rng(11)
    q = 0.4 * rng.standard_normal(pm.n)
    qd = rng.standard_normal(pm.n)
    st = state_from_q(body, q, qd)
    assert isinstance(st, GeneralizedState)
    q2, qd2 = state_to_q(body, st)
    assert np.array_equal(q, q2) and np.array_equal(qd, qd2)


def test_canonicalize_preserves_pose_and_velocity(body):
    # push the root rotation past pi; the canonical state must describe the
    # same motion, checked through marker positions and velocities
    pm = pack(body)
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = 0.2 * rng.standard_normal(pm.n)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        q[3:6] = axis * rng.uniform(np.pi + 0.2, 3.0 * np.pi)
        qd = rng.standard_normal(pm.n)
        st = state_from_q(body, q, qd)
        cs = canonicalize_state(st)
        qc, qdc = state_to_q(body, cs)
        assert np.linalg.norm(qc[3:6]) <= np.pi + 1e-12
        h = 1e-6
        for s, (qq, vv) in (("orig", (q, qd)), ("canon", (qc, qdc))):
            pa = marker_positions(body, qq - 0.5 * h * vv)
            pb = marker_positions(body, qq + 0.5 * h * vv)
            if s == "orig":
                p_ref = marker_positions(body, qq)
                v_ref = (pb - pa) / h
            else:
                assert np.allclose(marker_positions(body, qq), p_ref,
                                   atol=1e-9)
                assert np.allclose((pb - pa) / h, v_ref, atol=1e-4)


def test_canonicalize_below_pi_is_identity(body):
    pm = pack(body)
    q = np.zeros(pm.n)
    q[3:6] = (0.3, -0.2, 0.4)
    st = state_from_q(body, q, np.zeros(pm.n))
    cs = canonicalize_state(st)
    qc, _ = state_to_q(body, cs)
    assert np.allclose(qc, q, atol=1e-15)


def test_scale_model_moves_markers():
    m = pendulum()
    sc = scale_model(m, {"bob": (1.5, 1.5, 1.5)})
    p = marker_positions(m, np.zeros(1))
    p2 = marker_positions(sc, np.zeros(1))
    assert np.allclose(p2, 1.5 * p, atol=1e-12)
    pm, pm2 = pack(m), pack(sc)
    assert np.allclose(pm2.mass, pm.mass)
    sc3 = scale_model(m, {"bob": (2.0, 2.0, 2.0)}, scale_mass=True)
    assert np.isclose(pack(sc3).mass[1], pm.mass[1] * 8.0)


def test_model_json_rejects_garbage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{\"segments\": []}")
    with pytest.raises(ModelError):
        load_model(str(p))
