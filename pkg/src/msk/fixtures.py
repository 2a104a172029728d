"""Built-in models used by the tests, benchmarks, and CLI --synthesize.

All dimensions are metric and roughly anthropometric where that matters.
"""

import numpy as np

from .model import (SegmentSpec, JointSpec, ContactSphereSpec, MuscleSpec,
                    ActuatorSpec, MarkerSpec, make_model)

X = (1.0, 0.0, 0.0)
Y = (0.0, 1.0, 0.0)
Z = (0.0, 0.0, 1.0)


def pendulum(with_muscle=False):
    """Single hinge about z, welded base, bob hanging along -y at q = 0."""
    m, l = 2.0, 0.5
    segments = [
        SegmentSpec("base", 0.0, np.zeros(3), np.zeros((3, 3)), np.zeros(3)),
        SegmentSpec("bob", m, (0.0, -l, 0.0), np.diag([0.02, 0.001, 0.02]),
                    np.zeros(3)),
    ]
    joints = [JointSpec("hinge", "base", "bob", 1, [Z],
                        limits=[(-2.5, 2.5)])]
    markers = [
        MarkerSpec("bob_tip", "bob", (0.0, -l, 0.0)),
        MarkerSpec("bob_mid", "bob", (0.0, -0.5 * l, 0.0)),
        MarkerSpec("bob_side", "bob", (0.05, -l, 0.0)),
    ]
    muscles = []
    if with_muscle:
        muscles = [
            MuscleSpec("flexor", f_max=200.0, optimal_fiber_length=0.12,
                       moment_arms={("hinge", 0): 0.05}),
            MuscleSpec("extensor", f_max=250.0, optimal_fiber_length=0.10,
                       moment_arms={("hinge", 0): -0.04}),
        ]
    actuators = [ActuatorSpec("hinge", [60.0])]
    return make_model(segments, joints, muscles=muscles, actuators=actuators,
                      markers=markers, root_free=False)


def double_link():
    """Planar two-link chain in the x-y plane, both hinges about z."""
    segments = [
        SegmentSpec("ground", 0.0, np.zeros(3), np.zeros((3, 3)),
                    np.zeros(3)),
        SegmentSpec("link1", 1.2, (0.25, 0.0, 0.0),
                    np.diag([0.001, 0.025, 0.025]), np.zeros(3)),
        SegmentSpec("link2", 0.8, (0.25, 0.0, 0.0),
                    np.diag([0.001, 0.017, 0.017]), (0.5, 0.0, 0.0)),
    ]
    joints = [
        JointSpec("shoulder", "ground", "link1", 1, [Z]),
        JointSpec("elbow", "link1", "link2", 1, [Z]),
    ]
    markers = [
        MarkerSpec("l1_mid", "link1", (0.25, 0.0, 0.0)),
        MarkerSpec("l1_end", "link1", (0.5, 0.0, 0.0)),
        MarkerSpec("l2_mid", "link2", (0.25, 0.02, 0.0)),
        MarkerSpec("l2_end", "link2", (0.5, 0.0, 0.0)),
    ]
    actuators = [ActuatorSpec("shoulder", [80.0]), ActuatorSpec("elbow",
                                                                [40.0])]
    return make_model(segments, joints, actuators=actuators, markers=markers,
                      root_free=False)


def _seg(name, mass, com, inertia_diag, offset):
    return SegmentSpec(name, mass, com, np.diag(inertia_diag), offset)


def full_body():
    """24-segment humanoid: free pelvis, 39 joint DoFs, feet with contact.

    Lateral axis is z (right positive), up is y, forward is x. Leg joints
    put flexion on dof 0 (about z) so sagittal gaits live in the first
    coordinate of each.
    """
    segments = [
        _seg("pelvis", 11.7, (-0.05, 0.0, 0.0), (0.08, 0.09, 0.07),
             (0.0, 0.0, 0.0)),
        _seg("torso", 26.0, (0.0, 0.18, 0.0), (1.0, 0.35, 1.1),
             (0.0, 0.09, 0.0)),
        _seg("neck", 1.0, (0.0, 0.05, 0.0), (0.002, 0.001, 0.002),
             (0.0, 0.32, 0.0)),
        _seg("head", 4.2, (0.0, 0.08, 0.0), (0.025, 0.018, 0.025),
             (0.0, 0.09, 0.0)),
    ]
    joints = [
        JointSpec("back", "pelvis", "torso", 3, np.eye(3)),
        JointSpec("neck_base", "torso", "neck", 3, np.eye(3)),
        JointSpec("atlas", "neck", "head", 1, [X]),
    ]
    for side, sz in (("r", 1.0), ("l", -1.0)):
        segments += [
            _seg("clav_%s" % side, 0.5, (0.0, 0.0, sz * 0.08),
                 (0.001, 0.001, 0.001), (0.01, 0.28, sz * 0.04)),
            _seg("humerus_%s" % side, 2.0, (0.0, -0.14, 0.0),
                 (0.012, 0.002, 0.012), (0.0, 0.0, sz * 0.14)),
            _seg("ulna_%s" % side, 0.8, (0.0, -0.12, 0.0),
                 (0.004, 0.001, 0.004), (0.0, -0.29, 0.0)),
            _seg("radius_%s" % side, 0.5, (0.0, -0.11, 0.0),
                 (0.002, 0.0005, 0.002), (0.0, -0.02, sz * 0.02)),
            _seg("hand_%s" % side, 0.5, (0.0, -0.07, 0.0),
                 (0.001, 0.0004, 0.001), (0.0, -0.23, 0.0)),
            _seg("femur_%s" % side, 9.0, (0.0, -0.17, 0.0),
                 (0.13, 0.03, 0.13), (-0.01, -0.07, sz * 0.09)),
            _seg("tibia_%s" % side, 3.7, (0.0, -0.19, 0.0),
                 (0.05, 0.006, 0.05), (0.0, -0.40, 0.0)),
            _seg("talus_%s" % side, 0.1, (0.0, 0.0, 0.0),
                 (1e-4, 1e-4, 1e-4), (0.0, -0.43, 0.0)),
            _seg("calcn_%s" % side, 1.0, (0.09, 0.01, 0.0),
                 (0.001, 0.004, 0.004), (0.0, -0.05, 0.0)),
            _seg("toes_%s" % side, 0.2, (0.03, 0.0, 0.0),
                 (1e-4, 5e-4, 5e-4), (0.18, -0.02, 0.0)),
        ]
        joints += [
            JointSpec("sternoclav_%s" % side, "torso", "clav_%s" % side, 2,
                      [X, Y]),
            JointSpec("shoulder_%s" % side, "clav_%s" % side,
                      "humerus_%s" % side, 3, [Z, X, Y]),
            JointSpec("elbow_%s" % side, "humerus_%s" % side,
                      "ulna_%s" % side, 1, [Z]),
            JointSpec("radioulnar_%s" % side, "ulna_%s" % side,
                      "radius_%s" % side, 1, [Y]),
            JointSpec("wrist_%s" % side, "radius_%s" % side,
                      "hand_%s" % side, 2, [Z, X]),
            JointSpec("hip_%s" % side, "pelvis", "femur_%s" % side, 3,
                      [Z, X, Y]),
            JointSpec("knee_%s" % side, "femur_%s" % side,
                      "tibia_%s" % side, 1, [Z]),
            JointSpec("ankle_%s" % side, "tibia_%s" % side,
                      "talus_%s" % side, 1, [Z]),
            JointSpec("subtalar_%s" % side, "talus_%s" % side,
                      "calcn_%s" % side, 1, [X]),
            JointSpec("mtp_%s" % side, "calcn_%s" % side,
                      "toes_%s" % side, 1, [Z]),
        ]

    # all six sphere bottoms sit at pelvis height minus exactly 1.0 m
    spheres = []
    for side in ("r", "l"):
        spheres += [
            ContactSphereSpec("calcn_%s" % side, (0.02, -0.02, 0.0), 0.03,
                              1e5, 2.0, 0.8, 1e-3),
            ContactSphereSpec("calcn_%s" % side, (0.12, -0.02, 0.0), 0.025,
                              1e5, 2.0, 0.8, 1e-3),
            ContactSphereSpec("toes_%s" % side, (0.05, -0.005, 0.0), 0.02,
                              1e5, 2.0, 0.8, 1e-3),
        ]

    markers = [
        MarkerSpec("asis_r", "pelvis", (0.08, 0.02, 0.12)),
        MarkerSpec("asis_l", "pelvis", (0.08, 0.02, -0.12)),
        MarkerSpec("psis_r", "pelvis", (-0.12, 0.03, 0.05)),
        MarkerSpec("psis_l", "pelvis", (-0.12, 0.03, -0.05)),
        MarkerSpec("sternum", "torso", (0.09, 0.2, 0.0)),
        MarkerSpec("c7", "torso", (-0.08, 0.3, 0.0)),
        MarkerSpec("t10", "torso", (-0.1, 0.12, 0.0)),
        MarkerSpec("neck_f", "neck", (0.04, 0.04, 0.0)),
        MarkerSpec("neck_b", "neck", (-0.04, 0.04, 0.0)),
        MarkerSpec("neck_s", "neck", (0.0, 0.05, 0.04)),
        MarkerSpec("head_f", "head", (0.09, 0.06, 0.0)),
        MarkerSpec("head_s", "head", (0.0, 0.08, 0.08)),
    ]
    for side, sz in (("r", 1.0), ("l", -1.0)):
        markers += [
            MarkerSpec("clav_m_%s" % side, "clav_%s" % side,
                       (0.02, 0.01, sz * 0.05)),
            MarkerSpec("clav_e_%s" % side, "clav_%s" % side,
                       (0.0, 0.0, sz * 0.12)),
            MarkerSpec("uarm_a_%s" % side, "humerus_%s" % side,
                       (0.03, -0.1, 0.0)),
            MarkerSpec("uarm_p_%s" % side, "humerus_%s" % side,
                       (-0.03, -0.16, 0.0)),
            MarkerSpec("uarm_l_%s" % side, "humerus_%s" % side,
                       (0.0, -0.22, sz * 0.03)),
            MarkerSpec("ulna_p_%s" % side, "ulna_%s" % side,
                       (-0.03, -0.01, 0.0)),
            MarkerSpec("ulna_d_%s" % side, "ulna_%s" % side,
                       (0.0, -0.2, 0.02)),
            MarkerSpec("radius_d_%s" % side, "radius_%s" % side,
                       (0.0, -0.2, sz * -0.02)),
            MarkerSpec("hand_d_%s" % side, "hand_%s" % side,
                       (0.0, -0.12, 0.0)),
            MarkerSpec("hand_s_%s" % side, "hand_%s" % side,
                       (0.02, -0.05, sz * 0.03)),
            MarkerSpec("thigh_a_%s" % side, "femur_%s" % side,
                       (0.05, -0.15, 0.0)),
            MarkerSpec("thigh_l_%s" % side, "femur_%s" % side,
                       (0.0, -0.25, sz * 0.05)),
            MarkerSpec("knee_m_%s" % side, "femur_%s" % side,
                       (0.0, -0.39, sz * -0.05)),
            MarkerSpec("shank_a_%s" % side, "tibia_%s" % side,
                       (0.04, -0.2, 0.0)),
            MarkerSpec("ankle_l_%s" % side, "tibia_%s" % side,
                       (0.0, -0.42, sz * 0.04)),
            MarkerSpec("heel_%s" % side, "calcn_%s" % side,
                       (-0.02, 0.02, 0.0)),
            MarkerSpec("foot_l_%s" % side, "calcn_%s" % side,
                       (0.1, 0.02, sz * 0.04)),
            MarkerSpec("foot_m_%s" % side, "calcn_%s" % side,
                       (0.1, 0.02, sz * -0.03)),
            MarkerSpec("toe_%s" % side, "toes_%s" % side,
                       (0.06, 0.01, 0.0)),
        ]

    muscles = []
    for side in ("r", "l"):
        hip = "hip_%s" % side
        knee = "knee_%s" % side
        ankle = "ankle_%s" % side
        muscles += [
            MuscleSpec("iliopsoas_%s" % side, 2000.0, 0.12,
                       {(hip, 0): 0.05}),
            MuscleSpec("glut_max_%s" % side, 2500.0, 0.15,
                       {(hip, 0): -0.06}),
            MuscleSpec("vasti_%s" % side, 3000.0, 0.09,
                       {(knee, 0): -0.04}),
            MuscleSpec("gastroc_%s" % side, 1800.0, 0.06,
                       {(knee, 0): 0.02, (ankle, 0): -0.05}),
        ]

    actuators = [ActuatorSpec(j.name, [200.0] * j.dof_count) for j in joints]
    return make_model(segments, joints, spheres, muscles, actuators, markers,
                      root_free=True)


def standing_biped():
    """Free pelvis on two single-DoF legs, four ground spheres.

    With the root at height 1.0 m all four sphere bottoms touch y = 0.
    Total weight is 50 kg * 9.81 = 490.5 N.
    """
    segments = [
        _seg("pelvis", 30.0, (0.0, 0.0, 0.0), (0.3, 0.35, 0.3),
             (0.0, 0.0, 0.0)),
        _seg("leg_r", 10.0, (0.0, -0.45, 0.0), (0.6, 0.02, 0.6),
             (0.0, -0.05, 0.12)),
        _seg("leg_l", 10.0, (0.0, -0.45, 0.0), (0.6, 0.02, 0.6),
             (0.0, -0.05, -0.12)),
    ]
    joints = [
        JointSpec("hip_r", "pelvis", "leg_r", 1, [Z], limits=[(-1.2, 1.2)]),
        JointSpec("hip_l", "pelvis", "leg_l", 1, [Z], limits=[(-1.2, 1.2)]),
    ]
    spheres = []
    for leg in ("leg_r", "leg_l"):
        spheres += [
            ContactSphereSpec(leg, (0.05, -0.92, 0.0), 0.03, 1e5, 2.0, 0.8,
                              1e-3),
            ContactSphereSpec(leg, (-0.05, -0.92, 0.0), 0.03, 1e5, 2.0, 0.8,
                              1e-3),
        ]
    markers = [
        MarkerSpec("pel_f", "pelvis", (0.1, 0.0, 0.0)),
        MarkerSpec("pel_b", "pelvis", (-0.1, 0.0, 0.0)),
        MarkerSpec("pel_r", "pelvis", (0.0, 0.05, 0.12)),
        MarkerSpec("pel_l", "pelvis", (0.0, 0.05, -0.12)),
        MarkerSpec("leg_r_m", "leg_r", (0.04, -0.5, 0.0)),
        MarkerSpec("leg_l_m", "leg_l", (0.04, -0.5, 0.0)),
    ]
    actuators = [ActuatorSpec("hip_r", [200.0]), ActuatorSpec("hip_l",
                                                              [200.0])]
    return make_model(segments, joints, spheres, actuators=actuators,
                      markers=markers, root_free=True)
