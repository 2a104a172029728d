"""Marker IK: synthesize-and-recover oracles, noise floor, observability."""

import numpy as np
import pytest

from msk.ik import (IkError, MarkerFrame, check_observability,
                    differentiate_trajectory, solve_ik_frame,
                    solve_ik_sequence)
from msk.kinematics import marker_positions
from msk.model import pack


def test_recover_random_poses(body):
    pm = pack(body)
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = 0.25 * rng.standard_normal(pm.n)
        q[3:6] *= 0.5
        frame = MarkerFrame(positions=marker_positions(body, q))
        sol = solve_ik_frame(body, frame)
        assert sol.converged
        assert np.abs(sol.q - q).max() < 1e-6
        assert sol.residual < 1e-8


def test_recover_with_missing_markers(body):
    pm = pack(body)
    rng = np.random.default_rng(1)
    q = 0.2 * rng.standard_normal(pm.n)
    pos = marker_positions(body, q)
    pos[5] = np.nan  # hide one torso marker; plenty remain
    sol = solve_ik_frame(body, MarkerFrame(positions=pos))
    assert np.abs(sol.q - q).max() < 1e-6
    assert np.isnan(sol.marker_errors[5])
    assert np.nanmax(sol.marker_errors) < 1e-8


def test_noise_floor(body):
    # gaussian marker noise sigma should reappear as the fit residual
    pm = pack(body)
    rng = np.random.default_rng(2)
    sigma = 3e-3
    ratios = []
    for _ in range(10):
        q = 0.2 * rng.standard_normal(pm.n)
        pos = marker_positions(body, q)
        noisy = pos + sigma * rng.standard_normal(pos.shape)
        sol = solve_ik_frame(body, MarkerFrame(positions=noisy))
        ratios.append(sol.residual / sigma)
    mean = float(np.mean(ratios))
    assert 0.5 < mean < 1.5, mean


def test_observability_flags_hidden_subtree(body):
    pm = pack(body)
    w = np.ones(len(pm.marker_names))
    for i, name in enumerate(pm.marker_names):
        if name.startswith(("hand_d_r", "hand_s_r")):
            w[i] = 0.0
    with pytest.raises(IkError, match="wrist_r"):
        check_observability(body, w)
    with pytest.raises(IkError, match="root"):
        check_observability(body, np.zeros(len(pm.marker_names)))


def test_sequence_warm_start(dlink):
    times = np.linspace(0.0, 1.0, 51)
    qs = np.stack([0.9 * np.sin(2 * np.pi * times),
                   0.6 * np.cos(2 * np.pi * times) - 0.6], axis=1)
    frames = [MarkerFrame(positions=marker_positions(dlink, qs[k]))
              for k in range(51)]
    traj, sols = solve_ik_sequence(dlink, times, frames)
    assert np.abs(traj.q - qs).max() < 1e-7
    # warm start keeps iteration counts low after the first frame
    assert np.mean([s.iterations for s in sols[1:]]) < 8


def test_differentiate_trajectory_analytic(pend):
    dt = 0.005
    times = np.arange(0, 401) * dt
    q = 0.8 * np.sin(2 * np.pi * 1.0 * times)[:, None]
    qs, qd, qdd = differentiate_trajectory(pend, times, q, smooth=True)
    # the zero-phase filter has edge transients; judge the interior only
    w = 2 * np.pi
    inner = slice(100, 300)
    assert np.abs(qd[inner, 0]
                  - 0.8 * w * np.cos(w * times[inner])).max() < 0.01
    assert np.abs(qdd[inner, 0]
                  + 0.8 * w * w * np.sin(w * times[inner])).max() < 0.1


def test_differentiate_rejects_nonuniform(pend):
    times = np.array([0.0, 0.1, 0.3])
    with pytest.raises(ValueError):
        differentiate_trajectory(pend, times, np.zeros((3, 1)))
