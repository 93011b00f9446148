"""Closed-loop runtime: scheduling, quantization, rollouts, metrics."""

import math

import numpy as np
import pytest

from navworld.autodiff import ShapeError
from navworld.geometry import Pose
from navworld.runtime import (
    FORWARD_DEADBAND,
    PSNR_CAP,
    TURN_DEADBAND,
    RolloutResult,
    SfsSchedule,
    format_speed_report,
    nav_metrics,
    psnr,
    quantize_action,
    rollout,
    rollout_random,
    speed_report,
)
from navworld.trainer import ModelBundle

from conftest import micro_model_cfg


@pytest.fixture(scope="module")
def bundle():
    return ModelBundle.build(micro_model_cfg(resolution=16), seed=0)


# ---------------------------------------------------------------- schedule

def test_sfs_schedule_activation_and_counts():
    every = SfsSchedule(1)
    assert all(every.is_active(s) for s in range(10))
    assert every.expected_calls(7) == 7
    sparse = SfsSchedule(10)
    active = [s for s in range(25) if sparse.is_active(s)]
    assert active == [0, 10, 20]
    assert sparse.expected_calls(25) == 3
    assert sparse.expected_calls(30) == 3
    assert sparse.expected_calls(31) == 4
    with pytest.raises(ValueError):
        SfsSchedule(0)


# ---------------------------------------------------------------- quantize

def test_quantize_action_rule_table():
    def row(x, y, theta, logit):
        return np.array([x, y, math.cos(theta), math.sin(theta), logit])

    # turning dominates when |theta| exceeds the deadband
    assert quantize_action(row(1, 0, math.radians(10), 5.0))[0] == "turn_left"
    assert quantize_action(row(1, 0, math.radians(-10), 5.0))[0] == "turn_right"
    # below the deadband, displacement decides
    assert quantize_action(row(0.3, 0.0, math.radians(5), 5.0))[0] == "forward"
    # small displacement + confident arrive -> stop
    a, p = quantize_action(row(0.01, 0.01, 0.0, 3.0))
    assert a == "stop" and p == pytest.approx(1 / (1 + math.exp(-3.0)))
    # small displacement + unconfident arrive -> keep moving
    assert quantize_action(row(0.01, 0.01, 0.0, -3.0))[0] == "forward"
    # zero-logit boundary is not a stop
    assert quantize_action(row(0.0, 0.0, 0.0, 0.0))[0] == "forward"
    # degenerate (cos, sin) = (0, 0) treated as theta = 0
    assert quantize_action(np.array([0.3, 0.0, 0.0, 0.0, 0.0]))[0] == "forward"
    # deadbands are half the simulator step sizes
    assert TURN_DEADBAND == pytest.approx(math.radians(7.5))
    assert FORWARD_DEADBAND == pytest.approx(0.125)


# ---------------------------------------------------------------- rollouts

def test_rollout_former_deterministic_no_generator(bundle, episodes):
    r1 = rollout(bundle, episodes[0], variant="former", seed=3, step_cap=6)
    r2 = rollout(bundle, episodes[0], variant="former", seed=3, step_cap=6)
    assert r1.actions == r2.actions
    assert [p.position for p in r1.poses] == [p.position for p in r2.poses]
    assert r1.generator_calls == 0 and r1.predicted_frames == []
    assert len(r1.poses) <= len(r1.actions) + 1
    assert r1.num_steps <= 6


@pytest.mark.parametrize("k", [1, 3])
def test_rollout_diffusion_call_counter(bundle, episodes, k):
    res = rollout(bundle, episodes[1], SfsSchedule(k), variant="diffusion",
                  seed=4, step_cap=7)
    assert res.generator_calls == math.ceil(res.num_steps / k)
    assert [s for s, _ in res.predicted_frames] == \
        [s for s in range(res.num_steps) if s % k == 0]
    for _, frames in res.predicted_frames:
        assert frames.shape == (bundle.cfg.horizon, 16, 16, 3)
    off = rollout(bundle, episodes[1], SfsSchedule(k), variant="diffusion",
                  use_generator=False, seed=4, step_cap=7)
    assert off.generator_calls == 0 and off.predicted_frames == []


def test_rollout_rejects_unknown_variant(bundle, episodes):
    with pytest.raises(ValueError):
        rollout(bundle, episodes[0], variant="oracle")


def test_rollout_random_deterministic(episodes):
    r1 = rollout_random(episodes[0], seed=9, step_cap=30)
    r2 = rollout_random(episodes[0], seed=9, step_cap=30)
    assert r1.actions == r2.actions
    assert r1.stop_reason in ("stop", "step_cap", "collision_cap")


# ---------------------------------------------------------------- metrics

def line_poses(end_xy, total_len, n=8):
    """Straight approach of the given length ending exactly at end_xy."""
    ex, ey = end_xy
    return [Pose.from_yaw(ex - total_len + i * total_len / n, ey, 0.0)
            for i in range(n + 1)]


def fake_result(poses, stop_reason):
    return RolloutResult(poses, ["forward"] * (len(poses) - 1), stop_reason,
                         0, [], [], [], 0, 0.0)


def test_nav_metrics_hand_computed(episodes):
    ep = episodes[0]
    l = ep.shortest_length
    # A: stops at the goal after walking twice the shortest length -> SPL 1/2
    a = fake_result(line_poses(ep.goal_xy, 2 * l), "stop")
    # B: reaches the goal but never issues stop -> oracle success only
    b = fake_result(line_poses(ep.goal_xy, 2 * l), "step_cap")
    m = nav_metrics([a, b], [ep, ep])
    assert m.sr == pytest.approx(0.5)
    assert m.os == pytest.approx(1.0)
    assert m.spl == pytest.approx(0.25)
    assert m.ne == pytest.approx(0.0, abs=1e-12)
    assert m.episodes == 2
    assert m.to_dict()["SR"] == m.sr

    # success requires the stop to land inside the radius
    gx, gy = ep.goal_xy
    near = fake_result(line_poses((gx + 0.05, gy), l), "stop")
    assert nav_metrics([near], [ep]).sr == 1.0          # default arrive radius
    tight = nav_metrics([near], [ep], radius=0.01)
    assert tight.sr == 0.0 and tight.os == 0.0

    with pytest.raises(ValueError):
        nav_metrics([], [])
    with pytest.raises(ValueError):
        nav_metrics([a], [ep, ep])


def test_psnr_identities_and_oracle():
    rng = np.random.default_rng(0)
    gt = rng.random((4, 4, 3))
    assert psnr(gt, gt) == PSNR_CAP
    pred = np.clip(gt + 0.1, 0, 1)
    mse = np.mean((pred - gt) ** 2)
    assert psnr(pred, gt) == pytest.approx(10 * math.log10(1 / mse), abs=1e-9)
    other = rng.random((4, 4, 3))
    mse = np.mean((other - gt) ** 2)
    assert psnr(other, gt) == pytest.approx(10 * math.log10(1 / mse), abs=1e-9)
    with pytest.raises(ShapeError):
        psnr(gt, gt[:2])


def test_speed_report_bookkeeping(bundle, episodes):
    report = speed_report(bundle, episodes[:1], ks=(1, 3), step_cap=5)
    assert [r["k"] for r in report["rows"]] == [1, 3]
    for r in report["rows"]:
        assert r["generator_calls"] == r["expected_calls"]
        assert r["mean_wall"] > 0.0
        assert 0.0 <= r["SR"] <= 1.0
    text = format_speed_report(report)
    assert "gen calls" in text and len(text.splitlines()) == 3
