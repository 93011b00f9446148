"""Closed-loop evaluation: scheduled inference, rollouts, and metrics.

Sparse foresight scheduling: the video generator is invoked only at decision
steps {0, k, 2k, ...}; between those, the diffusion policy runs with its
fusion taps gated off.  The Action Former variant never invokes the
generator.  The continuous first predicted action step is quantized onto the
simulator's discrete action set (turn if |theta| > half a turn step, else
forward if the displacement is over half a forward step, else stop when the
arrive probability clears 0.5).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError
from .config import ModelConfig
from .sim.episodes import Episode
from .sim.render import render
from .sim.tokenizer import tokenize
from .sim.worldmap import geodesic_distance, step as sim_step
from .policy import sample_actions, sample_joint
from .trainer import ModelBundle

STEP_CAP = 100
COLLISION_CAP = 20
PSNR_CAP = 99.0
TURN_DEADBAND = math.radians(7.5)   # half the 15-degree turn step
FORWARD_DEADBAND = 0.125            # half the 0.25-unit forward step


@dataclass
class SfsSchedule:
    """Generator activation pattern: active exactly at steps {0, k, 2k, ...}."""

    k: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("schedule interval k must be >= 1")

    def is_active(self, step: int) -> bool:
        return step % self.k == 0

    def expected_calls(self, total_steps: int) -> int:
        return math.ceil(total_steps / self.k)


@dataclass
class RolloutResult:
    poses: list                    # executed trajectory, length T+1
    actions: list                  # discrete actions, length T
    stop_reason: str               # "stop" | "step_cap" | "collision_cap"
    generator_calls: int
    predicted: list                # per-step predicted (N, 5) rows
    predicted_frames: list         # (step, (N, V, V, 3)) at generator-active steps
    arrive_probs: list
    collisions: int
    wall_time: float
    step_times: list = field(default_factory=list)

    @property
    def num_steps(self) -> int:
        return len(self.actions)


def quantize_action(row: np.ndarray) -> tuple[str, float]:
    """First predicted row -> (discrete action, arrive probability)."""
    x, y, c, s, logit = (float(v) for v in row)
    theta = math.atan2(s, c) if (abs(c) > 1e-12 or abs(s) > 1e-12) else 0.0
    arrive_p = 1.0 / (1.0 + math.exp(-logit))
    if abs(theta) > TURN_DEADBAND:
        return ("turn_left" if theta > 0 else "turn_right"), arrive_p
    if math.hypot(x, y) > FORWARD_DEADBAND:
        return "forward", arrive_p
    if arrive_p > 0.5:
        return "stop", arrive_p
    return "forward", arrive_p


def rollout(
    bundle: ModelBundle,
    episode: Episode,
    schedule: SfsSchedule | None = None,
    variant: str = "former",
    use_generator: bool = True,
    seed: int = 0,
    step_cap: int = STEP_CAP,
    collision_cap: int = COLLISION_CAP,
) -> RolloutResult:
    """Closed-loop receding-horizon episode execution."""
    if variant not in ("former", "diffusion"):
        raise ValueError(f"unknown variant {variant!r}")
    cfg = bundle.cfg
    schedule = schedule or SfsSchedule()
    rng = np.random.default_rng(seed)
    tokens = np.asarray([tokenize(episode.instruction, max_len=cfg.max_instruction_len)],
                        dtype=np.intp)
    world = episode.world
    pose = episode.start
    poses = [pose]
    front_log: list[np.ndarray] = []
    actions, predicted, arrive_probs, step_times, pred_frames = [], [], [], [], []
    gen_calls = 0
    collisions = 0
    stop_reason = "step_cap"
    t0 = time.time()
    for s in range(step_cap):
        ts = time.time()
        obs = render(world, pose, cfg.resolution)
        front_log.append(obs.front)
        history = np.stack(
            [front_log[max(0, j)] for j in range(s - cfg.history_len, s)]
        )[None]
        current = np.stack([obs.left, obs.front, obs.right])[None]
        C = bundle.planner(tokens, history, current)

        if variant == "former":
            rows = bundle.former(C).data[0]
        elif use_generator and schedule.is_active(s):
            gen_calls += 1
            rows, frames = sample_joint(
                bundle.generator, bundle.policy, history, current, C,
                cfg.sample_steps, rng,
            )
            pred_frames.append((s, frames[0]))
            rows = rows[0]
        else:
            rows = sample_actions(bundle.policy, C, cfg.sample_steps, rng)[0]

        action, arrive_p = quantize_action(rows[0])
        predicted.append(rows)
        arrive_probs.append(arrive_p)
        actions.append(action)
        step_times.append(time.time() - ts)
        if action == "stop":
            stop_reason = "stop"
            break
        pose, hit = sim_step(world, pose, action)
        poses.append(pose)
        collisions += hit
        if collisions >= collision_cap:
            stop_reason = "collision_cap"
            break
    return RolloutResult(
        poses, actions, stop_reason, gen_calls, predicted, pred_frames,
        arrive_probs, collisions, time.time() - t0, step_times,
    )


def rollout_random(
    episode: Episode,
    seed: int = 0,
    step_cap: int = STEP_CAP,
    collision_cap: int = COLLISION_CAP,
) -> RolloutResult:
    """Uniform-random policy over the discrete action set (baseline)."""
    rng = np.random.default_rng(seed)
    pose = episode.start
    poses = [pose]
    actions = []
    collisions = 0
    stop_reason = "step_cap"
    t0 = time.time()
    for _ in range(step_cap):
        action = ("forward", "turn_left", "turn_right", "stop")[int(rng.integers(4))]
        actions.append(action)
        if action == "stop":
            stop_reason = "stop"
            break
        pose, hit = sim_step(episode.world, pose, action)
        poses.append(pose)
        collisions += hit
        if collisions >= collision_cap:
            stop_reason = "collision_cap"
            break
    return RolloutResult(poses, actions, stop_reason, 0, [], [], [], collisions,
                         time.time() - t0)


@dataclass
class NavMetrics:
    sr: float
    os: float
    spl: float
    ne: float
    episodes: int

    def to_dict(self) -> dict:
        return {"SR": self.sr, "OS": self.os, "SPL": self.spl,
                "NE": self.ne, "episodes": self.episodes}


def _path_length(poses) -> float:
    return float(sum(
        math.hypot(b.position[0] - a.position[0], b.position[1] - a.position[1])
        for a, b in zip(poses, poses[1:])
    ))


def nav_metrics(results: list[RolloutResult], episodes: list[Episode],
                radius: float | None = None) -> NavMetrics:
    """Aggregate SR / OS / SPL / NE over rollout results."""
    if len(results) == 0 or len(results) != len(episodes):
        raise ValueError("nav_metrics needs matching, non-empty result/episode lists")
    sr = os_ = spl = ne = 0.0
    for res, ep in zip(results, episodes):
        r = ep.config.arrive_threshold if radius is None else radius
        gx, gy = ep.goal_xy
        dists = [math.hypot(p.position[0] - gx, p.position[1] - gy) for p in res.poses]
        success = 1.0 if (res.stop_reason == "stop" and dists[-1] <= r) else 0.0
        oracle = 1.0 if min(dists) <= r else 0.0
        sr += success
        os_ += oracle
        l = ep.shortest_length
        p = _path_length(res.poses)
        spl += success * l / max(p, l) if l > 0 else success
        fx, fy = res.poses[-1].position[0], res.poses[-1].position[1]
        ne += geodesic_distance(ep.world, (fx, fy), ep.goal_cell)
    n = len(results)
    return NavMetrics(sr / n, os_ / n, spl / n, ne / n, n)


def psnr(pred: np.ndarray, gt: np.ndarray, cap: float = PSNR_CAP) -> float:
    """Peak signal-to-noise ratio for frames in [0, 1]."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"psnr: shape mismatch {pred.shape} vs {gt.shape}")
    mse = float(np.mean((pred - gt) ** 2))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * math.log10(1.0 / mse))


def speed_report(
    bundle: ModelBundle,
    episodes: list[Episode],
    ks=(1, 5, 10),
    seed: int = 0,
    step_cap: int = STEP_CAP,
) -> dict:
    """Wall time / SR / generator-call table for the diffusion variant at
    several schedule intervals."""
    rows = []
    for k in ks:
        sched = SfsSchedule(k)
        results = [
            rollout(bundle, ep, sched, variant="diffusion", seed=seed + i,
                    step_cap=step_cap)
            for i, ep in enumerate(episodes)
        ]
        m = nav_metrics(results, episodes)
        calls = sum(r.generator_calls for r in results)
        expected = sum(sched.expected_calls(r.num_steps) for r in results)
        rows.append({
            "k": k,
            "mean_wall": float(np.mean([r.wall_time for r in results])),
            "SR": m.sr,
            "generator_calls": calls,
            "expected_calls": expected,
        })
    return {"rows": rows}


def format_speed_report(report: dict) -> str:
    lines = [f"{'k':>4} {'wall(s)':>10} {'SR':>6} {'gen calls':>10} {'expected':>9}"]
    for r in report["rows"]:
        lines.append(
            f"{r['k']:>4} {r['mean_wall']:>10.3f} {r['SR']:>6.2f} "
            f"{r['generator_calls']:>10} {r['expected_calls']:>9}"
        )
    return "\n".join(lines)
