"""Instruction-labeled navigation episodes with shortest-path expert trajectories.

An episode is deterministic in (seed, config): map, start, goal, instruction,
expert trajectory, and rendered observations all derive from one seeded rng.
Observations are rendered lazily and cached (or served from an attached
frame store, see store.py).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import ActionStep, Pose, to_local_frame, wrap_angle
from . import tokenizer
from .render import Observation, render
from .worldmap import (
    FORWARD_STEP,
    TURN_STEP,
    SimError,
    UnreachableGoal,
    WorldMap,
    generate_map,
    shortest_path,
    step,
)


@dataclass
class SimConfig:
    map_size: int = 12
    cell_size: float = 0.5
    n_landmarks: int = 3
    wall_density: float = 0.10
    resolution: int = 32
    arrive_threshold: float = 1.0
    history_len: int = 4  # k past front views fed to the planner
    horizon: int = 5      # N predicted action steps / future frames
    min_goal_dist: float = 1.5
    max_expert_steps: int = 90

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @staticmethod
    def from_dict(d: dict) -> "SimConfig":
        return SimConfig(**d)


@dataclass
class Episode:
    seed: int
    config: SimConfig
    world: WorldMap
    instruction: str
    tokens: list[int]
    start: Pose
    goal_cell: tuple[int, int]
    goal_xy: tuple[float, float]
    poses: list[Pose]          # length T+1 (pose before each action, plus final)
    actions: list[str]         # length T, ends with "stop"
    steps: list[ActionStep]    # one-step local increments, length T
    shortest_length: float     # geodesic start -> goal, world units
    path_length: float         # executed displacement sum
    _obs_cache: dict = field(default_factory=dict, repr=False)
    _frame_store: object = field(default=None, repr=False)

    @property
    def num_steps(self) -> int:
        return len(self.actions)

    def observation(self, i: int) -> Observation:
        if i not in self._obs_cache:
            if self._frame_store is not None:
                left, front, right = self._frame_store.read_views(self.seed, i)
                self._obs_cache[i] = Observation(left, front, right, self.poses[i])
            else:
                self._obs_cache[i] = render(self.world, self.poses[i], self.config.resolution)
        return self._obs_cache[i]

    def history_frames(self, i: int, k: int | None = None) -> list[np.ndarray]:
        """k past front views o_{i-k..i-1}; indices clamped at 0 before the start."""
        k = self.config.history_len if k is None else k
        return [self.observation(max(0, j)).front for j in range(i - k, i)]

    def future_frames(self, i: int, n: int | None = None) -> list[np.ndarray]:
        """n future front views o_{i+1..i+n}; clamped at the final pose."""
        n = self.config.horizon if n is None else n
        last = len(self.poses) - 1
        return [self.observation(min(last, j)).front for j in range(i + 1, i + 1 + n)]

    def action_targets(self, i: int, n: int | None = None) -> list[ActionStep]:
        """Ground-truth n-step targets: poses i+1..i+n in the local frame of pose i."""
        n = self.config.horizon if n is None else n
        last = len(self.poses) - 1
        targets = [self.poses[min(last, j)] for j in range(i + 1, i + 1 + n)]
        return to_local_frame(self.poses[i], targets, self.goal_xy, self.config.arrive_threshold)


def _expert_rollout(world, start: Pose, goal_cell, goal_xy, config: SimConfig):
    """Greedy waypoint follower along the shortest cell path."""
    start_cell = world.cell_of(*start.xy)
    _, cell_path = shortest_path(world, start_cell, goal_cell)
    waypoints = [world.cell_center(c) for c in cell_path[1:]] + [goal_xy]
    stop_radius = 0.5 * config.arrive_threshold

    poses = [start]
    actions: list[str] = []
    pose = start
    wp = 0
    for _ in range(config.max_expert_steps):
        if math.hypot(pose.xy[0] - goal_xy[0], pose.xy[1] - goal_xy[1]) <= stop_radius:
            actions.append("stop")
            poses.append(pose)
            return poses, actions
        while wp < len(waypoints) - 1 and math.hypot(
            pose.xy[0] - waypoints[wp][0], pose.xy[1] - waypoints[wp][1]
        ) < 0.7 * world.cell_size:
            wp += 1
        tx, ty = waypoints[wp]
        desired = math.atan2(ty - pose.xy[1], tx - pose.xy[0])
        err = wrap_angle(desired - pose.yaw)
        if abs(err) > TURN_STEP / 2 + 1e-9:
            action = "turn_left" if err > 0 else "turn_right"
        else:
            action = "forward"
        new_pose, collided = step(world, pose, action)
        if collided:
            # drift pushed us against a wall; steer around it
            action = "turn_left" if err > 0 else "turn_right"
            new_pose, _ = step(world, pose, action)
        actions.append(action)
        pose = new_pose
        poses.append(pose)
    raise SimError("expert did not reach the goal within the step budget")


def _make_instruction(rng: np.random.Generator, color: str, category: str, rel_bearing: float) -> str:
    kind = int(rng.integers(3))
    if kind == 0:
        verb = ("go to", "find", "navigate to", "reach")[int(rng.integers(4))]
        return f"{verb} the {color} {category}"
    if kind == 1:
        if abs(rel_bearing) < math.radians(45):
            return f"the {color} {category} is ahead go straight towards it"
        side = "left" if rel_bearing > 0 else "right"
        return f"the {color} {category} is on your {side} go to it"
    if abs(rel_bearing) < math.radians(45):
        return f"head straight then go to the {color} {category}"
    side = "left" if rel_bearing > 0 else "right"
    return f"turn {side} then go to the {color} {category}"


def generate_episode(seed: int, config: SimConfig | None = None, max_tries: int = 20) -> Episode:
    """Build one deterministic episode: map, goal, expert trajectory, instruction."""
    config = config or SimConfig()
    rng = np.random.default_rng(seed)
    last_err: Exception | None = None
    for _ in range(max_tries):
        try:
            world = generate_map(
                rng, size=config.map_size, cell_size=config.cell_size,
                n_landmarks=config.n_landmarks, wall_density=config.wall_density,
            )
            lm_ids = sorted(world.landmarks)
            lm = world.landmarks[lm_ids[int(rng.integers(len(lm_ids)))]]
            r, c = lm.cell
            neighbors = [
                (r + dr, c + dc) for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if world.is_free_cell((r + dr, c + dc))
            ]
            goal_cell = neighbors[0]
            goal_xy = world.cell_center(goal_cell)

            free = np.argwhere(world.grid == 0)
            start = None
            shortest_length = 0.0
            order = rng.permutation(len(free))
            for idx in order:
                cell = (int(free[idx][0]), int(free[idx][1]))
                if cell == goal_cell:
                    continue
                try:
                    length, _ = shortest_path(world, cell, goal_cell)
                except UnreachableGoal:
                    continue
                if length >= config.min_goal_dist:
                    yaw = TURN_STEP * int(rng.integers(24))
                    cx, cy = world.cell_center(cell)
                    start = Pose.from_yaw(cx, cy, wrap_angle(yaw))
                    shortest_length = length
                    break
            if start is None:
                raise UnreachableGoal("no start cell with a reachable, non-trivial goal")

            poses, actions = _expert_rollout(world, start, goal_cell, goal_xy, config)
            steps = [
                to_local_frame(poses[i], [poses[i + 1]], goal_xy, config.arrive_threshold)[0]
                for i in range(len(actions))
            ]
            path_length = sum(
                math.hypot(poses[i + 1].xy[0] - poses[i].xy[0], poses[i + 1].xy[1] - poses[i].xy[1])
                for i in range(len(actions))
            )
            rel_bearing = wrap_angle(
                math.atan2(goal_xy[1] - start.xy[1], goal_xy[0] - start.xy[0]) - start.yaw
            )
            instruction = _make_instruction(rng, lm.color, lm.category, rel_bearing)
            return Episode(
                seed=seed, config=config, world=world, instruction=instruction,
                tokens=tokenizer.tokenize(instruction), start=start,
                goal_cell=goal_cell, goal_xy=goal_xy, poses=poses, actions=actions,
                steps=steps, shortest_length=shortest_length, path_length=path_length,
            )
        except (SimError, UnreachableGoal) as err:
            last_err = err
            continue
    raise UnreachableGoal(f"episode generation failed after {max_tries} tries: {last_err}")
