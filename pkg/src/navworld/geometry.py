"""Pose algebra and trajectory encoding.

Conventions (pinned and tested):
  - world axes: +Z up; heading 0 along +X; positive heading counter-clockwise
  - heading values always wrapped to (-pi, pi]; the wrap boundary maps to +pi
  - pitch/roll components are discarded by the ground-plane projection,
    not rejected

World poses are 6-DoF (3D position + unit quaternion). Trajectory targets
are expressed in the local frame of a reference pose as ground-plane
quadruples (x, y, theta, arrive), and encoded for the network as the 5-tuple
(x, y, cos(theta), sin(theta), arrive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
DEFAULT_ARRIVE_THRESHOLD = 1.0


class GeometryError(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]; -pi maps to +pi."""
    return math.pi - (math.pi - a) % TWO_PI


@dataclass(frozen=True)
class Pose:
    """6-DoF world pose: position (x, y, z) and unit quaternion (w, x, y, z)."""

    position: tuple[float, float, float]
    rotation: tuple[float, float, float, float]

    def __post_init__(self):
        n = math.sqrt(sum(c * c for c in self.rotation))
        if abs(n - 1.0) > 1e-3:
            raise GeometryError(f"quaternion norm {n:.6f} is not within 1e-3 of 1")

    @staticmethod
    def from_yaw(x: float, y: float, yaw: float, z: float = 0.0) -> "Pose":
        h = yaw / 2.0
        return Pose((x, y, z), (math.cos(h), 0.0, 0.0, math.sin(h)))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.position[0], self.position[1])

    @property
    def yaw(self) -> float:
        return quat_to_heading(self.rotation)


@dataclass(frozen=True)
class ActionStep:
    """Ground-plane displacement quadruple relative to a reference pose."""

    x: float
    y: float
    theta: float
    arrive: int = 0


@dataclass(frozen=True)
class ActionEncoding:
    """Network encoding (x, y, cos(theta), sin(theta), arrive logit or flag)."""

    x: float
    y: float
    cos_theta: float
    sin_theta: float
    arrive: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.cos_theta, self.sin_theta, self.arrive])


def quat_to_heading(q) -> float:
    """Yaw about +Z, in (-pi, pi]. Pitch/roll content is projected away."""
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if abs(n - 1.0) > 1e-3:
        raise GeometryError(f"quaternion norm {n:.6f} is not within 1e-3 of 1")
    # heading of the rotated +X axis projected onto the ground plane
    fx = 1.0 - 2.0 * (y * y + z * z)
    fy = 2.0 * (x * y + w * z)
    return wrap_angle(math.atan2(fy, fx))


def to_local_frame(
    reference: Pose,
    targets,
    goal_xy: tuple[float, float] | None = None,
    arrive_threshold: float = DEFAULT_ARRIVE_THRESHOLD,
) -> list[ActionStep]:
    """Express target poses in the reference pose's ground-plane frame.

    The reference maps to (0, 0, 0). Arrive flags are set by proximity of
    each target to ``goal_xy`` (0 everywhere when no goal is given).
    """
    h = reference.yaw
    ch, sh = math.cos(h), math.sin(h)
    rx, ry = reference.xy
    steps = []
    for t in targets:
        dx = t.position[0] - rx
        dy = t.position[1] - ry
        local_x = ch * dx + sh * dy
        local_y = -sh * dx + ch * dy
        theta = wrap_angle(t.yaw - h)
        arrive = 0
        if goal_xy is not None:
            gd = math.hypot(t.position[0] - goal_xy[0], t.position[1] - goal_xy[1])
            arrive = 1 if gd <= arrive_threshold else 0
        steps.append(ActionStep(local_x, local_y, theta, arrive))
    return steps


def apply_action(current: Pose, step: ActionStep) -> Pose:
    """Advance a pose by a local-frame step; inverse of to_local_frame on singles."""
    if not all(math.isfinite(v) for v in (step.x, step.y, step.theta)):
        raise GeometryError(f"non-finite action step {step}")
    h = current.yaw
    ch, sh = math.cos(h), math.sin(h)
    nx = current.position[0] + ch * step.x - sh * step.y
    ny = current.position[1] + sh * step.x + ch * step.y
    return Pose.from_yaw(nx, ny, wrap_angle(h + step.theta), z=current.position[2])


def encode_action(a: ActionStep) -> ActionEncoding:
    return ActionEncoding(a.x, a.y, math.cos(a.theta), math.sin(a.theta), float(a.arrive))


def decode_action(e: ActionEncoding) -> ActionStep:
    """Invert encode_action; (cos, sin) normalized through atan2, arrive logit thresholded at 0."""
    c, s = e.cos_theta, e.sin_theta
    if abs(c) < 1e-9 and abs(s) < 1e-9:
        raise GeometryError("degenerate (cos, sin) pair near zero; heading undefined")
    theta = wrap_angle(math.atan2(s, c))
    arrive = 1 if e.arrive > 0.0 else 0
    return ActionStep(e.x, e.y, theta, arrive)
