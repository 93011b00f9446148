"""Raycast renderer: three RGB views (left, front, right) per pose.

One ray per pixel column; columns are filled with a distance-shaded wall or
landmark color between flat ceiling and floor bands. The DDA kernel is the
compiled extension when available, otherwise the pure-numpy fallback
(bit-identical results; set NAVWORLD_NO_EXT=1 to force the fallback).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from ..geometry import Pose
from .worldmap import COLOR_TABLE, WorldMap, SimError

if os.environ.get("NAVWORLD_NO_EXT"):
    from . import _raycast_py as _kernel
    KERNEL_BACKEND = "python"
else:
    try:
        from . import _raycast_cy as _kernel  # type: ignore[attr-defined]
        KERNEL_BACKEND = "cython"
    except ImportError:
        from . import _raycast_py as _kernel
        KERNEL_BACKEND = "python"

FOV = math.radians(90.0)
VIEW_OFFSETS = {"left": -math.pi / 2, "front": 0.0, "right": math.pi / 2}
WALL_COLOR = (0.55, 0.55, 0.55)
FLOOR_COLOR = (0.30, 0.24, 0.18)
CEILING_COLOR = (0.55, 0.70, 0.85)
WALL_HEIGHT = 1.0  # world units
MAX_VIEW_DIST = 20.0  # world units


@dataclass
class Observation:
    left: np.ndarray
    front: np.ndarray
    right: np.ndarray
    pose: Pose

    @property
    def views(self) -> dict[str, np.ndarray]:
        return {"left": self.left, "front": self.front, "right": self.right}


def _color_lut(world: WorldMap) -> np.ndarray:
    max_id = max([1] + list(world.landmarks))
    lut = np.zeros((max_id + 1, 3))
    lut[1] = WALL_COLOR
    for lid, lm in world.landmarks.items():
        lut[lid] = COLOR_TABLE[lm.color]
    return lut


def render_view(world: WorldMap, pose: Pose, view_yaw: float, resolution: int, lut: np.ndarray) -> np.ndarray:
    v = resolution
    x, y = pose.xy
    half_tan = math.tan(FOV / 2)
    u = (2.0 * (np.arange(v) + 0.5) / v - 1.0) * half_tan
    fwd = np.array([math.cos(view_yaw), math.sin(view_yaw)])
    right = np.array([math.sin(view_yaw), -math.cos(view_yaw)])
    dirs = fwd[None, :] + u[:, None] * right[None, :]
    norms = np.sqrt((dirs * dirs).sum(axis=1))
    dirs = dirs / norms[:, None]

    cs = world.cell_size
    dist_cells, value = _kernel.cast_rays(
        world.grid, x / cs, y / cs, np.ascontiguousarray(dirs[:, 0]), np.ascontiguousarray(dirs[:, 1]),
        MAX_VIEW_DIST / cs,
    )
    dist = np.asarray(dist_cells) * cs
    value = np.asarray(value)

    # perpendicular distance removes fisheye distortion
    perp = dist * (dirs @ fwd)
    perp = np.maximum(perp, 1e-6)
    wall_px = np.clip(v * WALL_HEIGHT / perp, 0.0, v)
    top = (v - wall_px) / 2.0
    bottom = (v + wall_px) / 2.0
    # no hit: pure floor/ceiling split
    none = value == 0
    top = np.where(none, v / 2.0, top)
    bottom = np.where(none, v / 2.0, bottom)

    shade = 1.0 / (1.0 + 0.25 * dist)
    wall_rgb = lut[value] * shade[:, None]

    rows = np.arange(v)[:, None]  # (V, 1) broadcast against columns
    img = np.empty((v, v, 3))
    ceiling_mask = rows < top[None, :]
    floor_mask = rows >= bottom[None, :]
    img[:] = wall_rgb[None, :, :]
    img[ceiling_mask] = CEILING_COLOR
    img[floor_mask] = FLOOR_COLOR
    return img


def render(world: WorldMap, pose: Pose, resolution: int = 32) -> Observation:
    """Render the three camera views at a pose (must stand in a free cell)."""
    if not world.is_free_point(*pose.xy):
        raise SimError(f"pose {pose.xy} is inside a blocked cell")
    lut = _color_lut(world)
    yaw = pose.yaw
    frames = {
        name: render_view(world, pose, yaw + off, resolution, lut)
        for name, off in VIEW_OFFSETS.items()
    }
    return Observation(left=frames["left"], front=frames["front"], right=frames["right"], pose=pose)
