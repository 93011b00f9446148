"""Occupancy-grid world: map generation, discrete motion, geodesic distances.

Grid cells: 0 = free, 1 = wall, >= 2 = landmark id. Border cells are always
walls; landmarks block movement and rays. Distances are in world units
(cell_size per cell). Movement follows the VLN-CE convention: forward 0.25
units, turns of 15 degrees, stop.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose, wrap_angle

FREE, WALL = 0, 1
FORWARD_STEP = 0.25
TURN_STEP = math.radians(15.0)

ACTIONS = ("forward", "turn_left", "turn_right", "stop")

COLOR_TABLE = {
    "red": (0.85, 0.10, 0.10),
    "green": (0.10, 0.75, 0.10),
    "blue": (0.15, 0.25, 0.90),
    "yellow": (0.90, 0.85, 0.10),
    "magenta": (0.85, 0.15, 0.80),
    "cyan": (0.10, 0.80, 0.80),
}
CATEGORIES = ("sphere", "cube", "door", "pillar")


class SimError(RuntimeError):
    pass


class UnreachableGoal(SimError):
    pass


@dataclass
class Landmark:
    id: int
    category: str
    color: str
    cell: tuple[int, int]  # (row, col)


@dataclass
class WorldMap:
    grid: np.ndarray  # (H, W) int8
    cell_size: float
    landmarks: dict[int, Landmark] = field(default_factory=dict)

    @property
    def shape(self):
        return self.grid.shape

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(y / self.cell_size)), int(math.floor(x / self.cell_size)))

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        r, c = cell
        return ((c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size)

    def is_free_cell(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        h, w = self.grid.shape
        return 0 <= r < h and 0 <= c < w and self.grid[r, c] == FREE

    def is_free_point(self, x: float, y: float) -> bool:
        return self.is_free_cell(self.cell_of(x, y))


def _free_components(grid: np.ndarray) -> np.ndarray:
    """Label 4-connected free components; -1 for blocked cells."""
    h, w = grid.shape
    labels = np.full((h, w), -1, dtype=np.int32)
    next_label = 0
    for r in range(h):
        for c in range(w):
            if grid[r, c] == FREE and labels[r, c] < 0:
                stack = [(r, c)]
                labels[r, c] = next_label
                while stack:
                    rr, cc = stack.pop()
                    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        nr, nc = rr + dr, cc + dc
                        if 0 <= nr < h and 0 <= nc < w and grid[nr, nc] == FREE and labels[nr, nc] < 0:
                            labels[nr, nc] = next_label
                            stack.append((nr, nc))
                next_label += 1
    return labels


def generate_map(
    rng: np.random.Generator,
    size: int = 12,
    cell_size: float = 0.5,
    n_landmarks: int = 3,
    wall_density: float = 0.10,
    max_tries: int = 50,
) -> WorldMap:
    """Random connected map: border walls, sparse interior walls, landmarks
    with distinct colors, each landmark adjacent to the free region."""
    for _ in range(max_tries):
        grid = np.zeros((size, size), dtype=np.int8)
        grid[0, :] = grid[-1, :] = WALL
        grid[:, 0] = grid[:, -1] = WALL
        interior = rng.random((size - 2, size - 2)) < wall_density
        grid[1:-1, 1:-1] = np.where(interior, WALL, FREE)

        labels = _free_components(grid)
        if labels.max() < 0:
            continue
        # keep only the largest free component; fill the rest with walls
        counts = np.bincount(labels[labels >= 0])
        main = int(np.argmax(counts))
        grid[(labels >= 0) & (labels != main)] = WALL
        if (grid == FREE).sum() < size * size // 3:
            continue

        colors = list(COLOR_TABLE)
        rng.shuffle(colors)
        landmarks: dict[int, Landmark] = {}
        free_cells = np.argwhere(grid == FREE)
        ok = True
        for i in range(n_landmarks):
            placed = False
            for _ in range(100):
                r, c = free_cells[rng.integers(len(free_cells))]
                r, c = int(r), int(c)
                if grid[r, c] != FREE:
                    continue
                neighbors = [
                    (r + dr, c + dc)
                    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))
                    if grid[r + dr, c + dc] == FREE
                ]
                if len(neighbors) < 2:
                    continue
                lid = 2 + i
                grid[r, c] = lid
                # placing the landmark must not disconnect the free region
                if _free_components(grid).max() > 0:
                    grid[r, c] = FREE
                    continue
                landmarks[lid] = Landmark(lid, CATEGORIES[int(rng.integers(len(CATEGORIES)))], colors[i], (r, c))
                placed = True
                break
            if not placed:
                ok = False
                break
        if ok and landmarks:
            return WorldMap(grid=grid, cell_size=cell_size, landmarks=landmarks)
    raise SimError("could not generate a connected map with reachable landmarks")


def step(world: WorldMap, pose: Pose, action: str) -> tuple[Pose, int]:
    """Execute one discrete action; forward is blocked by non-free cells."""
    if action not in ACTIONS:
        raise SimError(f"unknown action {action!r}")
    x, y, z = pose.position
    yaw = pose.yaw
    if action == "forward":
        nx = x + FORWARD_STEP * math.cos(yaw)
        ny = y + FORWARD_STEP * math.sin(yaw)
        if world.is_free_point(nx, ny):
            return Pose.from_yaw(nx, ny, yaw, z=z), 0
        return pose, 1
    if action == "turn_left":
        return Pose.from_yaw(x, y, wrap_angle(yaw + TURN_STEP), z=z), 0
    if action == "turn_right":
        return Pose.from_yaw(x, y, wrap_angle(yaw - TURN_STEP), z=z), 0
    return pose, 0  # stop


_NEIGHBORS = (
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, math.sqrt(2)), (1, -1, math.sqrt(2)),
    (-1, 1, math.sqrt(2)), (-1, -1, math.sqrt(2)),
)


def shortest_path(world: WorldMap, start: tuple[int, int], goal: tuple[int, int]):
    """8-connected Dijkstra; diagonal cost sqrt(2), scaled by cell size.

    Diagonal moves require both adjacent orthogonal cells to be free
    (no corner cutting). Returns (length_in_units, cell path). Raises
    UnreachableGoal when no path exists.
    """
    if not world.is_free_cell(start):
        raise SimError(f"start cell {start} is not free")
    if not world.is_free_cell(goal):
        raise SimError(f"goal cell {goal} is not free")
    h, w = world.grid.shape
    dist = {start: 0.0}
    prev: dict[tuple[int, int], tuple[int, int]] = {}
    heap = [(0.0, start)]
    while heap:
        d, cell = heapq.heappop(heap)
        if cell == goal:
            path = [cell]
            while cell in prev:
                cell = prev[cell]
                path.append(cell)
            path.reverse()
            return d * world.cell_size, path
        if d > dist.get(cell, math.inf):
            continue
        r, c = cell
        for dr, dc, cost in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w) or world.grid[nr, nc] != FREE:
                continue
            if dr != 0 and dc != 0:
                if world.grid[r + dr, c] != FREE or world.grid[r, c + dc] != FREE:
                    continue
            nd = d + cost
            if nd < dist.get((nr, nc), math.inf):
                dist[(nr, nc)] = nd
                prev[(nr, nc)] = cell
                heapq.heappush(heap, (nd, (nr, nc)))
    raise UnreachableGoal(f"no path from {start} to {goal}")


def geodesic_distance(world: WorldMap, from_xy: tuple[float, float], goal: tuple[int, int]) -> float:
    """Geodesic distance in units from a world point to a goal cell center."""
    cell = world.cell_of(*from_xy)
    if not world.is_free_cell(cell):
        # nudge to the nearest free cell (agent may stand on a boundary)
        free = np.argwhere(world.grid == FREE)
        d2 = ((free[:, 0] - cell[0]) ** 2 + (free[:, 1] - cell[1]) ** 2)
        cell = tuple(int(v) for v in free[int(np.argmin(d2))])
    length, _ = shortest_path(world, cell, goal)
    return length
