"""Pure-numpy grid raycaster (fallback for the Cython kernel).

All rays advance in lockstep through an Amanatides-Woo grid traversal;
identical math to the compiled kernel, vectorized across rays.
"""

from __future__ import annotations

import numpy as np


def cast_rays(grid: np.ndarray, ox: float, oy: float, dirx: np.ndarray, diry: np.ndarray, max_dist: float):
    """Trace rays from (ox, oy) through an occupancy grid.

    grid: (H, W) int8, 0 = free, anything else blocks. dirx/diry are the
    ray direction components (precomputed by the caller so that the compiled
    and fallback kernels see bit-identical inputs). Returns (dist, cell_value)
    per ray; rays that reach max_dist without a hit report (max_dist, 0).
    The grid is indexed [row=y, col=x] in cell units.
    """
    h, w = grid.shape
    n = dirx.shape[0]
    # Avoid exact zeros so 1/d is finite; direction sign is preserved.
    dx = np.where(np.abs(dirx) < 1e-12, 1e-12, dirx)
    dy = np.where(np.abs(diry) < 1e-12, 1e-12, diry)

    cx = np.full(n, int(np.floor(ox)), dtype=np.int64)
    cy = np.full(n, int(np.floor(oy)), dtype=np.int64)
    step_x = np.where(dx > 0, 1, -1).astype(np.int64)
    step_y = np.where(dy > 0, 1, -1).astype(np.int64)
    next_x = np.where(dx > 0, cx + 1.0, cx.astype(float))
    next_y = np.where(dy > 0, cy + 1.0, cy.astype(float))
    t_max_x = (next_x - ox) / dx
    t_max_y = (next_y - oy) / dy
    t_delta_x = np.abs(1.0 / dx)
    t_delta_y = np.abs(1.0 / dy)

    dist = np.full(n, max_dist)
    value = np.zeros(n, dtype=np.int8)
    active = np.ones(n, dtype=bool)

    for _ in range(2 * (h + w)):
        if not active.any():
            break
        take_x = active & (t_max_x < t_max_y)
        take_y = active & ~(t_max_x < t_max_y)
        cx[take_x] += step_x[take_x]
        t_hit = np.where(take_x, t_max_x, t_max_y)
        t_max_x[take_x] += t_delta_x[take_x]
        cy[take_y] += step_y[take_y]
        t_max_y[take_y] += t_delta_y[take_y]

        oob = active & ((cx < 0) | (cx >= w) | (cy < 0) | (cy >= h))
        dist[oob] = np.minimum(t_hit[oob], max_dist)
        active &= ~oob

        cell = np.zeros(n, dtype=np.int8)
        inb = active
        cell[inb] = grid[cy[inb], cx[inb]]
        hit = active & (cell != 0)
        dist[hit] = np.minimum(t_hit[hit], max_dist)
        value[hit] = cell[hit]
        active &= ~hit

        done = active & (t_hit >= max_dist)
        active &= ~done

    return dist, value
