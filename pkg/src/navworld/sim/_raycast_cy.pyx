# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid raycaster: per-ray Amanatides-Woo traversal.

Same contract as _raycast_py.cast_rays; this is the hot kernel for
rendering and episode generation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, fabs

cnp.import_array()


def cast_rays(cnp.int8_t[:, :] grid, double ox, double oy,
              cnp.float64_t[:] dirx, cnp.float64_t[:] diry, double max_dist):
    cdef Py_ssize_t h = grid.shape[0]
    cdef Py_ssize_t w = grid.shape[1]
    cdef Py_ssize_t n = dirx.shape[0]
    dist_arr = np.full(n, max_dist, dtype=np.float64)
    value_arr = np.zeros(n, dtype=np.int8)
    cdef cnp.float64_t[:] dist = dist_arr
    cdef cnp.int8_t[:] value = value_arr

    cdef Py_ssize_t i
    cdef double dx, dy, t_max_x, t_max_y, t_delta_x, t_delta_y, t_hit
    cdef Py_ssize_t cx, cy, step_x, step_y
    cdef cnp.int8_t cell

    for i in range(n):
        dx = dirx[i]
        dy = diry[i]
        if fabs(dx) < 1e-12:
            dx = 1e-12
        if fabs(dy) < 1e-12:
            dy = 1e-12
        cx = <Py_ssize_t>floor(ox)
        cy = <Py_ssize_t>floor(oy)
        step_x = 1 if dx > 0 else -1
        step_y = 1 if dy > 0 else -1
        t_max_x = ((cx + 1.0 if dx > 0 else <double>cx) - ox) / dx
        t_max_y = ((cy + 1.0 if dy > 0 else <double>cy) - oy) / dy
        t_delta_x = fabs(1.0 / dx)
        t_delta_y = fabs(1.0 / dy)

        while True:
            if t_max_x < t_max_y:
                cx += step_x
                t_hit = t_max_x
                t_max_x += t_delta_x
            else:
                cy += step_y
                t_hit = t_max_y
                t_max_y += t_delta_y
            if cx < 0 or cx >= w or cy < 0 or cy >= h:
                dist[i] = t_hit if t_hit < max_dist else max_dist
                break
            cell = grid[cy, cx]
            if cell != 0:
                dist[i] = t_hit if t_hit < max_dist else max_dist
                value[i] = cell
                break
            if t_hit >= max_dist:
                break

    return dist_arr, value_arr
