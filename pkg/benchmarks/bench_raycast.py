"""Benchmark the compiled raycast kernel against the pure-python fallback.

Run directly or via `navworld bench`.  Also verifies that the two backends
produce bit-identical results on the benchmark workload.
"""

import time

import numpy as np

from navworld.sim import _raycast_py
from navworld.sim.worldmap import generate_map

try:
    from navworld.sim import _raycast_cy
except ImportError:
    _raycast_cy = None


def _workload(n_rays: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    world = generate_map(rng)
    grid = world.grid.astype(np.int8)
    free = np.argwhere(grid == 0)
    row, col = free[rng.integers(len(free))]
    ox, oy = col + 0.5, row + 0.5  # kernel works in cell units
    ang = rng.uniform(-np.pi, np.pi, size=n_rays)
    return grid, ox, oy, np.cos(ang), np.sin(ang)


def _time(fn, *args, repeats: int = 3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(rays: int = 200_000):
    grid, ox, oy, dx, dy = _workload(rays)
    max_dist = grid.shape[0] * 2.0

    t_py, out_py = _time(_raycast_py.cast_rays, grid, ox, oy, dx, dy, max_dist)
    print(f"pure python : {rays} rays in {t_py * 1e3:8.1f} ms "
          f"({rays / t_py / 1e6:.2f} Mray/s)")
    if _raycast_cy is None:
        print("compiled    : not available (built without the extension)")
        return
    t_cy, out_cy = _time(_raycast_cy.cast_rays, grid, ox, oy, dx, dy, max_dist)
    print(f"compiled    : {rays} rays in {t_cy * 1e3:8.1f} ms "
          f"({rays / t_cy / 1e6:.2f} Mray/s)")
    print(f"speedup     : {t_py / t_cy:.1f}x")
    same = all(np.array_equal(a, b) for a, b in zip(out_py, out_cy))
    print(f"bit-identical outputs: {same}")
    if not same:
        raise SystemExit("backend mismatch")


if __name__ == "__main__":
    main()
