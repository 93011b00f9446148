"""On-disk episode store.

Two files per dataset directory:
  index.jsonl  - one JSON record per episode (instruction, seed, poses,
                 actions, path lengths, frame offsets) plus a first header
                 line with the sim config and blob metadata
  frames.bin   - binary frame blob: magic, version byte, u32 view resolution,
                 u64 frame count header, then little-endian f32 frames in
                 row-major (V, V, 3) order. Pose index t of an episode owns
                 three consecutive frames (left, front, right).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .episodes import Episode, SimConfig, generate_episode

MAGIC = b"NWFB"
VERSION = 1
HEADER_SIZE = len(MAGIC) + 1 + 4 + 8


class StoreError(RuntimeError):
    pass


class FrameStore:
    """Memory-mapped reader for frames.bin."""

    def __init__(self, path: Path, offsets: dict[int, int]):
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != MAGIC:
                raise StoreError(f"bad frame blob magic {magic!r}")
            (version,) = struct.unpack("<B", fh.read(1))
            if version != VERSION:
                raise StoreError(f"unknown frame blob version {version}")
            (self.resolution,) = struct.unpack("<I", fh.read(4))
            (self.frame_count,) = struct.unpack("<Q", fh.read(8))
        v = self.resolution
        self.frames = np.memmap(path, dtype="<f4", mode="r", offset=HEADER_SIZE,
                                shape=(self.frame_count, v, v, 3))
        self.offsets = offsets  # episode seed -> first frame index

    def read_views(self, seed: int, pose_index: int):
        base = self.offsets[seed] + 3 * pose_index
        left, front, right = (np.asarray(self.frames[base + j], dtype=np.float64) for j in range(3))
        return left, front, right


def save_episodes(out_dir, episodes: list[Episode], render_frames: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = episodes[0].config
    v = config.resolution

    frame_count = sum(3 * len(ep.poses) for ep in episodes) if render_frames else 0
    records = []
    with open(out / "frames.bin", "wb") as blob:
        blob.write(MAGIC)
        blob.write(struct.pack("<B", VERSION))
        blob.write(struct.pack("<I", v))
        blob.write(struct.pack("<Q", frame_count))
        offset = 0
        for ep in episodes:
            rec = {
                "seed": ep.seed,
                "instruction": ep.instruction,
                "tokens": ep.tokens,
                "goal_cell": list(ep.goal_cell),
                "goal_xy": list(ep.goal_xy),
                "poses": [[*p.position, *p.rotation] for p in ep.poses],
                "actions": ep.actions,
                "steps": [[s.x, s.y, s.theta, s.arrive] for s in ep.steps],
                "shortest_length": ep.shortest_length,
                "path_length": ep.path_length,
                "frame_offset": offset if render_frames else None,
            }
            records.append(rec)
            if render_frames:
                for i in range(len(ep.poses)):
                    obs = ep.observation(i)
                    for frame in (obs.left, obs.front, obs.right):
                        blob.write(np.asarray(frame, dtype="<f4").tobytes())
                    offset += 3
                ep._obs_cache.clear()  # keep memory bounded while writing

    with open(out / "index.jsonl", "w") as fh:
        fh.write(json.dumps({"config": config.to_dict(), "episodes": len(episodes),
                             "frames": frame_count}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def load_episodes(data_dir, limit: int | None = None) -> list[Episode]:
    """Rebuild episodes from seeds (deterministic) and attach the frame store."""
    data = Path(data_dir)
    with open(data / "index.jsonl") as fh:
        header = json.loads(fh.readline())
        records = [json.loads(line) for line in fh]
    if limit is not None:
        records = records[:limit]
    config = SimConfig.from_dict(header["config"])

    offsets = {rec["seed"]: rec["frame_offset"] for rec in records if rec["frame_offset"] is not None}
    store = FrameStore(data / "frames.bin", offsets) if (data / "frames.bin").exists() and offsets else None

    episodes = []
    for rec in records:
        ep = generate_episode(rec["seed"], config)
        if ep.instruction != rec["instruction"] or len(ep.poses) != len(rec["poses"]):
            raise StoreError(f"episode seed {rec['seed']} does not regenerate identically")
        if store is not None and rec["frame_offset"] is not None:
            ep._frame_store = store
        episodes.append(ep)
    return episodes
