"""Command-line entry points.

Subcommands:
    gen-data   generate and store a gridworld episode dataset
    train      run one training stage
    eval       closed-loop evaluation with navigation metrics
    rollout    run a single episode, optionally dumping trajectory + frames
    speed      SFS speed/SR report across schedule intervals
    plot       render trajectory overlays and frame strips from dumps
    bench      raycast kernel benchmark (compiled vs pure python)
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ModelConfig, TrainConfig, load_configs
from .sim.episodes import SimConfig, generate_episode
from .sim.store import load_episodes, save_episodes


def _load_model_cfg(path) -> tuple[SimConfig, ModelConfig]:
    if path:
        return load_configs(path)
    return SimConfig(), ModelConfig()


def cmd_gen_data(args) -> int:
    sim, _ = _load_model_cfg(args.config)
    episodes = [generate_episode(args.seed + i, sim) for i in range(args.count)]
    save_episodes(args.out, episodes, render_frames=not args.no_frames)
    print(f"wrote {len(episodes)} episodes to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .trainer import ModelBundle, train_stage

    sim, model_cfg = _load_model_cfg(args.config)
    tc = TrainConfig(
        stage=args.stage, variant=args.variant, steps=args.steps,
        batch_size=args.batch_size, lr=args.lr, seed=args.seed,
        lam=args.lam, mmfca_prob=args.mmfca_prob,
    )
    episodes = load_episodes(args.data, limit=args.limit)
    bundle = None
    if args.init:
        bundle, _ = ModelBundle.load(args.init)
    bundle, metrics = train_stage(tc, model_cfg, episodes, bundle=bundle, out_dir=args.out)
    print(f"stage {tc.stage} ({tc.variant}) done; final loss {metrics[-1]['loss']:.4f}")
    return 0


def _eval_results(args):
    from .runtime import SfsSchedule, rollout
    from .trainer import ModelBundle

    bundle, _ = ModelBundle.load(args.checkpoint)
    episodes = load_episodes(args.data, limit=args.limit)
    sched = SfsSchedule(args.sfs_k)
    results = [
        rollout(bundle, ep, sched, variant=args.variant, seed=args.seed + i,
                use_generator=not args.no_generator)
        for i, ep in enumerate(episodes)
    ]
    return bundle, episodes, results


def cmd_eval(args) -> int:
    from .runtime import nav_metrics

    _, episodes, results = _eval_results(args)
    m = nav_metrics(results, episodes)
    report = {
        "metrics": m.to_dict(),
        "variant": args.variant,
        "sfs_k": args.sfs_k,
        "generator_calls": sum(r.generator_calls for r in results),
        "mean_wall": float(np.mean([r.wall_time for r in results])),
    }
    out = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(out)
    print(out)
    return 0


def cmd_rollout(args) -> int:
    from .runtime import SfsSchedule, rollout
    from .sim.store import save_episodes as _  # noqa: F401 (frame blob format lives there)
    from .trainer import ModelBundle

    bundle, _header = ModelBundle.load(args.checkpoint)
    sim, _model = _load_model_cfg(args.config)
    episode = generate_episode(args.episode, sim)
    res = rollout(bundle, episode, SfsSchedule(args.sfs_k), variant=args.variant,
                  seed=args.seed)
    print(f"episode {args.episode}: {res.num_steps} steps, stop={res.stop_reason}, "
          f"generator calls={res.generator_calls}")
    if args.dump:
        out = Path(args.dump)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trajectory.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "x", "y", "theta", "action", "arrive_prob"])
            for i, action in enumerate(res.actions):
                p = res.poses[min(i, len(res.poses) - 1)]
                w.writerow([i, p.position[0], p.position[1], p.yaw, action,
                            res.arrive_probs[i] if i < len(res.arrive_probs) else ""])
        manifest = {
            "episode_seed": args.episode,
            "instruction": episode.instruction,
            "goal_xy": list(episode.goal_xy),
            "stop_reason": res.stop_reason,
            "predicted_frame_steps": [s for s, _f in res.predicted_frames],
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
        if args.dump_frames and res.predicted_frames:
            for s, frames in res.predicted_frames:
                np.save(out / f"pred_frames_step{s:03d}.npy", frames.astype(np.float32))
        print(f"dump written to {out}")
    return 0


def cmd_speed(args) -> int:
    from .runtime import format_speed_report, speed_report
    from .trainer import ModelBundle

    bundle, _ = ModelBundle.load(args.checkpoint)
    episodes = load_episodes(args.data, limit=args.limit)
    report = speed_report(bundle, episodes, ks=tuple(args.ks), seed=args.seed)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
    print(format_speed_report(report))
    return 0


def cmd_plot(args) -> int:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("plot requires matplotlib (pip install navworld[plot])", file=sys.stderr)
        return 1
    dump = Path(args.dump)
    manifest = json.loads((dump / "manifest.json").read_text())
    sim, _ = _load_model_cfg(args.config)
    episode = generate_episode(manifest["episode_seed"], sim)

    xs, ys = [], []
    with open(dump / "trajectory.csv") as fh:
        for row in csv.DictReader(fh):
            xs.append(float(row["x"]))
            ys.append(float(row["y"]))
    fig, ax = plt.subplots(figsize=(6, 6))
    grid = episode.world.grid
    extent = [0, grid.shape[1] * episode.world.cell_size,
              0, grid.shape[0] * episode.world.cell_size]
    ax.imshow(grid > 0, origin="lower", cmap="gray_r", extent=extent, alpha=0.6)
    ax.plot(xs, ys, "b.-", label="executed")
    gx, gy = manifest["goal_xy"]
    ax.add_patch(plt.Circle((gx, gy), episode.config.arrive_threshold,
                            fill=False, color="g", label="goal radius"))
    ax.plot([episode.start.position[0]], [episode.start.position[1]], "r^", label="start")
    ax.set_title(manifest["instruction"])
    ax.legend()
    fig.savefig(dump / "trajectory.png", dpi=120)
    print(f"wrote {dump / 'trajectory.png'}")

    frames = sorted(dump.glob("pred_frames_step*.npy"))
    if frames:
        arr = np.load(frames[0])
        fig, axes = plt.subplots(1, len(arr), figsize=(2 * len(arr), 2.2))
        for i, axx in enumerate(np.atleast_1d(axes)):
            axx.imshow(np.clip(arr[i], 0, 1))
            axx.set_axis_off()
            axx.set_title(f"t+{i+1}")
        fig.savefig(dump / "predicted_frames.png", dpi=120)
        print(f"wrote {dump / 'predicted_frames.png'}")
    return 0


def cmd_bench(args) -> int:
    import importlib.util
    bench = Path(__file__).resolve().parents[2] / "benchmarks" / "bench_raycast.py"
    spec = importlib.util.spec_from_file_location("bench_raycast", bench)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(rays=args.rays)
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="navworld")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-data", help="generate an episode dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--no-frames", action="store_true", help="skip the frame blob")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("--stage", required=True, choices=["1a", "1b", "2"])
    p.add_argument("--variant", default="former", choices=["former", "diffusion"])
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", default=None, help="checkpoint to start from")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--mmfca-prob", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="closed-loop evaluation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--variant", default="former", choices=["former", "diffusion"])
    p.add_argument("--sfs-k", type=int, default=10)
    p.add_argument("--no-generator", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("rollout", help="run one episode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episode", type=int, required=True, help="episode seed")
    p.add_argument("--variant", default="former", choices=["former", "diffusion"])
    p.add_argument("--sfs-k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--dump", default=None)
    p.add_argument("--dump-frames", action="store_true")
    p.set_defaults(fn=cmd_rollout)

    p = sub.add_parser("speed", help="SFS speed report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ks", type=int, nargs="+", default=[1, 5, 10])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_speed)

    p = sub.add_parser("plot", help="plot a rollout dump")
    p.add_argument("--dump", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("bench", help="raycast kernel benchmark")
    p.add_argument("--rays", type=int, default=200000)
    p.set_defaults(fn=cmd_bench)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
