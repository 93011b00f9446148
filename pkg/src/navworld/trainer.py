"""Two-stage training recipe.

Stage 1a pretrains the video generator (flow-matching + codec reconstruction)
with the planner frozen.  Stage 1b pretrains the chosen action head (Action
Former or diffusion policy) with the planner frozen and the generator
untouched.  Stage 2 unfreezes everything and optimizes

    L_Total = L_VG + lam * L_PH

with, for the diffusion variant, a per-sample Bernoulli draw deciding whether
the fusion taps are active for that sample.

All randomness flows from the config seed, so two runs with identical
config produce bitwise-identical loss curves.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .autodiff import AdamW, CosineSchedule, Tensor, load_checkpoint, save_checkpoint
from .config import ModelConfig, TrainConfig
from .geometry import encode_action
from .planner import ContextEncoder
from .policy import (
    ActionFormer,
    DiffusionPolicy,
    diffusion_policy_loss,
    former_loss,
    joint_loss,
)
from .sim.episodes import Episode
from .sim.tokenizer import tokenize
from .videogen import VideoGenerator, vg_loss


class TrainError(RuntimeError):
    pass


@dataclass
class ModelBundle:
    """All trainable components behind one parameter/checkpoint namespace."""

    cfg: ModelConfig
    planner: ContextEncoder
    generator: VideoGenerator
    former: ActionFormer
    policy: DiffusionPolicy

    @staticmethod
    def build(cfg: ModelConfig, seed: int = 0) -> "ModelBundle":
        rng = np.random.default_rng(seed)
        return ModelBundle(
            cfg,
            ContextEncoder(rng, cfg),
            VideoGenerator(rng, cfg),
            ActionFormer(rng, cfg),
            DiffusionPolicy(rng, cfg, with_taps=True),
        )

    def components(self) -> dict:
        return {
            "planner": self.planner,
            "generator": self.generator,
            "former": self.former,
            "policy": self.policy,
        }

    def named_parameters(self):
        for prefix, mod in self.components().items():
            yield from mod.named_parameters(prefix=prefix + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def save(self, path, step: int = 0) -> None:
        save_checkpoint(path, self.state_arrays(), config=self.cfg.to_dict(), step=step)

    @staticmethod
    def load(path) -> tuple["ModelBundle", dict]:
        arrays, header = load_checkpoint(path)
        cfg = ModelConfig.from_dict(header["config"])
        bundle = ModelBundle.build(cfg, seed=0)
        for name, p in bundle.named_parameters():
            if name not in arrays:
                raise TrainError(f"checkpoint missing parameter {name!r}")
            p.data = arrays[name]
        return bundle, header


@dataclass
class Batch:
    tokens: np.ndarray    # (B, L_i) int
    history: np.ndarray   # (B, k, V, V, 3)
    current: np.ndarray   # (B, 3, V, V, 3) left/front/right
    future: np.ndarray    # (B, N, V, V, 3)
    actions: np.ndarray   # (B, N, 5) encoded rows


def make_batch(samples: list[tuple[Episode, int]], cfg: ModelConfig) -> Batch:
    """Assemble training arrays from (episode, step-index) pairs."""
    toks, hist, cur, fut, act = [], [], [], [], []
    for ep, i in samples:
        toks.append(tokenize(ep.instruction, max_len=cfg.max_instruction_len))
        hist.append(np.stack(ep.history_frames(i, cfg.history_len)))
        obs = ep.observation(i)
        cur.append(np.stack([obs.left, obs.front, obs.right]))
        fut.append(np.stack(ep.future_frames(i, cfg.horizon)))
        steps = ep.action_targets(i, cfg.horizon)
        act.append(np.stack([encode_action(s).as_array() for s in steps]))
    return Batch(
        np.asarray(toks, dtype=np.intp),
        np.stack(hist).astype(np.float64),
        np.stack(cur).astype(np.float64),
        np.stack(fut).astype(np.float64),
        np.stack(act).astype(np.float64),
    )


def sample_batch(episodes: list[Episode], batch_size: int, cfg: ModelConfig,
                 rng: np.random.Generator) -> Batch:
    samples = []
    for _ in range(batch_size):
        ep = episodes[int(rng.integers(len(episodes)))]
        i = int(rng.integers(ep.num_steps))
        samples.append((ep, i))
    return make_batch(samples, cfg)


def _stage_parameters(bundle: ModelBundle, tc: TrainConfig) -> None:
    """Apply the stage's freeze pattern in place."""
    for mod in bundle.components().values():
        mod.freeze()
    if tc.stage == "1a":
        bundle.generator.unfreeze()
    elif tc.stage == "1b":
        (bundle.former if tc.variant == "former" else bundle.policy).unfreeze()
    else:  # stage 2: everything that participates in the variant's total loss
        bundle.planner.unfreeze()
        bundle.generator.unfreeze()
        (bundle.former if tc.variant == "former" else bundle.policy).unfreeze()


def _step_losses(bundle: ModelBundle, tc: TrainConfig, batch: Batch,
                 rng: np.random.Generator) -> tuple[Tensor, dict, float]:
    """Returns (total loss tensor, per-component scalar dict, gamma rate)."""
    cfg = bundle.cfg
    C = bundle.planner(batch.tokens, batch.history, batch.current)
    if all(p.frozen for p in bundle.planner.parameters()):
        # frozen planner: cut the graph so backward stops at C
        C = replace(C, tokens=Tensor(C.tokens.data))
    parts: dict[str, float] = {}
    gamma_rate = 0.0

    def recon() -> Tensor:
        return bundle.generator.codec.reconstruction_loss(batch.future)

    if tc.stage == "1a":
        l_vg = vg_loss(bundle.generator, batch.history, batch.current, batch.future, C, rng)
        l_rec = recon()
        total = l_vg + l_rec * tc.recon_weight
        parts = {"vg": float(l_vg.data), "recon": float(l_rec.data)}
    elif tc.stage == "1b":
        if tc.variant == "former":
            fl = former_loss(bundle.former(C), batch.actions,
                             weights=tc.ph_weights, normalize=True)
            total = fl.total
            parts = {"pos": float(fl.pos.data), "angle": float(fl.angle.data),
                     "arrive": float(fl.arrive.data), "ph": float(fl.total.data)}
        else:
            total = diffusion_policy_loss(bundle.policy, batch.actions, C, rng)
            parts = {"ph": float(total.data)}
    else:  # stage 2
        if tc.variant == "former":
            l_vg = vg_loss(bundle.generator, batch.history, batch.current, batch.future, C, rng)
            fl = former_loss(bundle.former(C), batch.actions,
                             weights=tc.ph_weights, normalize=True)
            l_rec = recon()
            total = l_vg + fl.total * tc.lam + l_rec * tc.recon_weight
            parts = {"vg": float(l_vg.data), "ph": float(fl.total.data),
                     "recon": float(l_rec.data)}
        else:
            gate = (rng.random((batch.actions.shape[0], 1, 1)) < tc.mmfca_prob).astype(float)
            gamma_rate = float(gate.mean())
            l_vg, l_ph = joint_loss(
                bundle.generator, bundle.policy, batch.history, batch.current,
                batch.future, batch.actions, C, rng, gate=gate,
            )
            l_rec = recon()
            total = l_vg + l_ph * tc.lam + l_rec * tc.recon_weight
            parts = {"vg": float(l_vg.data), "ph": float(l_ph.data),
                     "recon": float(l_rec.data)}
    return total, parts, gamma_rate


def train_stage(
    tc: TrainConfig,
    cfg: ModelConfig,
    episodes: list[Episode],
    bundle: ModelBundle | None = None,
    out_dir=None,
) -> tuple[ModelBundle, list[dict]]:
    """Run one training stage; returns the bundle and the metrics log."""
    if bundle is None:
        bundle = ModelBundle.build(cfg, seed=tc.seed)
    _stage_parameters(bundle, tc)
    params = bundle.parameters()
    sched = CosineSchedule(tc.lr, tc.steps, tc.lr_floor_frac)
    opt = AdamW(params, weight_decay=tc.weight_decay, schedule=sched)
    rng = np.random.default_rng(tc.seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / f"metrics_stage{tc.stage}_{tc.variant}.jsonl", "w")
    metrics: list[dict] = []
    t_start = time.time()
    try:
        for s in range(tc.steps):
            batch = sample_batch(episodes, tc.batch_size, cfg, rng)
            for p in params:
                p.zero_grad()
            total, parts, gamma_rate = _step_losses(bundle, tc, batch, rng)
            if not np.isfinite(total.data):
                bad = [k for k, v in parts.items() if not np.isfinite(v)]
                raise TrainError(
                    f"non-finite loss at step {s} (components: {bad or 'total only'})"
                )
            total.backward()
            lr = opt.step()
            rec = {"step": s, "loss": float(total.data), **parts, "lr": lr,
                   "gamma_rate": gamma_rate, "wall": time.time() - t_start}
            metrics.append(rec)
            if log_fh is not None:
                log_fh.write(json.dumps(rec) + "\n")
            if out_dir is not None and tc.checkpoint_every > 0 and (s + 1) % tc.checkpoint_every == 0:
                bundle.save(out_dir / f"stage{tc.stage}_{tc.variant}.ckpt", step=s + 1)
    finally:
        if log_fh is not None:
            log_fh.close()
    if out_dir is not None:
        bundle.save(out_dir / f"stage{tc.stage}_{tc.variant}.ckpt", step=tc.steps)
    for mod in bundle.components().values():
        mod.unfreeze()
    return bundle, metrics


def overfit_probe(
    tc: TrainConfig,
    cfg: ModelConfig,
    batch: Batch,
    steps: int,
    bundle: ModelBundle | None = None,
) -> tuple[float, list[float]]:
    """Train on one fixed batch; returns (final loss, loss curve)."""
    if bundle is None:
        bundle = ModelBundle.build(cfg, seed=tc.seed)
    _stage_parameters(bundle, tc)
    params = bundle.parameters()
    opt = AdamW(params, lr=tc.lr, weight_decay=0.0)
    rng = np.random.default_rng(tc.seed)
    curve = []
    for _ in range(steps):
        for p in params:
            p.zero_grad()
        total, _, _ = _step_losses(bundle, tc, batch, rng)
        total.backward()
        opt.step()
        curve.append(float(total.data))
    for mod in bundle.components().values():
        mod.unfreeze()
    return curve[-1], curve
