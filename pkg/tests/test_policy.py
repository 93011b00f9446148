"""Action heads: query former, losses, diffusion policy, fusion taps, joint pass."""

import math

import numpy as np
import pytest

from navworld.autodiff import ShapeError, Tensor, grad_check
from navworld.planner import ContextEncoder
from navworld.policy import (
    ActionFormer,
    DiffusionPolicy,
    FusionTap,
    bce_with_logits,
    diffusion_policy_loss,
    flow_targets,
    former_loss,
    joint_loss,
    run_joint,
    sample_actions,
    sample_joint,
    tap_pairs,
)
from navworld.videogen import FlowError, VideoGenerator, grid_roles

from conftest import micro_model_cfg, random_batch


def make_context(cfg, batch, seed=0):
    enc = ContextEncoder(np.random.default_rng(seed), cfg)
    return enc(batch["tokens"], batch["history"], batch["current"])


# ---------------------------------------------------------------- former

def test_former_shape_determinism_and_context_sensitivity(micro_cfg):
    former = ActionFormer(np.random.default_rng(1), micro_cfg)
    batch = random_batch(micro_cfg)
    C = make_context(micro_cfg, batch)
    out = former(C)
    assert out.shape == (2, micro_cfg.horizon, 5)
    np.testing.assert_array_equal(out.data, former(C).data)
    from dataclasses import replace
    C2 = replace(C, tokens=C.tokens * 1.5)
    assert not np.allclose(out.data, former(C2).data)


def test_former_gradients_micro():
    cfg = micro_model_cfg()
    former = ActionFormer(np.random.default_rng(2), cfg)
    batch = random_batch(cfg, b=1, seed=3)
    C = make_context(cfg, batch, seed=2)
    gt = batch["actions"]

    def f():
        return former_loss(former(C), gt).total

    params = dict(former.named_parameters())
    subset = [params[n] for n in
              ["queries", "blocks.0.attn.wq.weight", "head.fc2.weight", "out_ln.gamma"]]
    assert grad_check(f, subset) <= 1e-4


# ---------------------------------------------------------------- losses

def test_former_loss_identities():
    gt = np.zeros((1, 2, 5))
    gt[..., 2] = 1.0  # cos=1, sin=0, arrive=0
    # perfect position+angle, zero logits -> pos 0, angle 0, arrive ln 2
    pred = Tensor(gt.copy())
    out = former_loss(pred, gt)
    assert float(out.pos.data) == 0.0
    assert float(out.angle.data) == pytest.approx(0.0, abs=1e-15)
    assert float(out.arrive.data) == pytest.approx(math.log(2.0), abs=1e-12)
    # antipodal heading -> angle term is exactly 2
    flipped = gt.copy()
    flipped[..., 2] = -1.0
    assert float(former_loss(Tensor(flipped), gt).angle.data) == pytest.approx(2.0)
    # weights scale linearly into the total
    out2 = former_loss(pred, gt, weights=(3.0, 5.0, 2.0))
    assert float(out2.total.data) == pytest.approx(2.0 * math.log(2.0), abs=1e-12)
    with pytest.raises(ShapeError):
        former_loss(Tensor(gt[..., :4]), gt)


def test_former_loss_normalize_flag():
    gt = np.zeros((1, 1, 5))
    gt[..., 2] = 1.0
    pred = gt.copy()
    pred[..., 2] = 7.0  # off the unit circle, same direction
    raw = former_loss(Tensor(pred), gt).angle.data
    normed = former_loss(Tensor(pred), gt, normalize=True).angle.data
    assert float(raw) == pytest.approx(-6.0)
    assert float(normed) == pytest.approx(0.0, abs=1e-9)


def test_bce_with_logits_matches_reference_and_is_stable():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 4))
    y = rng.integers(0, 2, size=(3, 4)).astype(float)
    ref = np.mean(np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0) - x * y)
    assert float(bce_with_logits(Tensor(x), y).data) == pytest.approx(ref, abs=1e-12)
    big = Tensor(np.array([[1000.0, -1000.0]]), requires_grad=True)
    val = bce_with_logits(big, np.array([[1.0, 0.0]]))
    assert float(val.data) == pytest.approx(0.0, abs=1e-12)
    val.backward()
    assert np.all(np.isfinite(big.grad))


# ---------------------------------------------------------------- fusion taps

def test_tap_pairs_alignment():
    assert tap_pairs(8, 6) == [(1, 2), (3, 3), (5, 4), (7, 5)]
    assert tap_pairs(4, 3) == [(1, 1), (3, 2)]
    assert tap_pairs(2, 6) == [(1, 5)]
    assert tap_pairs(0, 6) == []


def test_fusion_tap_identity_at_init_and_gate():
    rng = np.random.default_rng(5)
    tap = FusionTap(rng, 6, 2)
    a = Tensor(rng.standard_normal((2, 3, 6)))
    v = Tensor(rng.standard_normal((2, 4, 6)))
    a2, v2 = tap(a, v)
    np.testing.assert_array_equal(a2.data, a.data)
    np.testing.assert_array_equal(v2.data, v.data)
    # give the output projections mass, then gate per sample
    tap.action_from_video.wo.weight.data = rng.standard_normal((6, 6))
    tap.video_from_action.wo.weight.data = rng.standard_normal((6, 6))
    gate = np.array([1.0, 0.0]).reshape(2, 1, 1)
    a3, v3 = tap(a, v, gate=gate)
    assert not np.allclose(a3.data[0], a.data[0])
    np.testing.assert_array_equal(a3.data[1], a.data[1])
    np.testing.assert_array_equal(v3.data[1], v.data[1])


def test_fusion_tap_reads_pre_update_inputs():
    # expected update = cross-attention over the *original* other stream
    rng = np.random.default_rng(6)
    tap = FusionTap(rng, 4, 2)
    tap.action_from_video.wo.weight.data = rng.standard_normal((4, 4))
    tap.video_from_action.wo.weight.data = rng.standard_normal((4, 4))
    a = Tensor(rng.standard_normal((1, 2, 4)))
    v = Tensor(rng.standard_normal((1, 3, 4)))
    a2, v2 = tap(a, v)
    ha = tap.ln_action(a)
    hv = tap.ln_video(v)
    np.testing.assert_allclose(
        a2.data, a.data + tap.action_from_video(ha, hv).data, atol=1e-12)
    np.testing.assert_allclose(
        v2.data, v.data + tap.video_from_action(hv, ha).data, atol=1e-12)


# ---------------------------------------------------------------- diffusion policy

def test_policy_gamma0_bitwise_equals_tapfree(micro_cfg):
    rng = np.random.default_rng(7)
    with_taps = DiffusionPolicy(rng, micro_cfg, with_taps=True)
    bare = DiffusionPolicy(np.random.default_rng(99), micro_cfg, with_taps=False)
    shared = {k: v for k, v in with_taps.state_arrays().items()
              if not k.startswith("taps.")}
    bare.load_state_arrays(shared)
    batch = random_batch(micro_cfg)
    C = make_context(micro_cfg, batch, seed=8)
    a_t = Tensor(np.random.default_rng(9).standard_normal((2, micro_cfg.horizon, 5)))
    out_tapped = with_taps(a_t, 0.5, C, gamma=0).data
    out_bare = bare(a_t, 0.5, C).data
    np.testing.assert_array_equal(out_tapped, out_bare)


def test_policy_gamma_validation(micro_cfg):
    policy = DiffusionPolicy(np.random.default_rng(10), micro_cfg)
    batch = random_batch(micro_cfg)
    C = make_context(micro_cfg, batch, seed=10)
    a_t = Tensor(np.zeros((2, micro_cfg.horizon, 5)))
    with pytest.raises(ValueError):
        policy(a_t, 0.5, C, gamma=2)
    with pytest.raises(ValueError):
        policy(a_t, 0.5, C, gamma=1)  # no video states supplied
    with pytest.raises(ValueError):
        policy(a_t, 0.5, C, gamma=1, video_states=[Tensor(np.zeros((2, 1, micro_cfg.dim)))])
    with pytest.raises(ShapeError):
        policy(Tensor(np.zeros((2, micro_cfg.horizon + 1, 5))), 0.5, C)


def test_policy_loss_perfect_predictor_and_determinism(micro_cfg):
    policy = DiffusionPolicy(np.random.default_rng(11), micro_cfg)
    batch = random_batch(micro_cfg, b=1)
    C = make_context(micro_cfg, batch, seed=11)
    gt = batch["actions"]
    tg = flow_targets(gt)

    captured = {}
    real = policy.forward

    def perfect(a_t, t, Ctx, **kw):
        eps = (a_t.data - (1 - t) * tg) / t
        return Tensor(eps - tg)

    policy.forward = perfect
    try:
        loss = diffusion_policy_loss(policy, gt, C, np.random.default_rng(12), t=0.7)
    finally:
        policy.forward = real
    assert float(loss.data) == pytest.approx(0.0, abs=1e-18)

    a = diffusion_policy_loss(policy, gt, C, np.random.default_rng(13)).data
    b = diffusion_policy_loss(policy, gt, C, np.random.default_rng(13)).data
    assert a == b


def test_policy_loss_mc_zero_predictor_oracle(micro_cfg):
    # with v == 0 the loss is E|eps - A|^2 = 1 + mean(A^2) per entry
    policy = DiffusionPolicy(np.random.default_rng(14), micro_cfg)
    batch = random_batch(micro_cfg, b=1)
    C = make_context(micro_cfg, batch, seed=14)
    gt = batch["actions"]
    real = policy.forward
    policy.forward = lambda a_t, t, Ctx, **kw: Tensor(np.zeros_like(a_t.data))
    try:
        rng = np.random.default_rng(15)
        vals = [float(diffusion_policy_loss(policy, gt, C, rng).data)
                for _ in range(4000)]
    finally:
        policy.forward = real
    want = 1.0 + float(np.mean(flow_targets(gt) ** 2))
    assert np.mean(vals) == pytest.approx(want, rel=0.05)


def test_sample_actions_one_step_closed_form_and_determinism(micro_cfg):
    policy = DiffusionPolicy(np.random.default_rng(16), micro_cfg)
    batch = random_batch(micro_cfg)
    C = make_context(micro_cfg, batch, seed=16)
    out = sample_actions(policy, C, 1, np.random.default_rng(17))
    eps = np.random.default_rng(17).standard_normal((2, micro_cfg.horizon, 5))
    v = policy(Tensor(eps), 1.0, C).data
    np.testing.assert_allclose(out, eps - v, atol=1e-12)
    np.testing.assert_array_equal(
        out, sample_actions(policy, C, 1, np.random.default_rng(17)))
    with pytest.raises(ValueError):
        sample_actions(policy, C, 0, np.random.default_rng(0))


def test_sample_actions_nonfinite_aborts(micro_cfg):
    policy = DiffusionPolicy(np.random.default_rng(18), micro_cfg)
    policy.head.bias.data = np.full_like(policy.head.bias.data, np.nan)
    batch = random_batch(micro_cfg)
    C = make_context(micro_cfg, batch, seed=18)
    with pytest.raises(FlowError, match="step 0"):
        sample_actions(policy, C, 3, np.random.default_rng(19))


# ---------------------------------------------------------------- joint pass

def test_run_joint_zero_gate_matches_independent_forwards(micro_cfg):
    rng = np.random.default_rng(20)
    gen = VideoGenerator(rng, micro_cfg)
    policy = DiffusionPolicy(rng, micro_cfg)
    # give taps mass so gating actually matters
    for tap in policy.taps:
        tap.action_from_video.wo.weight.data = rng.standard_normal((micro_cfg.dim,) * 2)
        tap.video_from_action.wo.weight.data = rng.standard_normal((micro_cfg.dim,) * 2)
    batch = random_batch(micro_cfg)
    C = make_context(micro_cfg, batch, seed=20)
    roles = grid_roles(micro_cfg)
    latents = Tensor(rng.standard_normal(
        (2, len(roles), micro_cfg.tokens_per_frame, micro_cfg.latent_channels)))
    a_t = Tensor(rng.standard_normal((2, micro_cfg.horizon, 5)))

    gate0 = np.zeros((2, 1, 1))
    v_z, v_a = run_joint(gen, policy, latents, roles, a_t, 0.4, C, gate=gate0)
    v_z_solo, _ = gen.forward(latents, roles, 0.4, C)
    v_a_solo = policy(a_t, 0.4, C, gamma=0)
    np.testing.assert_allclose(v_z.data, v_z_solo.data, atol=1e-12)
    np.testing.assert_allclose(v_a.data, v_a_solo.data, atol=1e-12)

    gate1 = np.ones((2, 1, 1))
    v_z1, v_a1 = run_joint(gen, policy, latents, roles, a_t, 0.4, C, gate=gate1)
    assert not np.allclose(v_z1.data, v_z_solo.data)
    assert not np.allclose(v_a1.data, v_a_solo.data)

    # mixed gate: the gated-off sample matches its solo forward exactly
    gate_mix = np.array([1.0, 0.0]).reshape(2, 1, 1)
    v_zm, v_am = run_joint(gen, policy, latents, roles, a_t, 0.4, C, gate=gate_mix)
    np.testing.assert_allclose(v_zm.data[1], v_z_solo.data[1], atol=1e-12)
    np.testing.assert_allclose(v_am.data[1], v_a_solo.data[1], atol=1e-12)
    np.testing.assert_allclose(v_zm.data[0], v_z1.data[0], atol=1e-12)


def test_run_joint_requires_taps(micro_cfg):
    rng = np.random.default_rng(21)
    gen = VideoGenerator(rng, micro_cfg)
    policy = DiffusionPolicy(rng, micro_cfg, with_taps=False)
    batch = random_batch(micro_cfg)
    C = make_context(micro_cfg, batch, seed=21)
    roles = grid_roles(micro_cfg)
    latents = Tensor(np.zeros(
        (2, len(roles), micro_cfg.tokens_per_frame, micro_cfg.latent_channels)))
    with pytest.raises(ValueError):
        run_joint(gen, policy, latents, roles,
                  Tensor(np.zeros((2, micro_cfg.horizon, 5))), 0.5, C)


def test_joint_loss_and_gradients_through_taps(micro_cfg):
    rng = np.random.default_rng(22)
    gen = VideoGenerator(rng, micro_cfg)
    policy = DiffusionPolicy(rng, micro_cfg)
    batch = random_batch(micro_cfg, b=1)
    C = make_context(micro_cfg, batch, seed=22)
    l_vg, l_ph = joint_loss(gen, policy, batch["history"], batch["current"],
                            batch["future"], batch["actions"], C,
                            np.random.default_rng(23), t=0.5)
    total = l_vg + l_ph
    total.backward()
    # zero-init gates block upstream q/k/v grads, but the output projections
    # of every tap must receive gradient from both loss terms
    for tap in policy.taps:
        assert np.abs(tap.action_from_video.wo.weight.grad).max() > 0
        assert np.abs(tap.video_from_action.wo.weight.grad).max() > 0


def test_sample_joint_deterministic_and_counts(micro_cfg):
    rng = np.random.default_rng(24)
    gen = VideoGenerator(rng, micro_cfg)
    policy = DiffusionPolicy(rng, micro_cfg)
    batch = random_batch(micro_cfg)
    C = make_context(micro_cfg, batch, seed=24)
    a1, f1 = sample_joint(gen, policy, batch["history"], batch["current"], C, 2,
                          np.random.default_rng(25))
    a2, f2 = sample_joint(gen, policy, batch["history"], batch["current"], C, 2,
                          np.random.default_rng(25))
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(f1, f2)
    assert a1.shape == (2, micro_cfg.horizon, 5)
    assert f1.shape == (2, micro_cfg.horizon, micro_cfg.resolution,
                        micro_cfg.resolution, 3)
    assert f1.min() >= 0.0 and f1.max() <= 1.0


def test_policy_gradients_micro():
    cfg = micro_model_cfg(policy_blocks=2)
    policy = DiffusionPolicy(np.random.default_rng(26), cfg)
    batch = random_batch(cfg, b=1, seed=27)
    C = make_context(cfg, batch, seed=26)

    def f():
        return diffusion_policy_loss(policy, batch["actions"], C,
                                     np.random.default_rng(28), t=0.6)

    params = dict(policy.named_parameters())
    subset = [params[n] for n in
              ["in_proj.weight", "row_pos", "blocks.0.mod.weight",
               "blocks.1.attn.wk.weight", "head.weight"]]
    assert grad_check(f, subset) <= 1e-4
