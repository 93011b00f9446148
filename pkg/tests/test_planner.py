"""Context encoder: layout, sensitivity, determinism, gradients."""

import numpy as np
import pytest

from navworld.autodiff import ShapeError, grad_check
from navworld.planner import ContextEncoder, segment_layout

from conftest import micro_model_cfg, random_batch


@pytest.fixture
def enc(micro_cfg):
    return ContextEncoder(np.random.default_rng(0), micro_cfg)


def test_output_shape_and_segment_layout(micro_cfg, enc):
    batch = random_batch(micro_cfg)
    C = enc(batch["tokens"], batch["history"], batch["current"])
    L = micro_cfg.max_instruction_len + (micro_cfg.history_len + 3) * micro_cfg.tokens_per_frame
    assert C.tokens.shape == (2, L, micro_cfg.dim)
    segs = segment_layout(micro_cfg)
    assert segs[0] == ("instruction", 0, micro_cfg.max_instruction_len)
    assert segs[-1][0] == "current_right" and segs[-1][2] == L
    # contiguous, ordered, non-overlapping
    for (_, s0, e0), (_, s1, _) in zip(segs, segs[1:]):
        assert e0 == s1 and s0 < e0
    assert C.segment_slice("history_0").start == micro_cfg.max_instruction_len


def test_determinism(micro_cfg, enc):
    batch = random_batch(micro_cfg)
    a = enc(batch["tokens"], batch["history"], batch["current"]).tokens.data
    b = enc(batch["tokens"], batch["history"], batch["current"]).tokens.data
    np.testing.assert_array_equal(a, b)


def test_instruction_swap_changes_instruction_segment(micro_cfg, enc):
    batch = random_batch(micro_cfg)
    other = batch["tokens"].copy()
    other[0] = (other[0] + 5) % 40
    a = enc(batch["tokens"], batch["history"], batch["current"]).tokens.data
    b = enc(other, batch["history"], batch["current"]).tokens.data
    sl = segment_layout(micro_cfg)[0]
    assert not np.allclose(a[0, sl[1]:sl[2]], b[0, sl[1]:sl[2]])


def test_history_permutation_changes_C(micro_cfg, enc):
    batch = random_batch(micro_cfg)
    hist = batch["history"]
    # make the two history frames distinct, then swap them
    hist[0, 0] = 0.25
    hist[0, 1] = 0.75
    swapped = hist[:, ::-1].copy()
    a = enc(batch["tokens"], hist, batch["current"]).tokens.data
    b = enc(batch["tokens"], swapped, batch["current"]).tokens.data
    assert not np.allclose(a, b)


def test_shape_validation(micro_cfg, enc):
    batch = random_batch(micro_cfg)
    with pytest.raises(ShapeError):
        enc(batch["tokens"][:, :-1], batch["history"], batch["current"])
    with pytest.raises(ShapeError):
        enc(batch["tokens"], batch["history"][:, :1], batch["current"])
    with pytest.raises(ShapeError):
        enc(batch["tokens"], batch["history"], batch["current"][..., :4, :])


def test_gradients_micro():
    cfg = micro_model_cfg(planner_blocks=1)
    enc = ContextEncoder(np.random.default_rng(1), cfg)
    batch = random_batch(cfg, b=1, seed=3)

    def f():
        C = enc(batch["tokens"], batch["history"], batch["current"])
        return (C.tokens ** 2.0).mean()

    params = dict(enc.named_parameters())
    subset = [params[n] for n in
              ["token_embed.weight", "patch_embed.weight", "slot_tags",
               "blocks.0.attn.wv.weight", "final_ln.gamma"]]
    assert grad_check(f, subset) <= 1e-4
