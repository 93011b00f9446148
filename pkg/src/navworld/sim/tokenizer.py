"""Closed-vocabulary word tokenizer for templated instructions.

Vocabulary ids are stable across runs: special tokens first, then the
template vocabulary in sorted order. Unknown words map to UNK, never crash.
"""

from __future__ import annotations

from .worldmap import CATEGORIES, COLOR_TABLE

PAD, UNK, BOS, EOS = 0, 1, 2, 3

_TEMPLATE_WORDS = [
    "go", "to", "the", "find", "a", "reach", "navigate",
    "turn", "left", "right", "then", "ahead", "behind",
    "is", "on", "your", "it", "and", "head", "straight", "towards",
]


def build_vocab(extra_words=()) -> dict[str, int]:
    words = sorted(set(_TEMPLATE_WORDS) | set(COLOR_TABLE) | set(CATEGORIES) | set(extra_words))
    vocab = {"<pad>": PAD, "<unk>": UNK, "<bos>": BOS, "<eos>": EOS}
    for i, w in enumerate(words):
        vocab[w] = 4 + i
    if len(vocab) > 256:
        raise ValueError(f"vocabulary too large: {len(vocab)} > 256")
    return vocab


_VOCAB = build_vocab()
_INVERSE = {i: w for w, i in _VOCAB.items()}

VOCAB_SIZE = 256  # fixed embedding table size; actual vocab is smaller


def tokenize(instruction: str, max_len: int | None = None) -> list[int]:
    ids = [BOS] + [_VOCAB.get(w, UNK) for w in instruction.split()] + [EOS]
    if max_len is not None:
        ids = ids[:max_len] + [PAD] * max(0, max_len - len(ids))
    return ids


def detokenize(ids) -> str:
    words = [_INVERSE.get(int(i), "<unk>") for i in ids]
    return " ".join(w for w in words if w not in ("<bos>", "<eos>", "<pad>"))
