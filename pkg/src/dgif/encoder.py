"""Small trainable self-attention encoder and self-attentive pooling.

The encoder maps ``[CLS] u_1 .. u_n [SEP]`` to an ``(n+2) x d`` matrix of
contextual states. Each block is post-norm: attention and feed-forward
sublayers sit on residual paths followed by a parameter-free layer norm. The same code backs both the utterance encoder and the
label encoder; they only differ in their parameter dicts and vocabularies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import numerics as nx
from .errors import ContractError
from .numerics import Tensor

CLS, SEP, PAD, UNK = 0, 1, 2, 3
RESERVED = ("[CLS]", "[SEP]", "[PAD]", "[UNK]")


class Vocab:
    """Token <-> id map with the four reserved ids fixed at 0..3."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self.stoi.get(token)
        if idx is None:
            idx = self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return idx

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def ids(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def save(self, path: str | Path) -> None:
        from .io_utils import atomic_write_text

        atomic_write_text(path, "".join(t + "\n" for t in self.itos))

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:4]) != RESERVED:
            raise ContractError(f"{path}: first four lines must be {RESERVED}")
        return cls(lines[4:])


@dataclass(frozen=True)
class EncoderConfig:
    d: int = 64
    blocks: int = 2
    heads: int = 4
    max_len: int = 64
    pool_dim: int = 32
    ff_dim: int = 128

    def __post_init__(self):
        for name in ("d", "blocks", "heads", "max_len", "pool_dim", "ff_dim"):
            if getattr(self, name) < 1:
                raise ContractError(f"EncoderConfig.{name} must be >= 1")
        if self.d % self.heads:
            raise ContractError(f"d={self.d} not divisible by heads={self.heads}")


@dataclass
class HiddenStates:
    matrix: Tensor  # (n+2) x d; row 0 is CLS, row n+1 is SEP
    n: int

    @property
    def cls(self) -> Tensor:
        return self.matrix[0]

    @property
    def tokens(self) -> Tensor:
        return self.matrix[1 : self.n + 1]


@dataclass
class Pooled:
    vector: Tensor
    weights: Tensor


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = math.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_encoder(config: EncoderConfig, vocab_size: int, rng: np.random.Generator) -> dict[str, Tensor]:
    d, f = config.d, config.ff_dim
    p = {
        "tok_emb": uniform_init(rng, (vocab_size, d), 1),
        "pos_emb": uniform_init(rng, (config.max_len + 2, d), d),
    }
    for b in range(config.blocks):
        p[f"block{b}.qkv"] = uniform_init(rng, (d, 3 * d), d)
        p[f"block{b}.wo"] = uniform_init(rng, (d, d), d)
        p[f"block{b}.bo"] = uniform_init(rng, (d,), d)
        p[f"block{b}.ff1"] = uniform_init(rng, (d, f), d)
        p[f"block{b}.ff1_b"] = uniform_init(rng, (f,), d)
        p[f"block{b}.ff2"] = uniform_init(rng, (f, d), f)
        p[f"block{b}.ff2_b"] = uniform_init(rng, (d,), f)
    p["pool.w1"] = uniform_init(rng, (d, config.pool_dim), d)
    p["pool.w2"] = uniform_init(rng, (config.pool_dim, 1), config.pool_dim)
    return p


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row standardization without a learned gain or bias."""
    d = x.shape[-1]
    avg = Tensor(np.full((d, d), 1.0 / d))
    centered = x - x @ avg
    var = (centered * centered) @ avg
    return centered * nx.reciprocal(nx.sqrt(var + Tensor(np.full(var.shape, eps))))


def _attention_block(x: Tensor, p: Mapping[str, Tensor], b: int, config: EncoderConfig,
                     key_mask: np.ndarray | None) -> Tensor:
    T, d, H = x.shape[0], config.d, config.heads
    dk = d // H
    qkv = (x @ p[f"block{b}.qkv"]).reshape(T, 3, H, dk)
    qkv = nx.transpose(qkv, (1, 2, 0, 3))  # 3 x H x T x dk
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = (q @ nx.transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(dk))
    mask = None if key_mask is None else np.broadcast_to(key_mask, scores.shape)
    attn = nx.softmax(scores, axis=-1, mask=mask)
    ctx = nx.transpose(attn @ v, (1, 0, 2)).reshape(T, d)
    x = layer_norm(x + nx.add_bias(ctx @ p[f"block{b}.wo"], p[f"block{b}.bo"]))
    hidden = nx.leaky_relu(nx.add_bias(x @ p[f"block{b}.ff1"], p[f"block{b}.ff1_b"]))
    return layer_norm(x + nx.add_bias(hidden @ p[f"block{b}.ff2"], p[f"block{b}.ff2_b"]))


def encode(token_ids: Sequence[int], params: Mapping[str, Tensor], config: EncoderConfig,
           pad_to: int | None = None) -> HiddenStates:
    """Contextual states for ``[CLS] tokens [SEP]``.

    Ids outside the embedding table map to UNK. With ``pad_to``, the input is
    right-padded with PAD up to ``pad_to`` content positions and the padded
    keys are masked out; only the real ``n+2`` rows are returned.
    """
    n = len(token_ids)
    if n < 1:
        raise ContractError("encode needs at least one token")
    if n > config.max_len:
        raise ContractError(f"sequence of {n} tokens exceeds max_len={config.max_len}")
    emb = params["tok_emb"]
    vocab_size = emb.shape[0]
    ids = [CLS] + [t if 0 <= t < vocab_size else UNK for t in token_ids] + [SEP]
    key_mask = None
    if pad_to is not None and pad_to > n:
        if pad_to > config.max_len:
            raise ContractError(f"pad_to={pad_to} exceeds max_len={config.max_len}")
        ids += [PAD] * (pad_to - n)
        key_mask = np.zeros((len(ids), len(ids)), dtype=bool)
        key_mask[:, : n + 2] = True
    T = len(ids)
    x = nx.take_rows(emb, ids) + params["pos_emb"][:T]
    for b in range(config.blocks):
        x = _attention_block(x, params, b, config, key_mask)
    if T != n + 2:
        x = x[: n + 2]
    return HiddenStates(x, n)


def self_attentive_pool(h: HiddenStates | Tensor, params: Mapping[str, Tensor]) -> Pooled:
    """``a = softmax(tanh(H W1) w2)``, ``r = sum_i a_i H_i`` over every row."""
    H = h.matrix if isinstance(h, HiddenStates) else h
    T = H.shape[0]
    scores = (nx.tanh(H @ params["pool.w1"]) @ params["pool.w2"]).reshape(T)
    a = nx.softmax(scores, axis=0)
    r = (a.reshape(1, T) @ H).reshape(H.shape[1])
    return Pooled(r, a)
