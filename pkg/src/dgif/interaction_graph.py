"""Dynamic intent-slot interaction graph and graph-attention propagation.

Node order everywhere: the ``m`` selected intents first, then the ``n``
tokens. Edge sets use 0-based indices within each node class.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import numerics as nx
from .encoder import uniform_init
from .errors import ContractError, DimensionError
from .label_space import LabelSpace
from .numerics import Tensor

ATTENTION_SLOPE = 0.2


def relevance(h_hat: Tensor, intent_embs: Tensor) -> Tensor:
    """Token-intent relevance, normalized over tokens for each intent (n x m)."""
    if h_hat.ndim != 2 or intent_embs.ndim != 2 or h_hat.shape[1] != intent_embs.shape[1]:
        raise DimensionError(f"relevance: {h_hat.shape} vs {intent_embs.shape}")
    d = h_hat.shape[1]
    scores = (h_hat @ intent_embs.T) * (1.0 / math.sqrt(d))
    return nx.softmax(scores, axis=0)


@dataclass
class InteractionGraph:
    intent_ids: list[int]
    intent_states: Tensor
    slot_states: Tensor
    relevance: np.ndarray
    delta: float
    window: int
    intent_intent: set[tuple[int, int]] = field(default_factory=set)
    slot_slot: set[tuple[int, int]] = field(default_factory=set)
    intent_slot: set[tuple[int, int]] = field(default_factory=set)  # (token, intent)

    @property
    def m(self) -> int:
        return len(self.intent_ids)

    @property
    def n(self) -> int:
        return self.slot_states.shape[0]

    def adjacency(self, self_loops: bool = True) -> np.ndarray:
        m, N = self.m, self.m + self.n
        adj = np.zeros((N, N), dtype=bool)
        for a, b in self.intent_intent:
            adj[a, b] = adj[b, a] = True
        for i, j in self.slot_slot:
            adj[m + i, m + j] = adj[m + j, m + i] = True
        for i, j in self.intent_slot:
            adj[m + i, j] = adj[j, m + i] = True
        if self_loops:
            np.fill_diagonal(adj, True)
        return adj


def slot_edges(n: int, window: int) -> set[tuple[int, int]]:
    return {(i, j) for i in range(n) for j in range(i + 1, min(n, i + window + 1))}


def build_graph(h_hat: Tensor, selected_intents: Sequence[int], intent_space: LabelSpace,
                window: int = 1, delta: float | None = None) -> InteractionGraph:
    """``delta=None`` uses the uniform-relevance level ``1/n``; for a single
    token that level is 1, so the token gets no intent edges."""
    m, n = len(selected_intents), h_hat.shape[0]
    if m < 1:
        raise ContractError("interaction graph needs at least one intent node")
    if n < 1:
        raise ContractError("interaction graph needs at least one token")
    if window < 0:
        raise ContractError(f"window must be >= 0, got {window}")
    if delta is None:
        delta = 1.0 / n
    elif not 0.0 <= delta < 1.0:
        raise ContractError(f"delta must lie in [0, 1), got {delta}")
    intent_states = nx.take_rows(intent_space.basis, list(selected_intents))
    rel = relevance(h_hat, intent_states).data
    return InteractionGraph(
        intent_ids=list(selected_intents),
        intent_states=intent_states,
        slot_states=h_hat,
        relevance=rel,
        delta=delta,
        window=window,
        intent_intent={(a, b) for a in range(m) for b in range(a + 1, m)},
        slot_slot=slot_edges(n, window),
        intent_slot={(i, j) for i in range(n) for j in range(m) if rel[i, j] > delta},
    )


@dataclass
class GatParams:
    """Per layer, per head: node transform ``w`` (d x d) and the two halves of
    the attention vector (``a_src``, ``a_dst``, each d x 1)."""

    weights: list[list[Tensor]]
    att_src: list[list[Tensor]]
    att_dst: list[list[Tensor]]

    def __post_init__(self):
        if len(self.weights) < 1:
            raise ContractError("GAT needs at least one layer")

    @property
    def layers(self) -> int:
        return len(self.weights)

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], layers: int, heads: int = 1,
                    prefix: str = "gat") -> "GatParams":
        get = lambda l, h, k: params[f"{prefix}.{l}.h{h}.{k}"]
        return cls(
            [[get(l, h, "w") for h in range(heads)] for l in range(layers)],
            [[get(l, h, "a_src") for h in range(heads)] for l in range(layers)],
            [[get(l, h, "a_dst") for h in range(heads)] for l in range(layers)],
        )


def init_gat(d: int, layers: int, heads: int, rng: np.random.Generator,
             prefix: str = "gat") -> dict[str, Tensor]:
    p = {}
    for l in range(layers):
        for h in range(heads):
            # gain sqrt(6) keeps state scale through LeakyReLU layers
            w = uniform_init(rng, (d, d), d)
            w.data *= math.sqrt(6.0)
            p[f"{prefix}.{l}.h{h}.w"] = w
            p[f"{prefix}.{l}.h{h}.a_src"] = uniform_init(rng, (d, 1), 2 * d)
            p[f"{prefix}.{l}.h{h}.a_dst"] = uniform_init(rng, (d, 1), 2 * d)
    return p


@dataclass
class GatOutput:
    slot_states: Tensor
    intent_states: Tensor
    alphas: list[np.ndarray]  # per layer, N x N, head-averaged


def gat_forward(graph: InteractionGraph, params: GatParams, activation: str = "leaky_relu",
                slope: float = nx.DEFAULT_SLOPE) -> GatOutput:
    """Propagate node states; every neighborhood includes the node itself and
    one softmax runs jointly over its slot and intent neighbors."""
    m, n = graph.m, graph.n
    N = m + n
    adj = graph.adjacency(self_loops=True)
    ones_row, ones_col = Tensor(np.ones((1, N))), Tensor(np.ones((N, 1)))
    x = nx.concat([graph.intent_states, graph.slot_states], axis=0)
    alphas = []
    for l in range(params.layers):
        heads = len(params.weights[l])
        agg, alpha_sum = None, np.zeros((N, N))
        for h in range(heads):
            z = x @ params.weights[l][h]
            src = z @ params.att_src[l][h]
            dst = z @ params.att_dst[l][h]
            logits = nx.leaky_relu(src @ ones_row + ones_col @ dst.T, ATTENTION_SLOPE)
            alpha = nx.softmax(logits, axis=1, mask=adj)
            alpha_sum += alpha.data
            out = alpha @ z
            agg = out if agg is None else agg + out
        if heads > 1:
            agg = agg * (1.0 / heads)
        if activation == "leaky_relu":
            x = nx.leaky_relu(agg, slope)
        elif activation == "sigmoid":
            x = nx.sigmoid(agg)
        else:
            raise ContractError(f"unknown GAT activation {activation!r}")
        alphas.append(alpha_sum / heads)
    return GatOutput(x[m:], x[:m], alphas)
