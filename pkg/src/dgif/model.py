"""The joint model: parameters, per-utterance forward pass, and prediction."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import numerics as nx
from .config import TrainConfig
from .data_io import Sample
from .encoder import HiddenStates, Pooled, Vocab, encode, init_encoder, self_attentive_pool, uniform_init
from .intent_decoder import count_logits, intent_logits, predicted_count, select_top_k
from .interaction_graph import GatOutput, GatParams, InteractionGraph, build_graph, gat_forward, init_gat
from .label_space import LabelSet, LabelSpace, embed_labels, inject
from .numerics import Tensor
from .slot_decoder import slot_logits

ModelParams = dict[str, Tensor]


@dataclass(frozen=True)
class Architecture:
    """Effective architecture after ablation switches are applied."""

    gamma: float
    use_lsi: bool
    use_gil: bool
    use_lar: bool

    def describe(self) -> str:
        parts = [
            "label-aware regularization " + ("on" if self.use_lar else "off (gamma=0)"),
            "label-semantic injection " + ("on" if self.use_lsi else "off (raw representations)"),
            "graph interaction " + ("on" if self.use_gil else "off (vanilla token->intent attention)"),
        ]
        return "; ".join(parts)


def ablate(config: TrainConfig) -> Architecture:
    return Architecture(
        gamma=0.0 if config.disable_lar else config.gamma,
        use_lsi=not config.disable_lsi,
        use_gil=not config.disable_gil,
        use_lar=not config.disable_lar,
    )


def init_params(config: TrainConfig, vocab_size: int, label_vocab_size: int,
                n_intents: int, n_slots: int, rng: np.random.Generator) -> ModelParams:
    d, enc = config.d, config.encoder()
    p: ModelParams = {}
    p.update({f"utt.{k}": v for k, v in init_encoder(enc, vocab_size, rng).items()})
    p.update({f"lab.{k}": v for k, v in init_encoder(enc, label_vocab_size, rng).items()})
    p["intent.w_u"] = uniform_init(rng, (d, d), d)
    p["intent.b_u"] = uniform_init(rng, (d,), d)
    p["intent.w_i"] = uniform_init(rng, (d, n_intents), d)
    p["intent.b_i"] = uniform_init(rng, (n_intents,), d)
    p["count.w"] = uniform_init(rng, (d, config.max_intents), d)
    p["count.b"] = uniform_init(rng, (config.max_intents,), d)
    p.update(init_gat(d, config.gat_layers, config.gat_heads, rng))
    p["slot.w"] = uniform_init(rng, (d, n_slots), d)
    p["slot.b"] = uniform_init(rng, (n_slots,), d)
    return p


def _subdict(params: ModelParams, prefix: str) -> dict[str, Tensor]:
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


@dataclass
class Forward:
    hidden: HiddenStates
    pooled: Pooled
    r_hat: Tensor
    tokens_hat: Tensor
    intent_logits: Tensor
    count_logits: Tensor
    selected: list[int]
    slot_logits: Tensor
    graph: InteractionGraph | None = None
    gat: GatOutput | None = None
    attention: Tensor | None = None  # token -> intent weights when the graph is ablated


class DGIFModel:
    def __init__(self, config: TrainConfig, vocab: Vocab, label_vocab: Vocab,
                 intents: LabelSet, slots: LabelSet, params: ModelParams | None = None,
                 overrides: Mapping[str, str] | None = None):
        self.config = config
        self.arch = ablate(config)
        self.vocab = vocab
        self.label_vocab = label_vocab
        self.intents = intents
        self.slots = slots
        self.overrides = dict(overrides) if overrides else None
        if params is None:
            rng = np.random.default_rng(config.seed)
            params = init_params(config, len(vocab), len(label_vocab), len(intents), len(slots), rng)
        self.params = params
        self.utt = _subdict(params, "utt.")
        self.lab = _subdict(params, "lab.")
        self.gat = GatParams.from_params(params, config.gat_layers, config.gat_heads)
        self.encoder_config = config.encoder()

    def label_spaces(self) -> tuple[LabelSpace, LabelSpace]:
        cfg = self.config
        return (
            embed_labels(self.intents, self.label_vocab, self.lab, self.encoder_config, cfg.ridge),
            embed_labels(self.slots, self.label_vocab, self.lab, self.encoder_config, cfg.ridge),
        )

    def forward(self, tokens: Sequence[str], spaces: tuple[LabelSpace, LabelSpace],
                gold_intents: Sequence[int] | None = None) -> Forward:
        """One utterance. ``gold_intents`` (teacher forcing) replaces the
        predicted intents as graph nodes."""
        cfg = self.config
        space_i, space_s = spaces
        hidden = encode(self.vocab.ids(tokens), self.utt, self.encoder_config)
        pooled = self_attentive_pool(hidden, self.utt)
        if self.arch.use_lsi:
            r_hat = inject(pooled.vector, space_i).projected
            rows_hat = inject(hidden.matrix, space_s).projected
        else:
            r_hat, rows_hat = pooled.vector, hidden.matrix
        n = hidden.n
        tokens_hat = rows_hat[1 : n + 1]
        il = intent_logits(r_hat, self.params)
        cl = count_logits(hidden.cls, self.params)
        if gold_intents is not None:
            selected = list(gold_intents)
        else:
            k = min(predicted_count(cl), len(self.intents))
            selected = select_top_k(il, k)
        node_basis = space_i.basis if cfg.node_grad else Tensor(space_i.basis.data)
        out = Forward(hidden, pooled, r_hat, tokens_hat, il, cl, selected, None)
        if self.arch.use_gil:
            node_space = LabelSpace(space_i.task, space_i.names, node_basis, space_i.gram, space_i.ridge)
            out.graph = build_graph(tokens_hat, selected, node_space, cfg.window, cfg.delta)
            out.gat = gat_forward(out.graph, self.gat, cfg.gat_activation, cfg.slope)
            states = out.gat.slot_states
        else:
            E = nx.take_rows(node_basis, selected)
            out.attention = nx.softmax((tokens_hat @ E.T) * (1.0 / math.sqrt(cfg.d)), axis=1)
            states = tokens_hat + out.attention @ E
        out.slot_logits = slot_logits(states, self.params)
        return out

    def predict(self, samples: Sequence[Sample | Sequence[str]]) -> list[Sample]:
        """Predicted samples (tokens kept, tags and intents replaced). Runs without a tape."""
        spaces = self.label_spaces()
        preds = []
        for s in samples:
            tokens = s.tokens if isinstance(s, Sample) else tuple(s)
            f = self.forward(tokens, spaces)
            tags = tuple(self.slots.names[i] for i in np.argmax(f.slot_logits.data, axis=1))
            intents = tuple(self.intents.names[i] for i in f.selected)
            preds.append(Sample(tokens, tags, intents))
        return preds
