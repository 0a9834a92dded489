"""Joint objective, Adam, and the training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import numerics as nx
from .config import TrainConfig
from .data_io import Sample, build_label_vocab, build_vocab
from .errors import DataError, DivergenceError
from .evaluation import EvalReport, evaluate
from .label_space import LabelSpace, l_inter, l_intra_paired, l_re
from .model import DGIFModel, ModelParams, ablate
from .numerics import Tape, Tensor

log = logging.getLogger(__name__)

COMPONENTS = ("l_id", "l_sf", "l_ind", "l_re_i", "l_re_s")


def intent_bce(logits: Tensor, target: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against a multi-hot target."""
    return (nx.softplus(logits) - logits * Tensor(target)).mean()


def token_ce(logits: Tensor, gold: Sequence[int]) -> Tensor:
    """Mean categorical cross-entropy over rows."""
    rows = np.arange(len(gold))
    return -(nx.log_softmax(logits, axis=-1)[rows, np.asarray(gold)].mean())


def count_ce(logits: Tensor, count: int) -> Tensor:
    return -(nx.log_softmax(logits, axis=0)[count - 1])


@dataclass
class LossBreakdown:
    total: Tensor
    parts: dict[str, float]


def combine(config: TrainConfig, l_id, l_sf, l_ind, l_re_i, l_re_s):
    """``a(L_ID + g L_RE^I) + b(L_SF + g L_RE^S) + (1-a) L_IND`` with ablation-aware gamma."""
    a, b, g = config.alpha, config.beta, ablate(config).gamma
    return a * (l_id + g * l_re_i) + b * (l_sf + g * l_re_s) + (1.0 - a) * l_ind


def sample_targets(model: DGIFModel, sample: Sample) -> tuple[list[int], list[int]]:
    try:
        intents = model.intents.indices(sample.intents)
        slots = model.slots.indices(sample.slots)
    except (KeyError, ValueError) as exc:
        raise DataError(f"sample {' '.join(sample.tokens)!r} has a label unknown to the model: {exc}") from None
    if len(intents) > model.config.max_intents:
        raise DataError(
            f"sample {' '.join(sample.tokens)!r} has {len(intents)} intents, "
            f"max_intents={model.config.max_intents}"
        )
    return intents, slots


def joint_loss(batch: Sequence[Sample], model: DGIFModel,
               spaces: tuple[LabelSpace, LabelSpace] | None = None,
               teacher_forcing: bool | None = None) -> LossBreakdown:
    """Batch-mean of each component, combined by the joint objective.

    Per utterance: L_ID is the mean BCE over intent labels, L_SF the mean
    token CE, L_IND the CE of the count head, and L_RE^phi uses the gold
    intents (phi=I) or the distinct gold slot labels (phi=S) for its inter
    term. The slot intra term pairs each token with its own gold tag under
    ``slot_intra="token"``, or with every distinct gold tag under
    ``"all_pairs"``. Unless ``lar_target_grad`` is set, gold label rows
    enter the intra terms as constants.
    """
    if not batch:
        raise DataError("joint_loss needs a non-empty batch")
    config = model.config
    if spaces is None:
        spaces = model.label_spaces()
    if teacher_forcing is None:
        teacher_forcing = config.teacher_forcing
    space_i, space_s = spaces
    use_lar = ablate(config).use_lar
    sums: dict[str, Tensor | float] = {k: 0.0 for k in COMPONENTS}
    n_intents = len(model.intents)
    for sample in batch:
        gold_i, gold_s = sample_targets(model, sample)
        f = model.forward(sample.tokens, spaces, gold_i if teacher_forcing else None)
        target = np.zeros(n_intents)
        target[gold_i] = 1.0
        sums["l_id"] = sums["l_id"] + intent_bce(f.intent_logits, target)
        sums["l_sf"] = sums["l_sf"] + token_ce(f.slot_logits, gold_s)
        sums["l_ind"] = sums["l_ind"] + count_ce(f.count_logits, len(gold_i))
        if use_lar:
            slot_set = list(dict.fromkeys(gold_s))
            sums["l_re_i"] = sums["l_re_i"] + l_re(space_i, f.r_hat, gold_i, config.lam, config.exclude_self_pairs,
                                                     config.lar_target_grad)
            if config.slot_intra == "token":
                basis = space_s.basis if config.lar_target_grad else Tensor(space_s.basis.data)
                re_s = l_inter(space_s, slot_set, config.exclude_self_pairs)
                if config.lam:
                    re_s = re_s + config.lam * l_intra_paired(f.tokens_hat, nx.take_rows(basis, gold_s))
            else:
                re_s = l_re(space_s, f.tokens_hat, slot_set, config.lam, config.exclude_self_pairs,
                            config.lar_target_grad)
            sums["l_re_s"] = sums["l_re_s"] + re_s
    scale = 1.0 / len(batch)
    means = {k: (v * scale if isinstance(v, Tensor) else Tensor(0.0)) for k, v in sums.items()}
    total = combine(config, means["l_id"], means["l_sf"], means["l_ind"], means["l_re_i"], means["l_re_s"])
    parts = {k: v.item() for k, v in means.items()}
    parts["total"] = total.item()
    return LossBreakdown(total, parts)


class Adam:
    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, grad_clip: float | None = None):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.grad_clip = grad_clip
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        scale = 1.0
        if self.grad_clip is not None:
            norm = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in self.params.values()
                                 if p.grad is not None))
            if norm > self.grad_clip:
                scale = self.grad_clip / norm
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            if p.grad is None or not p.requires_grad:
                continue
            g = p.grad * scale
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EpochLog:
    epoch: int
    losses: dict[str, float]
    val: EvalReport
    step_losses: list[float] = field(default_factory=list)

    def line(self) -> str:
        parts = [f"epoch={self.epoch}"]
        parts += [f"{k}={self.losses[k]!r}" for k in ("total",) + COMPONENTS]
        parts += [
            f"val_slot_f1={self.val.slot_f1!r}",
            f"val_intent_acc={self.val.intent_acc!r}",
            f"val_overall_acc={self.val.overall_acc!r}",
        ]
        return " ".join(parts)


@dataclass
class TrainResult:
    model: DGIFModel
    log: list[EpochLog]
    best_epoch: int
    best_overall: float

    def log_text(self) -> str:
        return "".join(e.line() + "\n" for e in self.log)


def _snapshot(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in params.items()}


def _restore(params: ModelParams, snap: Mapping[str, np.ndarray]) -> None:
    for k, p in params.items():
        p.data = snap[k].copy()


def build_model(train_samples: Sequence[Sample], config: TrainConfig,
                overrides: Mapping[str, str] | None = None) -> DGIFModel:
    vocab, intents, slots = build_vocab(train_samples, overrides)
    return DGIFModel(config, vocab, build_label_vocab(intents, slots), intents, slots, overrides=overrides)


def train(train_samples: Sequence[Sample], config: TrainConfig,
          val_samples: Sequence[Sample] | None = None,
          overrides: Mapping[str, str] | None = None,
          checkpoint_dir: str | Path | None = None,
          on_epoch: Callable[[EpochLog], None] | None = None) -> TrainResult:
    """Train from scratch; the returned model holds the best-validation weights.

    Without ``val_samples`` model selection uses the training samples.
    """
    from .checkpoint import save_checkpoint

    if not train_samples:
        raise DataError("training set is empty")
    model = build_model(train_samples, config, overrides)
    for s in train_samples:
        sample_targets(model, s)
    val = list(val_samples) if val_samples is not None else list(train_samples)
    opt = Adam(model.params, config.lr, grad_clip=config.grad_clip)
    rng = np.random.default_rng(config.seed)
    best = (-1.0, 0, _snapshot(model.params))
    history: list[EpochLog] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_samples))
        sums = {k: 0.0 for k in ("total",) + COMPONENTS}
        step_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train_samples[i] for i in order[start : start + config.batch_size]]
            last_good = _snapshot(model.params)
            opt.zero_grad()
            with Tape() as tape:
                loss = joint_loss(batch, model)
                if not math.isfinite(loss.parts["total"]):
                    _restore(model.params, last_good)
                    if checkpoint_dir is not None:
                        save_checkpoint(checkpoint_dir, model)
                    raise DivergenceError(f"loss became non-finite in epoch {epoch}")
                tape.backward(loss.total)
            opt.step()
            if not all(np.all(np.isfinite(p.data)) for p in model.params.values()):
                _restore(model.params, last_good)
                if checkpoint_dir is not None:
                    save_checkpoint(checkpoint_dir, model)
                raise DivergenceError(f"parameters became non-finite in epoch {epoch}")
            step_losses.append(loss.parts["total"])
            for k in sums:
                sums[k] += loss.parts[k] * len(batch)
        losses = {k: v / len(train_samples) for k, v in sums.items()}
        report = evaluate(val, model.predict(val))
        entry = EpochLog(epoch, losses, report, step_losses)
        history.append(entry)
        log.debug(entry.line())
        if on_epoch is not None:
            on_epoch(entry)
        if report.overall_acc > best[0]:
            best = (report.overall_acc, epoch, _snapshot(model.params))
    _restore(model.params, best[2])
    if checkpoint_dir is not None:
        save_checkpoint(checkpoint_dir, model)
    return TrainResult(model, history, best[1], best[0])
