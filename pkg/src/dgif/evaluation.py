"""Slot F1 (CoNLL span level), intent accuracy, and overall accuracy."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ContractError

Span = tuple[int, int, str]


def bio_spans(tags: Sequence[str]) -> list[Span]:
    """``(start, end_exclusive, type)`` spans; an I-x that cannot continue the
    open span starts a new one."""
    spans: list[Span] = []
    start, kind = None, None
    for i, tag in enumerate(tags):
        if tag == "O" or "-" not in tag:
            if kind is not None:
                spans.append((start, i, kind))
            start, kind = None, None
            continue
        prefix, typ = tag.split("-", 1)
        if prefix == "I" and kind == typ:
            continue
        if kind is not None:
            spans.append((start, i, kind))
        start, kind = i, typ
    if kind is not None:
        spans.append((start, len(tags), kind))
    return spans


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class SlotScore:
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    per_class: dict[str, dict[str, float]] = field(default_factory=dict)


def slot_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> SlotScore:
    if len(gold) != len(pred):
        raise ContractError(f"{len(gold)} gold sequences vs {len(pred)} predicted")
    tp, fp, fn = Counter(), Counter(), Counter()
    for k, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ContractError(f"sequence {k}: gold length {len(g)} vs predicted {len(p)}")
        gs, ps = set(bio_spans(g)), set(bio_spans(p))
        for s in gs & ps:
            tp[s[2]] += 1
        for s in ps - gs:
            fp[s[2]] += 1
        for s in gs - ps:
            fn[s[2]] += 1
    per_class = {}
    for c in sorted(set(tp) | set(fp) | set(fn)):
        p, r, f = _prf(tp[c], fp[c], fn[c])
        per_class[c] = {"precision": p, "recall": r, "f1": f, "tp": tp[c], "fp": fp[c], "fn": fn[c]}
    T, F, N = sum(tp.values()), sum(fp.values()), sum(fn.values())
    p, r, f = _prf(T, F, N)
    return SlotScore(f, p, r, T, F, N, per_class)


def intent_acc(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> float:
    if len(gold) != len(pred):
        raise ContractError(f"{len(gold)} gold intent sets vs {len(pred)} predicted")
    if not gold:
        return 0.0
    return sum(set(g) == set(p) for g, p in zip(gold, pred)) / len(gold)


def overall_acc(gold_intents, pred_intents, gold_slots, pred_slots) -> float:
    """Fraction of utterances whose intent set and full tag sequence both match."""
    if not (len(gold_intents) == len(pred_intents) == len(gold_slots) == len(pred_slots)):
        raise ContractError("overall_acc inputs are not aligned")
    if not gold_intents:
        return 0.0
    hits = sum(
        set(gi) == set(pi) and tuple(gs) == tuple(ps)
        for gi, pi, gs, ps in zip(gold_intents, pred_intents, gold_slots, pred_slots)
    )
    return hits / len(gold_intents)


@dataclass
class EvalReport:
    slot_f1: float
    intent_acc: float
    overall_acc: float
    slot_sentence_acc: float
    slot_precision: float
    slot_recall: float
    tp: int
    fp: int
    fn: int
    per_class: dict[str, dict[str, float]]
    n: int

    def table(self) -> str:
        rows = [
            ("metric", "value"),
            ("slot_f1", f"{self.slot_f1:.4f}"),
            ("intent_acc", f"{self.intent_acc:.4f}"),
            ("overall_acc", f"{self.overall_acc:.4f}"),
            ("slot_precision", f"{self.slot_precision:.4f}"),
            ("slot_recall", f"{self.slot_recall:.4f}"),
            ("slot_sentence_acc", f"{self.slot_sentence_acc:.4f}"),
            ("spans tp/fp/fn", f"{self.tp}/{self.fp}/{self.fn}"),
            ("utterances", str(self.n)),
        ]
        w = max(len(r[0]) for r in rows)
        lines = [f"{a:<{w}}  {b}" for a, b in rows]
        if self.per_class:
            cw = max(len(c) for c in self.per_class)
            lines.append("")
            lines.append(f"{'slot type':<{cw}}  {'P':>6}  {'R':>6}  {'F1':>6}")
            for c, m in self.per_class.items():
                lines.append(f"{c:<{cw}}  {m['precision']:6.3f}  {m['recall']:6.3f}  {m['f1']:6.3f}")
        return "\n".join(lines)

    def key_values(self) -> str:
        keys = ("slot_f1", "intent_acc", "overall_acc", "slot_precision", "slot_recall",
                "slot_sentence_acc", "tp", "fp", "fn", "n")
        return "\n".join(f"{k}={getattr(self, k)!r}" for k in keys)


def evaluate(gold, pred) -> EvalReport:
    """Score aligned lists of samples (anything with ``slots`` and ``intents``)."""
    if len(gold) != len(pred):
        raise ContractError(f"{len(gold)} gold samples vs {len(pred)} predictions")
    gs, ps = [g.slots for g in gold], [p.slots for p in pred]
    gi, pi = [g.intents for g in gold], [p.intents for p in pred]
    score = slot_f1(gs, ps)
    sent = sum(tuple(a) == tuple(b) for a, b in zip(gs, ps)) / len(gs) if gs else 0.0
    return EvalReport(
        slot_f1=score.f1,
        intent_acc=intent_acc(gi, pi),
        overall_acc=overall_acc(gi, pi, gs, ps),
        slot_sentence_acc=sent,
        slot_precision=score.precision,
        slot_recall=score.recall,
        tp=score.tp,
        fp=score.fp,
        fn=score.fn,
        per_class=score.per_class,
        n=len(gold),
    )
