import pytest
from hypothesis import given, settings, strategies as st

from dgif.data_io import Sample
from dgif.errors import ContractError
from dgif.evaluation import bio_spans, evaluate, intent_acc, overall_acc, slot_f1

from oracles import golden_metric_fixture


class TestSpans:
    def test_basic(self):
        assert bio_spans(["B-a", "I-a", "O", "B-b"]) == [(0, 2, "a"), (3, 4, "b")]

    def test_orphan_inside_opens_span(self):
        assert bio_spans(["O", "I-a", "I-a"]) == [(1, 3, "a")]

    def test_type_switch_inside(self):
        assert bio_spans(["B-a", "I-b"]) == [(0, 1, "a"), (1, 2, "b")]

    def test_adjacent_begins(self):
        assert bio_spans(["B-a", "B-a"]) == [(0, 1, "a"), (1, 2, "a")]


class TestSlotF1:
    def test_perfect(self):
        assert slot_f1([["B-a", "O"]], [["B-a", "O"]]).f1 == 1.0

    def test_empty_prediction(self):
        s = slot_f1([["B-a", "O"]], [["O", "O"]])
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_boundary_mismatch_scores_zero(self):
        s = slot_f1([["B-a", "I-a", "O"]], [["B-a", "O", "O"]])
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_no_spans_anywhere(self):
        assert slot_f1([["O"]], [["O"]]).f1 == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            slot_f1([["O", "O"]], [["O"]])
        with pytest.raises(ContractError):
            slot_f1([["O"]], [])

    def test_per_class_breakdown(self):
        s = slot_f1([["B-a", "B-b"]], [["B-a", "O"]])
        assert s.per_class["a"]["f1"] == 1.0
        assert s.per_class["b"]["recall"] == 0.0


class TestIntentAndOverall:
    def test_identical(self):
        assert intent_acc([["A", "B"]], [["B", "A"]]) == 1.0

    def test_subset_is_wrong(self):
        assert intent_acc([["A", "B"]], [["A"]]) == 0.0

    def test_three_of_four(self):
        assert intent_acc([["A"], ["B"], ["A", "B"], ["C"]], [["A"], ["B"], ["A", "B"], ["A"]]) == 0.75

    def test_overall_conjunction(self):
        assert overall_acc([["A"]], [["A"]], [["B-x", "O"]], [["B-x", "B-x"]]) == 0.0
        assert overall_acc([["A"]], [["A"]], [["O"]], [["O"]]) == 1.0

    def test_overall_half(self):
        gi = [["A"], ["B"]]
        gs = [["O", "B-x"], ["B-y"]]
        ps = [["O", "B-x"], ["O"]]
        assert overall_acc(gi, gi, gs, ps) == 0.5

    def test_misaligned(self):
        with pytest.raises(ContractError):
            intent_acc([["A"]], [])
        with pytest.raises(ContractError):
            overall_acc([["A"]], [["A"]], [], [])


def test_golden_fixture():
    gold, pred, expected = golden_metric_fixture()
    r = evaluate(gold, pred)
    for key, value in expected.items():
        assert getattr(r, key) == value, key


tags = st.sampled_from(["O", "B-a", "I-a", "B-b", "I-b"])


@st.composite
def pairs(draw):
    out = []
    for _ in range(draw(st.integers(1, 6))):
        n = draw(st.integers(1, 5))
        gi = tuple(draw(st.lists(st.sampled_from("ABC"), min_size=1, max_size=2, unique=True)))
        pi = tuple(draw(st.lists(st.sampled_from("ABC"), min_size=1, max_size=2, unique=True)))
        toks = tuple("w" for _ in range(n))
        out.append((Sample(toks, tuple(draw(tags) for _ in range(n)), gi),
                    Sample(toks, tuple(draw(tags) for _ in range(n)), pi)))
    return out


@given(pairs(), st.randoms(use_true_random=False))
@settings(max_examples=80, deadline=None)
def test_metric_invariants(data, rnd):
    gold, pred = [g for g, _ in data], [p for _, p in data]
    r = evaluate(gold, pred)
    assert r.overall_acc <= min(r.intent_acc, r.slot_sentence_acc)
    for v in (r.slot_f1, r.intent_acc, r.overall_acc, r.slot_precision, r.slot_recall):
        assert 0.0 <= v <= 1.0
    order = list(range(len(data)))
    rnd.shuffle(order)
    shuffled = evaluate([gold[i] for i in order], [pred[i] for i in order])
    assert (shuffled.slot_f1, shuffled.tp, shuffled.fp, shuffled.fn) == (r.slot_f1, r.tp, r.fp, r.fn)
    self_eval = evaluate(gold, gold)
    assert self_eval.intent_acc == self_eval.overall_acc == 1.0
    if self_eval.tp:
        assert self_eval.slot_f1 == 1.0


def test_report_rendering():
    gold, pred, _ = golden_metric_fixture()
    r = evaluate(gold, pred)
    kv = dict(line.split("=", 1) for line in r.key_values().splitlines())
    assert float(kv["slot_f1"]) == r.slot_f1 and kv["n"] == "6"
    assert r.table().splitlines()[0].split() == ["metric", "value"]
