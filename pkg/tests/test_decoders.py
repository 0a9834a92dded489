"""Intent head, count head, top-k selection and the slot decoder."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgif.errors import ContractError
from dgif.intent_decoder import (count_logits, decode_intents, intent_count, intent_logits, intent_probs,
                                 multi_hot, predicted_count, select_top_k)
from dgif.numerics import Tensor, grad_check
from dgif.slot_decoder import decode_slots, slot_logits
from dgif.training import count_ce, intent_bce, token_ce


def intent_params(d=2, hidden=2, k=2, fill=None, seed=0):
    rng = np.random.default_rng(seed)
    make = (lambda s: np.zeros(s)) if fill == 0 else (lambda s: rng.normal(size=s))
    return {
        "intent.w_u": Tensor(make((d, hidden)), requires_grad=True),
        "intent.b_u": Tensor(make((hidden,)), requires_grad=True),
        "intent.w_i": Tensor(make((hidden, k)), requires_grad=True),
        "intent.b_i": Tensor(make((k,)), requires_grad=True),
        "count.w": Tensor(make((d, 3)), requires_grad=True),
        "count.b": Tensor(make((3,)), requires_grad=True),
    }


class TestIntentProbs:
    def test_zero_weights_give_one_half(self):
        p = intent_probs(Tensor(np.array([3.0, -1.0])), intent_params(fill=0))
        assert np.array_equal(p.data, [0.5, 0.5])

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_strictly_inside_unit_interval(self, seed):
        p = intent_probs(Tensor(np.random.default_rng(seed).normal(size=2)), intent_params(seed=seed)).data
        assert np.all((p > 0) & (p < 1))

    def test_hand_weights(self):
        prm = intent_params()
        W_u, b_u = prm["intent.w_u"].data, prm["intent.b_u"].data
        W_i, b_i = prm["intent.w_i"].data, prm["intent.b_i"].data
        r = np.array([0.7, -0.4])
        expect = []
        for k in range(2):
            z = b_i[k]
            for j in range(2):
                u = r[0] * W_u[0, j] + r[1] * W_u[1, j] + b_u[j]
                z += (u if u > 0 else 0.01 * u) * W_i[j, k]
            expect.append(1.0 / (1.0 + np.exp(-z)))
        assert np.max(np.abs(intent_probs(Tensor(r), prm).data - expect)) < 1e-12


class TestCount:
    def test_zero_weights_uniform_resolves_to_one(self):
        dist = intent_count(Tensor(np.ones(2)), intent_params(fill=0), max_count=3)
        assert np.allclose(dist.data, 1 / 3, atol=1e-15)
        assert predicted_count(dist) == 1

    def test_dominant_logit(self):
        assert predicted_count(np.array([0.0, 5.0, 0.0])) == 2

    def test_class_count_checked(self):
        with pytest.raises(ContractError):
            intent_count(Tensor(np.ones(2)), intent_params(), max_count=4)

    @given(seed=st.integers(0, 1000), shift=st.floats(-50, 50))
    @settings(max_examples=40, deadline=None)
    def test_argmax_matches_sort_and_ignores_shift(self, seed, shift):
        logits = np.random.default_rng(seed).normal(size=4)
        assert predicted_count(logits) == int(sorted(range(4), key=lambda i: (-logits[i], i))[0]) + 1
        assert predicted_count(logits + shift) == predicted_count(logits)


class TestTopK:
    def test_direct(self):
        assert select_top_k([0.1, 0.9, 0.5], 2) == [1, 2]

    def test_ties_to_lower_index(self):
        assert select_top_k([0.3, 0.3, 0.3], 2) == [0, 1]

    @pytest.mark.parametrize("k", [0, 4])
    def test_out_of_range(self, k):
        with pytest.raises(ContractError):
            select_top_k([0.1, 0.2, 0.3], k)

    @given(seed=st.integers(0, 5000))
    @settings(max_examples=50, deadline=None)
    def test_sort_oracle_and_monotone_invariance(self, seed):
        p = np.random.default_rng(seed).random(6)
        oracle = sorted(range(6), key=lambda i: (-p[i], i))[:3]
        assert select_top_k(p, 3) == oracle
        assert select_top_k(np.exp(3 * p) - 7, 3) == oracle

    def test_decode_caps_count_at_label_count(self):
        prm = intent_params()
        prm["count.b"].data[:] = [0.0, 0.0, 100.0]
        pred = decode_intents(Tensor(np.ones(2)), Tensor(np.ones(2)), prm)
        assert pred.count == 2 and len(pred.selected) == 2


def test_multi_hot():
    assert multi_hot([0, 2], 4).tolist() == [1.0, 0.0, 1.0, 0.0]


def test_intent_and_count_losses_gradients():
    prm = intent_params(seed=3)
    r = Tensor(np.array([0.2, -0.9]), requires_grad=True)

    def objective():
        return intent_bce(intent_logits(r, prm), np.array([1.0, 0.0])) + count_ce(count_logits(r, prm), 2)

    report = grad_check(objective, {**prm, "r": r})
    assert report.passed, str(report)


class TestSlotDecoder:
    def slot_params(self, d=3, k=4, zero=False, seed=0):
        rng = np.random.default_rng(seed)
        w = np.zeros((d, k)) if zero else rng.normal(size=(d, k))
        b = np.zeros(k) if zero else rng.normal(size=k)
        return {"slot.w": Tensor(w, requires_grad=True), "slot.b": Tensor(b, requires_grad=True)}

    def test_zero_weights_uniform_label_zero(self):
        pred = decode_slots(Tensor(np.ones((3, 3))), self.slot_params(zero=True))
        assert pred.labels == [0, 0, 0]
        assert np.allclose(pred.distribution, 0.25, atol=1e-15)

    def test_dominant_logit(self):
        prm = self.slot_params(zero=True)
        prm["slot.b"].data[:] = [0, 0, 9, 0]
        assert decode_slots(Tensor(np.zeros((2, 3))), prm).labels == [2, 2]

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_rows_normalized_and_argmax_matches_sort(self, seed):
        prm = self.slot_params(seed=seed)
        states = Tensor(np.random.default_rng(seed + 1).normal(size=(5, 3)))
        pred = decode_slots(states, prm)
        assert np.max(np.abs(pred.distribution.sum(axis=1) - 1)) < 1e-12
        logits = slot_logits(states, prm).data
        for t in range(5):
            assert pred.labels[t] == sorted(range(4), key=lambda i: (-logits[t, i], i))[0]

    def test_row_shift_invariance(self):
        prm = self.slot_params(seed=4)
        states = Tensor(np.random.default_rng(5).normal(size=(3, 3)))
        before = decode_slots(states, prm).labels
        prm["slot.b"].data += 12.5
        assert decode_slots(states, prm).labels == before

    def test_cross_entropy_gradients(self):
        prm = self.slot_params(seed=6)
        states = Tensor(np.random.default_rng(7).normal(size=(4, 3)), requires_grad=True)
        report = grad_check(lambda: token_ce(slot_logits(states, prm), [0, 3, 1, 1]), {**prm, "states": states})
        assert report.passed, str(report)
