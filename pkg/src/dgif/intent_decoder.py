"""Multi-intent probabilities, intent-count head, and count-guided top-k."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import numerics as nx
from .errors import ContractError
from .numerics import Tensor


@dataclass
class IntentPrediction:
    probabilities: np.ndarray
    count: int
    selected: list[int]


def intent_logits(r_hat: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """``W_I LeakyReLU(W_u r + b_u) + b_I``, before the sigmoid."""
    x = r_hat.reshape(1, -1)
    hidden = nx.leaky_relu(nx.add_bias(x @ params["intent.w_u"], params["intent.b_u"]))
    return nx.add_bias(hidden @ params["intent.w_i"], params["intent.b_i"]).reshape(-1)


def intent_probs(r_hat: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    return nx.sigmoid(intent_logits(r_hat, params))


def count_logits(h_cls: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    x = h_cls.reshape(1, -1)
    return nx.add_bias(x @ params["count.w"], params["count.b"]).reshape(-1)


def intent_count(h_cls: Tensor, params: Mapping[str, Tensor], max_count: int | None = None) -> Tensor:
    """Softmax over counts; class ``k`` stands for ``k + 1`` intents."""
    logits = count_logits(h_cls, params)
    if max_count is not None and logits.shape[0] != max_count:
        raise ContractError(f"count head has {logits.shape[0]} classes, expected {max_count}")
    if logits.shape[0] < 1:
        raise ContractError("max_count must be >= 1")
    return nx.softmax(logits, axis=0)


def predicted_count(distribution: Tensor | np.ndarray) -> int:
    values = distribution.data if isinstance(distribution, Tensor) else np.asarray(distribution)
    return int(np.argmax(values)) + 1


def select_top_k(p, k: int) -> list[int]:
    """Indices of the ``k`` largest entries, descending, ties to the lower index."""
    values = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=float)
    if not 1 <= k <= values.shape[0]:
        raise ContractError(f"k={k} outside [1, {values.shape[0]}]")
    return [int(i) for i in np.argsort(-values, kind="stable")[:k]]


def decode_intents(r_hat: Tensor, h_cls: Tensor, params: Mapping[str, Tensor]) -> IntentPrediction:
    probs = intent_probs(r_hat, params).data
    count = min(predicted_count(count_logits(h_cls, params).data), probs.shape[0])
    return IntentPrediction(probs, count, select_top_k(probs, count))


def multi_hot(indices: Sequence[int], size: int) -> np.ndarray:
    v = np.zeros(size)
    v[list(indices)] = 1.0
    return v
