"""Per-token slot classification."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import numerics as nx
from .numerics import Tensor


@dataclass
class SlotPrediction:
    labels: list[int]
    distribution: np.ndarray  # n x |S|


def slot_logits(slot_states: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    return nx.add_bias(slot_states @ params["slot.w"], params["slot.b"])


def decode_slots(slot_states: Tensor, params: Mapping[str, Tensor]) -> SlotPrediction:
    probs = nx.softmax(slot_logits(slot_states, params), axis=1).data
    # np.argmax returns the first maximum: lowest-index tie-break
    return SlotPrediction([int(i) for i in np.argmax(probs, axis=1)], probs)
