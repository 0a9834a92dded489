"""Label verbalization, label spaces, projection onto them, and the
label-aware regularizers."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import numerics as nx
from .encoder import EncoderConfig, Vocab, encode, self_attentive_pool
from .errors import ContractError, DegenerateVectorError, DimensionError
from .numerics import DEFAULT_RIDGE, Tensor

INTENT, SLOT = "I", "S"

DEFAULT_OVERRIDES = {
    "PER": "person",
    "LOC": "location",
    "ORG": "organization",
    "MISC": "miscellaneous",
}

_SEPARATORS = re.compile(r"[\s_\-.#/:]+")
_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def load_overrides(path: str | Path) -> dict[str, str]:
    """Read ``raw_fragment<TAB>replacement`` lines; blank lines and ``#`` comments skipped."""
    table = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        raw, sep, repl = line.partition("\t")
        if not sep or not raw:
            raise ContractError(f"{path}:{lineno}: expected raw<TAB>replacement")
        table[raw] = repl.strip()
    return table


def _words(fragment: str, overrides: Mapping[str, str]) -> list[str]:
    if fragment in overrides:
        return overrides[fragment].lower().split()
    out = []
    for part in _SEPARATORS.split(fragment):
        if not part:
            continue
        if part in overrides:
            out.extend(overrides[part].lower().split())
        else:
            out.extend(w.lower() for w in _CAMEL.split(part) if w)
    return out


def verbalize(label: str, task: str, overrides: Mapping[str, str] | None = None) -> list[str]:
    """Natural-language word sequence for a label name.

    >>> verbalize("I-fromloc.city_name", "S")
    ['inside', 'fromloc', 'city', 'name']
    """
    if not label:
        raise ContractError("label name must be non-empty")
    table = DEFAULT_OVERRIDES if overrides is None else overrides
    if task == INTENT:
        return _words(label, table) or [label.lower()]
    if label == "O":
        return ["outside"]
    if label[:2] in ("B-", "I-"):
        head = "begin" if label[0] == "B" else "inside"
        return [head] + _words(label[2:], table)
    return _words(label, table) or [label.lower()]


@dataclass(frozen=True)
class LabelSet:
    task: str
    names: tuple[str, ...]
    verbalized: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if self.task not in (INTENT, SLOT):
            raise ContractError(f"task must be 'I' or 'S', got {self.task!r}")
        if len(set(self.names)) != len(self.names):
            raise ContractError("label names must be unique")
        if len(self.verbalized) != len(self.names):
            raise ContractError("every label needs a verbalization")

    @classmethod
    def from_names(cls, task: str, names: Sequence[str],
                   overrides: Mapping[str, str] | None = None) -> "LabelSet":
        names = tuple(names)
        return cls(task, names, tuple(tuple(verbalize(n, task, overrides)) for n in names))

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def indices(self, names: Sequence[str]) -> list[int]:
        lookup = {n: i for i, n in enumerate(self.names)}
        return [lookup[n] for n in names]


@dataclass
class LabelSpace:
    """Basis of label embeddings (rows of ``basis``) and its Gram matrix."""

    task: str
    names: tuple[str, ...]
    basis: Tensor
    gram: Tensor
    ridge: float = DEFAULT_RIDGE

    @classmethod
    def from_basis(cls, basis: Tensor, task: str = SLOT, names: Sequence[str] | None = None,
                   ridge: float = DEFAULT_RIDGE) -> "LabelSpace":
        if names is None:
            names = tuple(str(i) for i in range(basis.shape[0]))
        return cls(task, tuple(names), basis, basis @ basis.T, ridge)

    def __len__(self) -> int:
        return self.basis.shape[0]


@dataclass
class Projection:
    x: Tensor
    coefficients: Tensor
    projected: Tensor


def embed_labels(labels: LabelSet, vocab: Vocab, params: Mapping[str, Tensor],
                 config: EncoderConfig, ridge: float = DEFAULT_RIDGE) -> LabelSpace:
    rows = [
        self_attentive_pool(encode(vocab.ids(words), params, config), params).vector
        for words in labels.verbalized
    ]
    basis = nx.stack_rows(rows)
    return LabelSpace(labels.task, labels.names, basis, basis @ basis.T, ridge)


def inject(x: Tensor, space: LabelSpace) -> Projection:
    """Best approximation of ``x`` (a vector, or each row of a matrix) in the label space."""
    R = space.basis
    d = R.shape[1]
    if x.shape[-1] != d or x.ndim not in (1, 2):
        raise DimensionError(f"inject: input {x.shape} vs basis {R.shape}")
    X = x.reshape(1, d) if x.ndim == 1 else x
    b = X @ R.T  # rows: <x, r_n>
    w = nx.solve_spd(space.gram, b.T, space.ridge)  # |phi| x rows
    xhat = w.T @ R
    if x.ndim == 1:
        return Projection(x, w.reshape(len(space)), xhat.reshape(d))
    return Projection(x, w.T, xhat)


def l_inter(space: LabelSpace, gold: Sequence[int], exclude_self: bool = False) -> Tensor:
    gold = list(dict.fromkeys(int(g) for g in gold))
    Q, k = len(gold), len(space)
    if Q < 1:
        raise ContractError("l_inter needs at least one gold label")
    R = space.basis
    norm_sq = (R * R).sum(axis=1)
    if np.any(norm_sq.data == 0.0):
        bad = int(np.flatnonzero(norm_sq.data == 0.0)[0])
        raise DegenerateVectorError(f"label embedding {bad} has zero norm")
    unit = nx.scale_rows(R, nx.reciprocal(nx.sqrt(norm_sq)))
    total = (nx.take_rows(unit, gold) @ unit.T).sum()
    if exclude_self:
        if k == 1:
            return nx.Tensor(1.0)
        return 1.0 + (total - float(Q)) * (1.0 / (Q * (k - 1)))
    return 1.0 + total * (1.0 / (Q * k))


def _as_matrix(vectors) -> Tensor:
    if isinstance(vectors, Tensor):
        return vectors.reshape(1, -1) if vectors.ndim == 1 else vectors
    vectors = list(vectors)
    if not vectors:
        return None
    return nx.stack_rows(vectors)


def l_intra(samples, gold_reps) -> Tensor:
    """Mean squared Euclidean distance over all (sample, gold label) pairs."""
    S, G = _as_matrix(samples), _as_matrix(gold_reps)
    if S is None or G is None or S.shape[0] < 1 or G.shape[0] < 1:
        raise ContractError("l_intra needs at least one sample and one gold representation")
    if S.shape[1] != G.shape[1]:
        raise DimensionError(f"l_intra: sample dim {S.shape[1]} vs gold dim {G.shape[1]}")
    P, Q = S.shape[0], G.shape[0]
    diff = nx.take_rows(S, np.repeat(np.arange(P), Q)) - nx.take_rows(G, np.tile(np.arange(Q), P))
    return (diff * diff).sum() * (1.0 / (P * Q))


def l_intra_paired(samples, gold_reps) -> Tensor:
    """Mean squared distance between row ``i`` of ``samples`` and row ``i`` of ``gold_reps``."""
    S, G = _as_matrix(samples), _as_matrix(gold_reps)
    if S is None or G is None or S.shape[0] < 1:
        raise ContractError("l_intra_paired needs at least one sample")
    if S.shape != G.shape:
        raise DimensionError(f"l_intra_paired: samples {S.shape} vs gold {G.shape}")
    diff = S - G
    return (diff * diff).sum() * (1.0 / S.shape[0])


def l_re(space: LabelSpace, samples, gold: Sequence[int], lam: float,
         exclude_self: bool = False, target_grad: bool = True) -> Tensor:
    """``L_inter + lam * L_intra``. With ``target_grad=False`` the gold label
    rows enter ``L_intra`` as constants, so only the samples move toward them."""
    if lam < 0:
        raise ContractError(f"lambda must be >= 0, got {lam}")
    inter = l_inter(space, gold, exclude_self)
    if lam == 0:
        return inter
    gold = list(dict.fromkeys(int(g) for g in gold))
    basis = space.basis if target_grad else Tensor(space.basis.data)
    return inter + lam * l_intra(samples, nx.take_rows(basis, gold))
