"""Corpus parsing/serialization, vocabulary building, synthetic corpora.

Corpus format, one sample per blank-line separated block::

    listen O
    winter B-playlist
    song O
    AddToPlaylist#PlayMusic
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .encoder import Vocab
from .errors import ContractError, ParseError
from .io_utils import atomic_write_text
from .label_space import INTENT, SLOT, LabelSet

_BIO = re.compile(r"^(O|[BI]-\S+)$")


@dataclass(frozen=True)
class Sample:
    tokens: tuple[str, ...]
    slots: tuple[str, ...]
    intents: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "intents", tuple(self.intents))
        if not self.tokens or len(self.tokens) != len(self.slots):
            raise ContractError(
                f"sample needs >=1 token and one tag per token "
                f"({len(self.tokens)} tokens, {len(self.slots)} tags)"
            )
        for tag in self.slots:
            if not _BIO.match(tag):
                raise ContractError(f"malformed BIO tag {tag!r}")
        if not self.intents or len(set(self.intents)) != len(self.intents):
            raise ContractError(f"intents must be non-empty and unique: {self.intents}")


def parse_text(text: str, source: str = "<string>") -> list[Sample]:
    samples = []
    block: list[tuple[int, str]] = []
    lines = text.split("\n")
    for lineno, raw in enumerate(lines + [""], 1):
        line = raw.rstrip()
        if line.strip():
            block.append((lineno, line))
            continue
        if block:
            samples.append(_parse_block(block, source))
            block = []
    return samples


def _parse_block(block: list[tuple[int, str]], source: str) -> Sample:
    *token_lines, (intent_no, intent_line) = block
    tokens, tags = [], []
    for lineno, line in token_lines:
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'token slot_tag', got {line!r}", lineno, source)
        if not _BIO.match(parts[1]):
            raise ParseError(f"malformed BIO tag {parts[1]!r}", lineno, source)
        tokens.append(parts[0].lower())
        tags.append(parts[1])
    fields = intent_line.split()
    if len(fields) != 1:
        raise ParseError(f"sample has no intent line (last line {intent_line!r})", intent_no, source)
    intents = fields[0].split("#")
    if any(not i for i in intents):
        raise ParseError(f"empty intent in {intent_line!r}", intent_no, source)
    if len(set(intents)) != len(intents):
        raise ParseError(f"repeated intent in {intent_line!r}", intent_no, source)
    if not tokens:
        raise ParseError("sample has an intent line but no tokens", intent_no, source)
    return Sample(tuple(tokens), tuple(tags), tuple(intents))


def parse_corpus(path: str | Path) -> list[Sample]:
    return parse_text(Path(path).read_text(encoding="utf-8"), str(path))


def serialize_corpus(samples: Iterable[Sample]) -> str:
    blocks = []
    for s in samples:
        lines = [f"{t} {tag}" for t, tag in zip(s.tokens, s.slots)]
        lines.append("#".join(s.intents))
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def write_corpus(path: str | Path, samples: Iterable[Sample]) -> None:
    atomic_write_text(path, serialize_corpus(samples))


def build_vocab(samples: Sequence[Sample],
                overrides: Mapping[str, str] | None = None) -> tuple[Vocab, LabelSet, LabelSet]:
    """Token vocab in first-occurrence order; label sets sorted lexicographically."""
    if not samples:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    vocab = Vocab(t for s in samples for t in s.tokens)
    intents = sorted({i for s in samples for i in s.intents})
    slots = sorted({t for s in samples for t in s.slots})
    return vocab, LabelSet.from_names(INTENT, intents, overrides), LabelSet.from_names(SLOT, slots, overrides)


def build_label_vocab(*label_sets: LabelSet) -> Vocab:
    return Vocab(w for ls in label_sets for words in ls.verbalized for w in words)


def save_labels(path: str | Path, labels: LabelSet) -> None:
    atomic_write_text(path, "".join(n + "\n" for n in labels.names))


def load_labels(path: str | Path, task: str, overrides: Mapping[str, str] | None = None) -> LabelSet:
    names = [l for l in Path(path).read_text(encoding="utf-8").split("\n") if l]
    return LabelSet.from_names(task, names, overrides)


# synthetic corpora

_DOMAINS = [
    ("PlayMusic", "play", [
        ("artist", ["adele", "daft punk", "drake", "pink floyd", "madonna"]),
        ("music_genre", ["jazz", "rock", "hip hop", "blues", "reggae"]),
        ("service", ["spotify", "apple music", "deezer", "pandora"]),
    ]),
    ("BookRestaurant", "reserve", [
        ("restaurant_type", ["bistro", "steakhouse", "sushi bar", "pizzeria"]),
        ("party_size", ["two", "four", "six people", "eight"]),
        ("timeRange", ["tonight", "noon", "tomorrow evening", "midnight"]),
    ]),
    ("GetWeather", "forecast", [
        ("city", ["paris", "tokyo", "new york", "berlin", "lima"]),
        ("condition", ["rain", "snow", "sunny skies", "wind"]),
        ("date", ["monday", "friday", "next week", "sunday"]),
    ]),
    ("AddToPlaylist", "add", [
        ("song", ["yesterday", "hey jude", "imagine", "thriller"]),
        ("playlist", ["workout", "chill vibes", "road trip", "focus"]),
        ("position", ["top", "bottom", "middle", "start"]),
    ]),
    ("RateBook", "rate", [
        ("book", ["dune", "emma", "ulysses", "moby dick"]),
        ("rating", ["one", "three", "five stars", "zero"]),
        ("scale", ["ten", "hundred", "twenty", "nine"]),
    ]),
    ("SearchFlight", "fly", [
        ("fromloc.city_name", ["boston", "denver", "dallas", "salt lake"]),
        ("toloc.city_name", ["atlanta", "seattle", "miami", "las vegas"]),
        ("airline", ["delta", "united", "air canada", "lufthansa"]),
    ]),
    ("SetAlarm", "wake", [
        ("time", ["sunrise", "seven thirty", "dawn", "eleven"]),
        ("alarm_name", ["gym", "meds", "school run", "meeting"]),
        ("day", ["weekdays", "weekends", "daily", "saturday"]),
    ]),
    ("OrderFood", "order", [
        ("dish", ["ramen", "tacos", "pad thai", "burger"]),
        ("quantity", ["single", "double", "triple", "dozen"]),
        ("vendor", ["ubereats", "grubhub", "door dash", "postmates"]),
    ]),
]

_PREFIXES = [[], ["please"], ["can", "you"], ["i", "want", "to"], ["could", "you"], ["now"]]
_CONNECTORS = [[], ["the"], ["for"], ["with"], ["at"], ["on"], ["by"], ["from"]]


@dataclass(frozen=True)
class SyntheticSpec:
    intents: int = 5
    slot_types_per_intent: int = 2
    templates_per_intent: int = 3
    samples: int = 250
    max_intents: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("intents", "slot_types_per_intent", "templates_per_intent", "samples", "max_intents"):
            if getattr(self, name) < 1:
                raise ContractError(f"SyntheticSpec.{name} must be >= 1")
        if self.max_intents > 3:
            raise ContractError("max_intents must be <= 3")
        if self.max_intents > self.intents:
            raise ContractError("max_intents cannot exceed the number of intents")


@dataclass
class SyntheticCorpus:
    samples: list[Sample]
    keywords: dict[str, str]
    slot_types: dict[str, list[str]]
    lexicons: dict[str, list[str]]
    templates: dict[str, list[list[str]]] = field(default_factory=dict)

    def manifest(self) -> str:
        out = ["# synthetic corpus grammar", f"samples\t{len(self.samples)}"]
        hist: dict[int, int] = {}
        for s in self.samples:
            hist[len(s.intents)] = hist.get(len(s.intents), 0) + 1
        for c in sorted(hist):
            out.append(f"intent_count\t{c}\t{hist[c]}")
        for intent, kw in self.keywords.items():
            out.append(f"intent\t{intent}\tkeyword={kw}\tslots={','.join(self.slot_types[intent])}")
            for t in self.templates[intent]:
                out.append(f"template\t{intent}\t{' '.join(t)}")
        for slot, values in self.lexicons.items():
            out.append(f"lexicon\t{slot}\t{'|'.join(values)}")
        return "\n".join(out) + "\n"


def _domain(k: int):
    if k < len(_DOMAINS):
        return _DOMAINS[k]
    # beyond the authored table: procedurally named intents and slot types
    name = f"Intent{k}"
    slots = [(f"slot{k}_{j}", [f"v{k}x{j}x{v}" for v in range(4)]) for j in range(3)]
    return name, f"kw{k}", slots


def _instantiate(template: list[str], keyword: str, lexicons, rng: random.Random):
    tokens, tags = [], []
    for piece in template:
        if piece == "{kw}":
            tokens.append(keyword)
            tags.append("O")
        elif piece.startswith("{") and piece.endswith("}"):
            slot = piece[1:-1]
            words = rng.choice(lexicons[slot]).split()
            tokens.extend(words)
            tags.extend([f"B-{slot}"] + [f"I-{slot}"] * (len(words) - 1))
        else:
            tokens.append(piece)
            tags.append("O")
    return tokens, tags


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    """Template corpus, labels correct by construction, deterministic under ``spec.seed``.

    Sample ``i`` carries ``(i mod max_intents) + 1`` intents before shuffling,
    so the intent-count histogram is exact.
    """
    rng = random.Random(spec.seed)
    keywords, slot_types, lexicons, templates = {}, {}, {}, {}
    for k in range(spec.intents):
        name, kw, slots = _domain(k)
        if spec.slot_types_per_intent > len(slots):
            slots = slots + [
                (f"{name.lower()}_extra{j}", [f"{name.lower()}x{j}x{v}" for v in range(4)])
                for j in range(spec.slot_types_per_intent - len(slots))
            ]
        chosen = slots[: spec.slot_types_per_intent]
        keywords[name] = kw
        slot_types[name] = [s for s, _ in chosen]
        lexicons.update({s: list(v) for s, v in chosen})
        templates[name] = []
        for _ in range(spec.templates_per_intent):
            order = list(slot_types[name])
            rng.shuffle(order)
            t = list(rng.choice(_PREFIXES)) + ["{kw}"]
            for s in order:
                t += list(rng.choice(_CONNECTORS)) + ["{" + s + "}"]
            templates[name].append(t)
    names = list(keywords)
    counts = [(i % spec.max_intents) + 1 for i in range(spec.samples)]
    rng.shuffle(counts)
    samples = []
    for c in counts:
        chosen = rng.sample(names, c)
        tokens, tags = [], []
        for j, intent in enumerate(chosen):
            if j:
                tokens.append("and")
                tags.append("O")
            t, g = _instantiate(rng.choice(templates[intent]), keywords[intent], lexicons, rng)
            tokens += t
            tags += g
        samples.append(Sample(tuple(tokens), tuple(tags), tuple(chosen)))
    return SyntheticCorpus(samples, keywords, slot_types, lexicons, templates)
