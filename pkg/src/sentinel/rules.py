"""Rule pack model and the two heuristic matching channels.

Semantic rules flag vocabulary families (a seed keyword list expanded into
a synonym set); structural rules flag sentence shapes (question/answer
batteries, token repetition) via counting matchers with an inclusive
threshold. Matching a text against a pack yields one bit per rule, in pack
order, forming the explicit feature vector consumed by the fusion head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .normalizer import NormalizedText, lemmatize, normalize

__all__ = [
    "RulePackError",
    "SemanticRule",
    "StructuralRule",
    "RulePack",
    "HeuristicFeatureVector",
    "expand_synonyms",
    "extract_semantic",
    "count_qa_pairs",
    "max_consecutive_repeat",
    "extract_structural",
    "extract_features",
    "load_thesaurus",
    "load_default_pack",
    "load_pack",
]

STRUCTURAL_KINDS = ("qa_pairs", "consecutive_repeat")


class RulePackError(ValueError):
    """Raised when a rule pack violates its invariants at load time."""


@dataclass(frozen=True)
class SemanticRule:
    """Vocabulary rule: fires when any input lemma falls in ``synonym_set``."""

    name: str
    seed_keywords: tuple[str, ...]
    synonym_set: frozenset[str]


@dataclass(frozen=True)
class StructuralRule:
    """Shape rule: fires when its counting matcher reaches ``threshold``."""

    name: str
    kind: str
    threshold: int

    def __post_init__(self) -> None:
        # configuration problems must surface here, never during matching
        if self.kind not in STRUCTURAL_KINDS:
            raise RulePackError(f"unknown structural kind {self.kind!r}")
        if self.threshold < 1:
            raise RulePackError(f"threshold must be >= 1, got {self.threshold}")


@dataclass(frozen=True)
class RulePack:
    semantic: tuple[SemanticRule, ...]
    structural: tuple[StructuralRule, ...]
    version: str

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.semantic] + [r.name for r in self.structural]

    def __len__(self) -> int:
        return len(self.semantic) + len(self.structural)


@dataclass(frozen=True)
class HeuristicFeatureVector:
    bits: tuple[int, ...]
    names: tuple[str, ...]

    def triggered(self) -> list[str]:
        return [n for n, b in zip(self.names, self.bits) if b]

    def any(self) -> bool:
        return any(self.bits)

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.names, self.bits))


def _single_lemma(entry: str) -> str | None:
    """Lemma of ``entry`` if it normalizes to exactly one word token."""
    toks = normalize(entry).tokens
    if len(toks) != 1 or toks[0].is_punct:
        return None
    return toks[0].lemma


def expand_synonyms(
    seed_keywords: Iterable[str], thesaurus: Mapping[str, Iterable[str]]
) -> frozenset[str]:
    """Union of the seeds and their thesaurus synonyms, in lemma form.

    Entries that do not survive as a single token (multi-word or pure
    punctuation) are dropped, since matching is per-token. Seeds missing
    from the thesaurus contribute only themselves.
    """
    out: set[str] = set()
    for seed in seed_keywords:
        lemma = _single_lemma(seed)
        if lemma is None:
            continue
        out.add(lemma)
        for syn in thesaurus.get(lemma, ()):  # expansion keyed by seed lemma
            syn_lemma = _single_lemma(syn)
            if syn_lemma is not None:
                out.add(syn_lemma)
    return frozenset(out)


def extract_semantic(
    norm: NormalizedText, rules: Iterable[SemanticRule]
) -> list[int]:
    """One bit per rule: does any non-punctuation lemma hit the rule's set?"""
    lemmas = {t.lemma for t in norm.tokens if not t.is_punct}
    return [1 if lemmas & r.synonym_set else 0 for r in rules]


def count_qa_pairs(norm: NormalizedText) -> int:
    """Count question/answer pairs under two schemes, returning the larger.

    Marker scheme: ``q :`` tokens each matched, in order, with a later
    ``a :`` token pair. Question-mark scheme: ``?`` characters followed,
    beyond whitespace, by more text.
    """
    toks = norm.tokens
    q_positions: list[int] = []
    a_positions: list[int] = []
    for i in range(len(toks) - 1):
        if toks[i + 1].surface == ":" and not toks[i].is_punct:
            if toks[i].lemma == "q":
                q_positions.append(i)
            elif toks[i].lemma == "a":
                a_positions.append(i)
    marker_pairs = 0
    a_iter = iter(a_positions)
    next_a = next(a_iter, None)
    for q in q_positions:
        while next_a is not None and next_a < q:
            next_a = next(a_iter, None)
        if next_a is None:
            break
        marker_pairs += 1
        next_a = next(a_iter, None)

    src = norm.source
    last_text = len(src.rstrip()) - 1
    answered_questions = sum(
        1 for i, ch in enumerate(src) if ch == "?" and i < last_text
    )
    return max(marker_pairs, answered_questions)


def max_consecutive_repeat(norm: NormalizedText) -> int:
    """Longest run of one lemma, ignoring punctuation between run members."""
    best = 0
    run = 0
    current: str | None = None
    for tok in norm.tokens:
        if tok.is_punct:
            continue
        if tok.lemma == current:
            run += 1
        else:
            current = tok.lemma
            run = 1
        best = max(best, run)
    return best


_MATCHERS = {
    "qa_pairs": count_qa_pairs,
    "consecutive_repeat": max_consecutive_repeat,
}


def extract_structural(
    norm: NormalizedText, rules: Iterable[StructuralRule]
) -> list[int]:
    """Inclusive-threshold bits: matcher count >= threshold sets the bit."""
    return [1 if _MATCHERS[r.kind](norm) >= r.threshold else 0 for r in rules]


def extract_features(text: str, pack: RulePack) -> HeuristicFeatureVector:
    """Full heuristic vector for ``text``: semantic bits then structural."""
    norm = normalize(text)
    bits = extract_semantic(norm, pack.semantic) + extract_structural(
        norm, pack.structural
    )
    return HeuristicFeatureVector(bits=tuple(bits), names=tuple(pack.names))


# ---------------------------------------------------------------------------
# pack and thesaurus I/O
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1)
def load_thesaurus() -> dict[str, tuple[str, ...]]:
    """Bundled offline synonym snapshot (lemma -> synonyms)."""
    path = resources.files("sentinel.data").joinpath("thesaurus.json")
    raw = json.loads(path.read_text(encoding="utf-8"))
    return {k: tuple(v) for k, v in raw.items()}


def pack_from_dict(doc: dict) -> RulePack:
    """Build and validate a pack from its JSON document form."""
    try:
        version = doc["version"]
        semantic_docs = doc["semantic"]
        structural_docs = doc["structural"]
    except (KeyError, TypeError) as exc:
        raise RulePackError(f"rule pack missing required field: {exc}") from exc

    semantic = []
    for entry in semantic_docs:
        seeds = tuple(entry["keywords"])
        synonyms = frozenset(lemmatize(s) for s in entry["synonyms"])
        seed_lemmas = {lemmatize(s) for s in seeds}
        if not seed_lemmas <= synonyms:
            missing = sorted(seed_lemmas - synonyms)
            raise RulePackError(
                f"rule {entry['name']!r}: synonyms must cover keywords "
                f"(missing {missing})"
            )
        for word in synonyms:
            if not word or word != word.lower():
                raise RulePackError(
                    f"rule {entry['name']!r}: entry {word!r} not lowercase"
                )
        semantic.append(
            SemanticRule(
                name=entry["name"], seed_keywords=seeds, synonym_set=synonyms
            )
        )

    structural = []
    for entry in structural_docs:
        kind = entry["kind"]
        if kind not in STRUCTURAL_KINDS:
            raise RulePackError(
                f"rule {entry['name']!r}: unknown structural kind {kind!r}"
            )
        threshold = int(entry["threshold"])
        if threshold < 1:
            raise RulePackError(
                f"rule {entry['name']!r}: threshold must be >= 1, got {threshold}"
            )
        structural.append(
            StructuralRule(name=entry["name"], kind=kind, threshold=threshold)
        )

    names = [r.name for r in semantic] + [r.name for r in structural]
    if len(set(names)) != len(names):
        raise RulePackError("rule names must be unique across the pack")
    return RulePack(
        semantic=tuple(semantic), structural=tuple(structural), version=version
    )


def pack_to_dict(pack: RulePack) -> dict:
    return {
        "version": pack.version,
        "semantic": [
            {
                "name": r.name,
                "keywords": list(r.seed_keywords),
                "synonyms": sorted(r.synonym_set),
            }
            for r in pack.semantic
        ],
        "structural": [
            {"name": r.name, "kind": r.kind, "threshold": r.threshold}
            for r in pack.structural
        ],
    }


def load_pack(path: str | Path) -> RulePack:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RulePackError(f"rule pack {path}: invalid JSON ({exc})") from exc
    return pack_from_dict(doc)


@lru_cache(maxsize=1)
def load_default_pack() -> RulePack:
    """The bundled pack: eight vocabulary rules plus two shape rules."""
    path = resources.files("sentinel.data").joinpath("default_rules.json")
    return pack_from_dict(json.loads(path.read_text(encoding="utf-8")))
