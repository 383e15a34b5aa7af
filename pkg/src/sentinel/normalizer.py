"""Tokenization and rule-based English lemmatization.

Both rule channels consume the same normalized view of the input: the text
is NFC-normalized, split on Unicode whitespace and punctuation boundaries,
and every token is annotated with a lowercase lemma. Lemmas come from a
self-contained suffix-stripping lemmatizer backed by an exception table of
irregular forms, so no external NLP runtime is needed. Words the rules do
not recognize simply keep their lowercased surface.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

__all__ = [
    "Token",
    "NormalizedText",
    "tokenize",
    "lemmatize",
    "normalize",
    "load_exception_table",
]

_VOWELS = frozenset("aeiou")

# Consonants kept doubled when undoing gemination (tell -> tell, miss -> miss).
_KEEP_DOUBLED = frozenset("lsz")


@dataclass(frozen=True)
class Token:
    """One surface span of the source text.

    ``byte_offset`` is the UTF-8 byte index of the span start; offsets are
    strictly increasing across a token sequence.
    """

    surface: str
    lemma: str = ""
    is_punct: bool = False
    byte_offset: int = 0


@dataclass(frozen=True)
class NormalizedText:
    """NFC source text plus its lemmatized token sequence."""

    source: str
    tokens: tuple[Token, ...] = field(default=())

    def lemmas(self, skip_punct: bool = False) -> list[str]:
        if skip_punct:
            return [t.lemma for t in self.tokens if not t.is_punct]
        return [t.lemma for t in self.tokens]


def _is_punct_char(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[Token]:
    """Split ``text`` into word and punctuation tokens, lemmas unset.

    Splitting happens on Unicode whitespace and punctuation boundaries;
    each punctuation character becomes its own token. Concatenating the
    surfaces plus the skipped whitespace reconstructs the input exactly.
    Total: any input, including empty, is accepted.
    """
    tokens: list[Token] = []
    word_start = -1  # char index of current word run, -1 when not in a run
    word_bstart = 0
    bpos = 0
    for i, ch in enumerate(text):
        if ch.isspace() or _is_punct_char(ch):
            if word_start >= 0:
                tokens.append(
                    Token(surface=text[word_start:i], byte_offset=word_bstart)
                )
                word_start = -1
            if not ch.isspace():
                tokens.append(Token(surface=ch, is_punct=True, byte_offset=bpos))
        elif word_start < 0:
            word_start = i
            word_bstart = bpos
        bpos += len(ch.encode("utf-8"))
    if word_start >= 0:
        tokens.append(Token(surface=text[word_start:], byte_offset=word_bstart))
    return tokens


@lru_cache(maxsize=1)
def load_exception_table() -> dict[str, str]:
    """Bundled irregular-form table, one ``surface<TAB>lemma`` pair per line."""
    path = resources.files("sentinel.data").joinpath("lemma_exceptions.txt")
    return parse_exception_table(path.read_text(encoding="utf-8"))


def parse_exception_table(content: str) -> dict[str, str]:
    table: dict[str, str] = {}
    for lineno, line in enumerate(content.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValueError(f"malformed exception-table line {lineno}: {line!r}")
        table[parts[0].lower()] = parts[1].lower()
    return table


def _ends_cvc(stem: str) -> bool:
    # consonant-vowel-consonant tail, final consonant not w/x/y: the classic
    # cue that a silent "e" was dropped before the suffix (mak-ing -> make)
    if len(stem) < 3:
        return False
    c1, v, c2 = stem[-3], stem[-2], stem[-1]
    return (
        c1 not in _VOWELS
        and v in _VOWELS
        and c2 not in _VOWELS
        and c2 not in "wxy"
    )


def _undo_doubling(stem: str) -> str:
    if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS:
        if stem[-1] not in _KEEP_DOUBLED:
            return stem[:-1]
    return stem


def _restore(stem: str) -> str:
    """Post-strip cleanup shared by the -ing/-ed/-est rules."""
    undone = _undo_doubling(stem)
    if undone != stem:
        return undone
    # -se verbs (close, promise, disclose) lose their "e" at any length;
    # a vowel before the "s" (bias, focus via exceptions) means no "e"
    if (
        len(stem) >= 3
        and stem.endswith("s")
        and stem[-2] in _VOWELS
        and stem[-3] not in _VOWELS
    ):
        return stem + "e"
    if len(stem) <= 5 and _ends_cvc(stem):
        return stem + "e"
    return stem


def _strip_suffix(word: str) -> str:
    n = len(word)
    # plural / 3rd-person -s family
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith("ies") and n >= 5:
        return word[:-3] + "y"
    if word.endswith(("xes", "zzes", "ches", "shes", "oes")) and n >= 5:
        return word[:-2]
    if (
        word.endswith("s")
        and n >= 4
        and not word.endswith(("ss", "us", "is"))
    ):
        return word[:-1]
    # progressive -ing
    if word.endswith("ing") and n >= 6:
        return _restore(word[:-3])
    # past -ed
    if word.endswith("ied") and n >= 5:
        return word[:-3] + "y"
    if word.endswith("ed") and n >= 5 and not word.endswith("eed"):
        return _restore(word[:-2])
    # comparatives / superlatives
    if word.endswith("iest") and n >= 6:
        return word[:-4] + "y"
    if word.endswith("est") and n >= 7:
        return _restore(word[:-3])
    if word.endswith("ier") and n >= 5:
        return word[:-3] + "y"
    if word.endswith("er") and n >= 5:
        stem = word[:-2]
        # only doubled-consonant comparatives (bigger, hotter); plain -er is
        # left alone so agent nouns (developer, manager) survive intact
        undone = _undo_doubling(stem)
        if undone != stem:
            return undone
    return word


def lemmatize(word: str) -> str:
    """Lowercase base form of ``word``; total and idempotent.

    The exception table wins over suffix rules; non-ASCII and non-alphabetic
    surfaces map to their lowercased form unchanged.
    """
    w = word.lower()
    table = load_exception_table()
    if w in table:
        return table[w]
    if not w.isascii() or not w.isalpha():
        return w
    stripped = _strip_suffix(w)
    if stripped == w:
        return w
    if stripped in table:
        return table[stripped]
    # idempotence guard: a stem the rules would strip again is unreliable,
    # so keep the original surface rather than over-stripping
    if _strip_suffix(stripped) != stripped:
        return w
    return stripped


def normalize(text: str) -> NormalizedText:
    """NFC-normalize, tokenize, and lemmatize ``text``. Deterministic."""
    source = unicodedata.normalize("NFC", text)
    tokens = tuple(
        Token(
            surface=t.surface,
            lemma=lemmatize(t.surface),
            is_punct=t.is_punct,
            byte_offset=t.byte_offset,
        )
        for t in tokenize(source)
    )
    return NormalizedText(source=source, tokens=tokens)
