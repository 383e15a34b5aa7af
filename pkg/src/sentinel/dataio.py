"""Labeled prompt datasets: JSONL/CSV loading and reproducible splits."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "DataError",
    "LabeledExample",
    "DatasetSplit",
    "load_jsonl",
    "load_csv",
    "write_jsonl",
    "split",
    "fixture_corpus_path",
    "load_fixture_corpus",
]

LABEL_ALIASES = {
    "0": 0,
    "1": 1,
    "benign": 0,
    "injection": 1,
}


class DataError(ValueError):
    """Dataset file is unreadable or too malformed to trust."""


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: int  # 0 benign, 1 injection
    source: str = ""

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise DataError("example text is empty")
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[LabeledExample, ...]
    val: tuple[LabeledExample, ...]
    test: tuple[LabeledExample, ...]
    seed: int
    ratios: tuple[float, float, float]


def _coerce_label(raw) -> int:
    if isinstance(raw, bool):
        return int(raw)
    if isinstance(raw, int) and raw in (0, 1):
        return raw
    key = str(raw).strip().lower()
    if key in LABEL_ALIASES:
        return LABEL_ALIASES[key]
    raise ValueError(f"unrecognized label {raw!r}")


def _report(path, bad: list[tuple[int, str]], total: int) -> None:
    if not bad:
        return
    lines = "; ".join(f"line {n}: {msg}" for n, msg in bad[:5])
    if total and len(bad) > 0.10 * total:
        raise DataError(
            f"{path}: {len(bad)}/{total} malformed lines (first: {lines})"
        )
    logger.warning("%s: skipped %d malformed line(s): %s", path, len(bad), lines)


def load_jsonl(path: str | Path, source: str | None = None) -> list[LabeledExample]:
    """One ``{"text": ..., "label": ...}`` object per line.

    Labels are accepted as 0/1 or "benign"/"injection". Malformed lines are
    collected with their line numbers; more than 10% malformed aborts.
    """
    path = Path(path)
    try:
        content = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    examples: list[LabeledExample] = []
    bad: list[tuple[int, str]] = []
    total = 0
    for lineno, line in enumerate(content.splitlines(), start=1):
        if not line.strip():
            continue
        total += 1
        try:
            doc = json.loads(line)
            examples.append(
                LabeledExample(
                    text=doc["text"],
                    label=_coerce_label(doc["label"]),
                    source=source if source is not None else str(doc.get("source", "")),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            bad.append((lineno, str(exc)))
    _report(path, bad, total)
    return examples


def load_csv(path: str | Path, source: str | None = None) -> list[LabeledExample]:
    """CSV with header columns ``text`` and ``label``; same label aliases."""
    path = Path(path)
    try:
        handle = path.open(encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    examples: list[LabeledExample] = []
    bad: list[tuple[int, str]] = []
    total = 0
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not {"text", "label"} <= set(reader.fieldnames):
            raise DataError(f"{path}: header must contain 'text' and 'label' columns")
        for lineno, row in enumerate(reader, start=2):
            total += 1
            try:
                examples.append(
                    LabeledExample(
                        text=row["text"],
                        label=_coerce_label(row["label"]),
                        source=source if source is not None else (row.get("source") or ""),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                bad.append((lineno, str(exc)))
    _report(path, bad, total)
    return examples


def write_jsonl(examples: Sequence[LabeledExample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {"text": ex.text, "label": ex.label, "source": ex.source},
                    ensure_ascii=False,
                )
                + "\n"
            )


def split(
    examples: Sequence[LabeledExample],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Seeded shuffle then contiguous cut; floor sizes, remainder to train."""
    if len(examples) < 10:
        raise DataError(f"need at least 10 examples to split, got {len(examples)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {ratios}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(examples))
    shuffled = [examples[i] for i in order]
    n = len(shuffled)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
        seed=seed,
        ratios=ratios,
    )


def fixture_corpus_path() -> Path:
    return Path(str(resources.files("sentinel.data").joinpath("fixture_corpus.jsonl")))


def load_fixture_corpus() -> list[LabeledExample]:
    """The bundled hand-labeled corpus used by tests, demos, and `rules test`."""
    return load_jsonl(fixture_corpus_path())
