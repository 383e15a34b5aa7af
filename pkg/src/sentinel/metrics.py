"""Evaluation harness: confusion-matrix metrics and attack success rate.

Injection is the positive class throughout. Metrics whose denominator is
zero are reported as 0.0 and flagged rather than raising.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Protocol, Sequence

from .dataio import LabeledExample

__all__ = [
    "ConfusionMatrix",
    "EvalReport",
    "Detector",
    "confusion_from_pairs",
    "metrics_from_matrix",
    "evaluate",
    "attack_success_rate",
    "report_render",
    "report_to_json",
]


class Detector(Protocol):
    def detect(self, text: str) -> "object":  # DetectionVerdict-shaped
        ...


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    matrix: ConfusionMatrix
    rule_triggers: dict[str, int] = dc_field(default_factory=dict)
    zero_division_flags: tuple[str, ...] = ()


def confusion_from_pairs(
    y_true: Sequence[int], y_pred: Sequence[int]
) -> ConfusionMatrix:
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred lengths differ")
    tp = fp = fn = tn = 0
    for truth, pred in zip(y_true, y_pred):
        if truth == 1 and pred == 1:
            tp += 1
        elif truth == 0 and pred == 1:
            fp += 1
        elif truth == 1 and pred == 0:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def metrics_from_matrix(
    cm: ConfusionMatrix, rule_triggers: dict[str, int] | None = None
) -> EvalReport:
    flags = []
    accuracy = (cm.tp + cm.tn) / cm.total if cm.total else 0.0
    if cm.tp + cm.fp:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision = 0.0
        flags.append("precision")
    if cm.tp + cm.fn:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        recall = 0.0
        flags.append("recall")
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append("f1")
    return EvalReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        matrix=cm,
        rule_triggers=dict(rule_triggers or {}),
        zero_division_flags=tuple(flags),
    )


def evaluate(detector: Detector, examples: Sequence[LabeledExample]) -> EvalReport:
    """Score ``detector`` over ``examples``; order of examples is irrelevant."""
    if not examples:
        raise ValueError("cannot evaluate on an empty example list")
    y_true, y_pred = [], []
    triggers: Counter[str] = Counter()
    for ex in examples:
        verdict = detector.detect(ex.text)
        y_true.append(ex.label)
        y_pred.append(1 if verdict.label == "injection" else 0)
        triggers.update(verdict.triggered_rules)
    cm = confusion_from_pairs(y_true, y_pred)
    return metrics_from_matrix(cm, rule_triggers=dict(triggers))


def attack_success_rate(
    detector: Detector, attack_corpus: Sequence[LabeledExample]
) -> tuple[float, list[LabeledExample]]:
    """Fraction of known-attack prompts the detector lets through.

    An attack succeeds at this layer exactly when it is classified benign.
    Returns the rate and the successful prompts.
    """
    if not attack_corpus:
        raise ValueError("attack corpus is empty")
    passed = [
        ex for ex in attack_corpus if detector.detect(ex.text).label == "benign"
    ]
    return len(passed) / len(attack_corpus), passed


def report_to_json(report: EvalReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "matrix": {
            "tp": report.matrix.tp,
            "fp": report.matrix.fp,
            "fn": report.matrix.fn,
            "tn": report.matrix.tn,
        },
        "rule_triggers": report.rule_triggers,
        "zero_division_flags": list(report.zero_division_flags),
    }


def report_from_json(doc: dict) -> EvalReport:
    return EvalReport(
        accuracy=doc["accuracy"],
        precision=doc["precision"],
        recall=doc["recall"],
        f1=doc["f1"],
        matrix=ConfusionMatrix(**doc["matrix"]),
        rule_triggers=dict(doc.get("rule_triggers", {})),
        zero_division_flags=tuple(doc.get("zero_division_flags", ())),
    )


def report_render(report: EvalReport, fmt: str = "text") -> str:
    """Render a report as an aligned text table or as JSON."""
    if fmt == "json":
        return json.dumps(report_to_json(report), indent=2)
    cm = report.matrix
    lines = [
        "metric     value",
        "-----------------",
        f"accuracy   {report.accuracy:.4f}",
        f"precision  {report.precision:.4f}",
        f"recall     {report.recall:.4f}",
        f"f1         {report.f1:.4f}",
        "",
        f"confusion  tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn}",
    ]
    if report.zero_division_flags:
        lines.append(
            "flags      zero-division: " + ", ".join(report.zero_division_flags)
        )
    if report.rule_triggers:
        lines.append("")
        lines.append("rule triggers")
        width = max(len(n) for n in report.rule_triggers)
        for name, count in sorted(report.rule_triggers.items()):
            lines.append(f"  {name:<{width}}  {count}")
    return "\n".join(lines)
