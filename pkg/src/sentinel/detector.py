"""Detectors: the library-level entry points that produce verdicts.

``HeuristicDetector`` labels injection when any rule bit fires, needing no
model artifact. ``FusedDetector`` runs the full pipeline: heuristic bits
plus a pooled embedding, concatenated and classified by the trained head.
Both are immutable after construction and safe for concurrent use.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .embeddings import EmbeddingProvider
from .head import FusionHeadParams, forward, fuse
from .rules import RulePack, extract_features

__all__ = ["DetectionVerdict", "HeuristicDetector", "FusedDetector"]


@dataclass(frozen=True)
class DetectionVerdict:
    label: str  # "benign" | "injection"
    p_injection: float
    triggered_rules: tuple[str, ...]
    latency_micros: int
    model_version: str
    rule_pack_version: str
    degraded: bool = False

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "p_injection": self.p_injection,
            "triggered_rules": list(self.triggered_rules),
            "latency_micros": self.latency_micros,
            "model_version": self.model_version,
            "rule_pack_version": self.rule_pack_version,
            "degraded": self.degraded,
        }


class HeuristicDetector:
    """Rule bits only: injection iff any bit is set."""

    def __init__(self, pack: RulePack):
        self.pack = pack

    def detect(self, text: str) -> DetectionVerdict:
        start = time.perf_counter()
        feats = extract_features(text, self.pack)
        hit = feats.any()
        return DetectionVerdict(
            label="injection" if hit else "benign",
            p_injection=1.0 if hit else 0.0,
            triggered_rules=tuple(feats.triggered()),
            latency_micros=int((time.perf_counter() - start) * 1e6),
            model_version="heuristics-only",
            rule_pack_version=self.pack.version,
        )


class FusedDetector:
    """Dual-channel detector: embedding + rule bits through the trained head."""

    def __init__(
        self,
        pack: RulePack,
        provider: EmbeddingProvider,
        params: FusionHeadParams,
        threshold: float = 0.5,
        model_version: str = "unversioned",
    ):
        if params.emb_dim != provider.config.dim:
            raise ValueError(
                f"head expects embeddings of dim {params.emb_dim}, "
                f"provider yields {provider.config.dim}"
            )
        if params.n_heur != len(pack):
            raise ValueError(
                f"head expects {params.n_heur} rule bits, pack has {len(pack)}"
            )
        if not 0.0 < threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {threshold}")
        self.pack = pack
        self.provider = provider
        self.params = params
        self.threshold = threshold
        self.model_version = model_version

    def detect(self, text: str) -> DetectionVerdict:
        start = time.perf_counter()
        feats = extract_features(text, self.pack)
        embedding = self.provider.embed(text)
        pred = forward(fuse(embedding, feats), self.params, threshold=self.threshold)
        return DetectionVerdict(
            label="injection" if pred.label == 1 else "benign",
            p_injection=pred.p_injection,
            triggered_rules=tuple(feats.triggered()),
            latency_micros=int((time.perf_counter() - start) * 1e6),
            model_version=self.model_version,
            rule_pack_version=self.pack.version,
        )
