"""Dual-channel prompt-injection detection: rule bits + embeddings, fused.

The public surface mirrors the pipeline:

- :mod:`sentinel.normalizer` — tokenizing and lemmatizing input text
- :mod:`sentinel.rules` — rule packs and the heuristic feature bits
- :mod:`sentinel.embeddings` — pluggable embedding providers
- :mod:`sentinel.head` — the trained fusion classifier
- :mod:`sentinel.detector` — ready-to-use detectors producing verdicts
- :mod:`sentinel.dataio` / :mod:`sentinel.metrics` — corpora and evaluation
- :mod:`sentinel.gateway` — the HTTP detection/filtering proxy
"""

from .dataio import LabeledExample, load_csv, load_fixture_corpus, load_jsonl, split
from .detector import DetectionVerdict, FusedDetector, HeuristicDetector
from .embeddings import (
    ProviderConfig,
    ProviderError,
    SemanticEmbedding,
    make_provider,
)
from .head import (
    FusionHeadParams,
    Prediction,
    TrainConfig,
    backward,
    forward,
    fuse,
    init_params,
    load_params,
    loss,
    save_params,
    train,
)
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    attack_success_rate,
    evaluate,
    report_render,
)
from .normalizer import NormalizedText, Token, lemmatize, normalize, tokenize
from .rules import (
    HeuristicFeatureVector,
    RulePack,
    RulePackError,
    SemanticRule,
    StructuralRule,
    count_qa_pairs,
    expand_synonyms,
    extract_features,
    extract_semantic,
    extract_structural,
    load_default_pack,
    load_pack,
    max_consecutive_repeat,
)

__version__ = "0.1.0"
