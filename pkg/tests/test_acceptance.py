"""Acceptance suite: one test per release criterion, tolerances pinned.

Runs entirely offline with the stub embedding provider and bundled data.
The terminal summary prints one PASS/FAIL line per criterion.
"""

import json
import math
import random
import time

import httpx
import numpy as np
import pytest
from fastapi.testclient import TestClient

from sentinel.dataio import LabeledExample, fixture_corpus_path, load_fixture_corpus
from sentinel.detector import HeuristicDetector
from sentinel.embeddings import ProviderConfig, StubProvider
from sentinel.gateway import GatewayConfig, create_app
from sentinel.head import (
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
from sentinel.metrics import ConfusionMatrix, metrics_from_matrix
from sentinel.rules import (
    extract_features,
    load_default_pack,
    pack_from_dict,
    pack_to_dict,
)

pytestmark = pytest.mark.acceptance


def _fixture_docs():
    return [
        json.loads(line)
        for line in fixture_corpus_path().read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def test_rules_golden_suite():
    """Hand-annotated fixtures reproduce their bit vectors exactly, in < 1 s."""
    pack = load_default_pack()
    docs = _fixture_docs()
    per_feature_pos = {name: 0 for name in pack.names}
    per_feature_neg = {name: 0 for name in pack.names}
    for doc in docs:
        source = doc["source"]
        if source.startswith("fixture:is_"):
            _, name, kind = source.split(":")
            if kind == "pos":
                per_feature_pos[name] += 1
            elif kind == "neg":
                per_feature_neg[name] += 1
    assert all(c >= 4 for c in per_feature_pos.values()), per_feature_pos
    assert all(c >= 2 for c in per_feature_neg.values()), per_feature_neg

    start = time.perf_counter()
    for doc in docs:
        feats = extract_features(doc["text"], pack)
        want = {name: (1 if name in doc["expected_bits"] else 0)
                for name in pack.names}
        assert feats.as_dict() == want, doc["text"]
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"golden suite took {elapsed:.3f}s"


def test_semantic_monotonicity():
    """1,000 randomized (text, suffix) pairs never unset a semantic bit."""
    pack = load_default_pack()
    n_sem = len(pack.semantic)
    rng = random.Random(20260809)
    vocab = [
        "ignore", "reveal", "urgent", "secret", "binary", "role", "boss",
        "illegal", "the", "a", "and", "please", "now", "hello", "world",
        "weather", "q", ":", "a", "?", ".", ",", "stop", "ناد", "漢字",
        "Xx", "YELL", "mixedCase",
    ]

    def sample_text(max_words):
        return " ".join(
            rng.choice(vocab) for _ in range(rng.randint(0, max_words))
        )

    for _ in range(1000):
        text = sample_text(12)
        suffix = sample_text(6)
        base = extract_features(text, pack).bits[:n_sem]
        extended = extract_features(text + " " + suffix, pack).bits[:n_sem]
        assert all(b >= a for a, b in zip(base, extended)), (text, suffix)


def test_threshold_boundaries():
    """Q&A counts {2,3,4} -> bits {0,1,1}; repeat runs {2,3,4} -> {0,1,1}."""
    pack = load_default_pack()

    def qa_text(pairs):
        return " ".join(f"Q: item {i} A: value {i}" for i in range(pairs))

    def repeat_text(run):
        return " ".join(["echo"] * run) + " done"

    for count, want in ((2, 0), (3, 1), (4, 1)):
        bits = extract_features(qa_text(count), pack).as_dict()
        assert bits["is_shot_attack"] == want, f"qa pairs {count}"
        bits = extract_features(repeat_text(count), pack).as_dict()
        assert bits["is_repeated_token"] == want, f"repeat run {count}"


def test_gradient_check():
    """Analytic gradients match central differences (eps=1e-5, rel err <= 1e-4)."""
    eps = 1e-5
    worst = 0.0
    for trial in range(20):
        rng = np.random.Generator(np.random.PCG64(1000 + trial))
        emb_dim = int(rng.integers(2, 5))
        n_heur = int(rng.integers(1, 4))
        hidden = int(rng.integers(2, 6))
        params = init_params(emb_dim, n_heur, hidden=hidden, seed=trial)
        x = rng.normal(size=emb_dim + n_heur)
        label = int(rng.integers(0, 2))
        analytic = backward(x, label, params)
        for key in ("W1", "b1", "W2", "b2"):
            arr = getattr(params, key)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + eps
                up = loss(forward(x, params), label)
                arr[idx] = orig - eps
                down = loss(forward(x, params), label)
                arr[idx] = orig
                fd = (up - down) / (2 * eps)
                a = analytic[key][idx]
                rel = abs(a - fd) / max(1.0, abs(a), abs(fd))
                worst = max(worst, rel)
    assert worst <= 1e-4, f"max relative error {worst:.3e}"


def test_softmax_and_loss_identities():
    """Probabilities sum to 1 within 1e-9; uniform loss equals ln 2 within 1e-12."""
    for seed in range(50):
        rng = np.random.Generator(np.random.PCG64(seed))
        params = init_params(4, 3, hidden=6, seed=seed)
        pred = forward(rng.normal(size=7) * rng.uniform(0.1, 50), params)
        assert abs(pred.p_benign + pred.p_injection - 1.0) <= 1e-9

    zero = init_params(2, 1, hidden=3, seed=0)
    zero.W1[:] = 0.0
    zero.b1[:] = 0.0
    zero.W2[:] = 0.0
    zero.b2[:] = 0.0
    pred = forward(np.array([1.0, -1.0, 1.0]), zero)
    for label in (0, 1):
        assert abs(loss(pred, label) - math.log(2)) <= 1e-12


def _separable_corpus(n=200, seed=0):
    rng = random.Random(seed)
    benign_vocab = ["weather", "recipe", "garden", "music", "travel",
                    "history", "science", "painting"]
    attack_vocab = ["ignore", "reveal", "secret", "urgent", "encode",
                    "pretend", "developer", "illegal", "bypass", "disregard"]
    texts, labels = [], []
    for i in range(n):
        label = i % 2
        vocab = attack_vocab if label else benign_vocab
        texts.append(" ".join(rng.choice(vocab)
                              for _ in range(rng.randint(4, 9))))
        labels.append(label)
    return texts, labels


def _featurize(texts, labels, pack, provider):
    embs = provider.embed_batch(texts)
    pairs = [
        (fuse(e, extract_features(t, pack)), y)
        for e, t, y in zip(embs, texts, labels)
    ]
    return pairs


def test_training_sanity():
    """Separable stub-embedded set: >=95% train accuracy within 50 epochs,
    bit-identical across same-seed runs, in under 30 s."""
    start = time.perf_counter()
    pack = load_default_pack()
    provider = StubProvider(ProviderConfig(dim=64))
    texts, labels = _separable_corpus(200)
    pairs = _featurize(texts, labels, pack, provider)
    config = TrainConfig(learning_rate=1e-2, batch_size=16, weight_decay=0.0,
                         patience=10, max_epochs=50, seed=42, hidden=32)
    params, log = train(pairs, pairs, config)
    assert len(log) <= 50

    correct = sum(
        1
        for (feat, y) in pairs
        if forward(feat, params).label == y
    )
    accuracy = correct / len(pairs)
    assert accuracy >= 0.95, f"train accuracy {accuracy:.3f}"

    again, _ = train(pairs, pairs, config)
    for key in ("W1", "b1", "W2", "b2"):
        assert np.array_equal(getattr(params, key), getattr(again, key))

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"training sanity took {elapsed:.1f}s"


def test_heuristic_detector_on_bundled_corpus():
    """Heuristics-only: recall >= 0.8 on attacks, FPR <= 0.2 on benign fixtures."""
    corpus = load_fixture_corpus()
    detector = HeuristicDetector(load_default_pack())
    attacks = [e for e in corpus if e.label == 1]
    benign = [e for e in corpus if e.label == 0]
    assert attacks and benign

    hits = sum(1 for e in attacks if detector.detect(e.text).label == "injection")
    false_alarms = sum(
        1 for e in benign if detector.detect(e.text).label == "injection"
    )
    recall = hits / len(attacks)
    fpr = false_alarms / len(benign)
    assert recall >= 0.8, f"recall {recall:.3f}"
    assert fpr <= 0.2, f"false-positive rate {fpr:.3f}"


def test_metrics_oracle():
    """evaluate() metrics equal hand-computed values on 5 crafted sets."""
    cases = [
        # (tp, fp, fn, tn) -> accuracy, precision, recall as exact fractions;
        # f1 follows from the definition 2PR/(P+R) applied to those fractions
        ((3, 1, 1, 5), (8 / 10, 3 / 4, 3 / 4)),
        ((4, 0, 0, 6), (1.0, 1.0, 1.0)),
        ((0, 0, 4, 6), (6 / 10, 0.0, 0.0)),
        ((5, 5, 0, 0), (5 / 10, 5 / 10, 1.0)),
        ((2, 3, 4, 1), (3 / 10, 2 / 5, 1 / 3)),
    ]
    for counts, (acc, prec, rec) in cases:
        tp, fp, fn, tn = counts
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        report = metrics_from_matrix(ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn))
        assert report.accuracy == acc, counts
        assert report.precision == prec, counts
        assert report.recall == rec, counts
        assert report.f1 == f1, counts

    # the same numbers through the full evaluate() path
    from sentinel.metrics import evaluate

    class TableDetector:
        def __init__(self, mapping):
            self.mapping = mapping

        def detect(self, text):
            from sentinel.detector import DetectionVerdict

            label = self.mapping[text]
            return DetectionVerdict(
                label="injection" if label else "benign",
                p_injection=float(label),
                triggered_rules=(),
                latency_micros=0,
                model_version="oracle",
                rule_pack_version="oracle",
            )

    examples, mapping = [], {}
    plan = [(1, 1)] * 3 + [(0, 1)] + [(1, 0)] + [(0, 0)] * 5
    for i, (truth, pred) in enumerate(plan):
        text = f"crafted {i}"
        mapping[text] = pred
        examples.append(LabeledExample(text=text, label=truth))
    report = evaluate(TableDetector(mapping), examples)
    assert (report.matrix.tp, report.matrix.fp, report.matrix.fn,
            report.matrix.tn) == (3, 1, 1, 5)
    assert report.accuracy == 0.8


def test_gateway_end_to_end():
    """Block mode: 403 and zero upstream calls per attack; benign bodies
    forwarded byte-identical; heuristic detection <= 5 ms per 1 KiB prompt."""
    calls = []

    async def handler(request):
        calls.append(request.content)
        return httpx.Response(200, json={"ok": True})

    config = GatewayConfig(
        upstream="http://upstream.test", mode="block", heuristics_only=True
    )
    client = TestClient(create_app(config, transport=httpx.MockTransport(handler)))

    attack_texts = [
        e.text for e in load_fixture_corpus()
        if e.source == "fixture:is_ignore:pos"
    ]
    assert attack_texts
    for text in attack_texts:
        resp = client.post(
            "/v1/chat/completions",
            json={"messages": [{"role": "user", "content": text}]},
        )
        assert resp.status_code == 403, text
        assert resp.json()["blocked"] is True
    assert calls == [], "upstream must never see blocked prompts"

    raw = json.dumps(
        {"messages": [{"role": "user", "content": "What is the capital of France?"}],
         "temperature": 0.2},
        indent=2,
    ).encode("utf-8")
    resp = client.post(
        "/v1/chat/completions",
        content=raw,
        headers={"content-type": "application/json"},
    )
    assert resp.status_code == 200
    assert calls == [raw], "benign request body must be forwarded byte-identical"

    detector = HeuristicDetector(load_default_pack())
    prompt = ("Tell me about the history of mathematics. " * 25)[:1024]
    assert len(prompt.encode("utf-8")) == 1024
    detector.detect(prompt)  # warm caches
    timings = []
    for _ in range(30):
        t0 = time.perf_counter()
        detector.detect(prompt)
        timings.append(time.perf_counter() - t0)
    median_ms = sorted(timings)[len(timings) // 2] * 1000
    assert median_ms <= 5.0, f"median detection latency {median_ms:.2f} ms"


def test_round_trips_and_dimension_checks():
    """Model and rule-pack files survive round trips; mismatches are rejected."""
    import tempfile
    from pathlib import Path

    from sentinel.head import ModelFileError
    from sentinel.rules import RulePackError

    pack = load_default_pack()
    with tempfile.TemporaryDirectory() as tmp:
        model_path = Path(tmp) / "model.json"
        params = init_params(emb_dim=32, n_heur=len(pack), hidden=16, seed=5)
        save_params(params, model_path, rule_pack_version=pack.version,
                    provider={"backend": "stub", "dim": 32})
        loaded, meta = load_params(
            model_path,
            expect_emb_dim=32,
            expect_n_heur=len(pack),
            expect_rule_pack_version=pack.version,
        )
        for key in ("W1", "b1", "W2", "b2"):
            assert np.array_equal(getattr(loaded, key), getattr(params, key))
        assert meta["provider"] == {"backend": "stub", "dim": 32}

        with pytest.raises(ModelFileError):
            load_params(model_path, expect_emb_dim=64)
        with pytest.raises(ModelFileError):
            load_params(model_path, expect_n_heur=2)
        with pytest.raises(ModelFileError):
            load_params(model_path, expect_rule_pack_version="other-pack")

        pack_path = Path(tmp) / "pack.json"
        pack_path.write_text(json.dumps(pack_to_dict(pack)), encoding="utf-8")
        from sentinel.rules import load_pack

        assert load_pack(pack_path) == pack

        doc = pack_to_dict(pack)
        doc["semantic"][0]["synonyms"] = []
        with pytest.raises(RulePackError):
            pack_from_dict(doc)
