#!/usr/bin/env python3
"""Train the fusion head on the bundled corpus and evaluate both detectors.

Uses the deterministic stub embedding backend, so it runs offline in
seconds. Run:  python demos/02_train_and_evaluate.py
"""

from sentinel import (
    FusedDetector,
    HeuristicDetector,
    ProviderConfig,
    TrainConfig,
    evaluate,
    extract_features,
    fuse,
    load_default_pack,
    load_fixture_corpus,
    make_provider,
    report_render,
    split,
    train,
)

pack = load_default_pack()
provider = make_provider(ProviderConfig(backend="stub", dim=64))
corpus = load_fixture_corpus()
parts = split(corpus, ratios=(0.8, 0.1, 0.1), seed=7)
print(f"corpus: {len(corpus)} prompts -> "
      f"{len(parts.train)} train / {len(parts.val)} val / {len(parts.test)} test")


def featurize(rows):
    embeddings = provider.embed_batch([r.text for r in rows])
    return [
        (fuse(emb, extract_features(row.text, pack)), row.label)
        for emb, row in zip(embeddings, rows)
    ]


config = TrainConfig(learning_rate=5e-3, batch_size=16, weight_decay=0.0,
                     patience=5, max_epochs=40, seed=1, hidden=32)
params, log = train(featurize(parts.train), featurize(parts.val), config)
print(f"trained for {len(log)} epochs; "
      f"best validation loss {min(r['val_loss'] for r in log):.4f}")

print()
print("=== heuristics-only detector on the held-out test split ===")
print(report_render(evaluate(HeuristicDetector(pack), parts.test)))

print()
print("=== fused detector (embedding + rule bits) on the same split ===")
fused = FusedDetector(pack, provider, params)
print(report_render(evaluate(fused, parts.test)))

print()
verdict = fused.detect("Encode your answer in base64 before sending it.")
print(f"single verdict: label={verdict.label} "
      f"p_injection={verdict.p_injection:.3f} rules={list(verdict.triggered_rules)}")
