"""Command-line interface: detect, train, eval, serve, rules, ingest.

Results go to stdout, diagnostics to stderr. Exit codes: 0 on success,
1 on operational failure, 2 on usage errors.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click

from . import dataio
from .detector import FusedDetector, HeuristicDetector
from .embeddings import ProviderConfig, ProviderError, make_provider
from .head import (
    ModelFileError,
    TrainConfig,
    TrainingDiverged,
    fuse,
    load_params,
    save_params,
    train as train_head,
)
from .metrics import attack_success_rate, evaluate, report_render, report_to_json
from .rules import (
    RulePackError,
    extract_features,
    load_default_pack,
    load_pack,
    pack_to_dict,
)


def _echo_err(message: str) -> None:
    click.echo(message, err=True)


def _load_rules(path: str | None):
    try:
        return load_pack(path) if path else load_default_pack()
    except (OSError, RulePackError) as exc:
        raise click.ClickException(f"rule pack: {exc}")


def _load_dataset(path: str):
    suffix = Path(path).suffix.lower()
    try:
        if suffix == ".csv":
            return dataio.load_csv(path)
        return dataio.load_jsonl(path)
    except dataio.DataError as exc:
        raise click.ClickException(str(exc))


def _provider_config(provider: str, dim: int, endpoint: str | None,
                     model_path: str | None, tokenizer: str | None) -> ProviderConfig:
    try:
        return ProviderConfig(
            backend=provider,
            dim=dim,
            endpoint=endpoint,
            model_path=model_path,
            tokenizer_path=tokenizer,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))


def _file_version(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]


provider_options = [
    click.option("--provider", default="stub",
                 type=click.Choice(["stub", "onnx_file", "remote"]),
                 show_default=True, help="Embedding backend."),
    click.option("--dim", default=768, show_default=True,
                 help="Embedding dimension."),
    click.option("--endpoint", default=None, help="Remote provider base URL."),
    click.option("--encoder-model", default=None,
                 help="ONNX model path (onnx_file backend)."),
    click.option("--encoder-tokenizer", default=None,
                 help="Tokenizer config path (onnx_file backend)."),
]


def with_provider_options(fn):
    for opt in reversed(provider_options):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(package_name="prompt-sentinel")
def main() -> None:
    """Prompt-injection detection engine and filtering gateway."""


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------


@main.command()
@click.option("--text", default=None, help="Text to score.")
@click.option("--stdin", "use_stdin", is_flag=True, help="Read the text from stdin.")
@click.option("--rules", "rules_path", default=None, help="Rule pack JSON path.")
@click.option("--model", "model_path", default=None, help="Trained model file.")
@click.option("--heuristics-only", is_flag=True, help="Skip the embedding channel.")
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--format", "fmt", default="text",
              type=click.Choice(["text", "json"]), show_default=True)
@with_provider_options
def detect(text, use_stdin, rules_path, model_path, heuristics_only, threshold,
           fmt, provider, dim, endpoint, encoder_model, encoder_tokenizer):
    """Score one prompt and print the verdict."""
    if use_stdin:
        text = sys.stdin.read()
    if text is None:
        raise click.UsageError("provide --text or --stdin")
    if not text.strip():
        raise click.UsageError("input text is empty")
    pack = _load_rules(rules_path)

    if heuristics_only or not model_path:
        det = HeuristicDetector(pack)
    else:
        try:
            params, meta = load_params(
                model_path, expect_n_heur=len(pack),
                expect_rule_pack_version=pack.version,
            )
        except ModelFileError as exc:
            raise click.ClickException(str(exc))
        saved = meta.get("provider") or {}
        cfg = _provider_config(
            saved.get("backend", provider), saved.get("dim", dim),
            endpoint, encoder_model, encoder_tokenizer,
        )
        if params.emb_dim != cfg.dim:
            raise click.ClickException(
                f"model embedding dim {params.emb_dim} != provider dim {cfg.dim}"
            )
        try:
            det = FusedDetector(pack, make_provider(cfg), params,
                                threshold=threshold,
                                model_version=_file_version(model_path))
        except (ProviderError, ValueError) as exc:
            raise click.ClickException(str(exc))

    try:
        verdict = det.detect(text)
    except ProviderError as exc:
        raise click.ClickException(f"embedding provider: {exc}")

    if fmt == "json":
        click.echo(json.dumps(verdict.to_dict()))
    else:
        click.echo(f"label: {verdict.label}")
        click.echo(f"p_injection: {verdict.p_injection:.6f}")
        click.echo(f"triggered: {', '.join(verdict.triggered_rules) or '(none)'}")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


@main.command()
@click.option("--data", "data_path", required=True, help="Labeled JSONL/CSV corpus.")
@click.option("--rules", "rules_path", default=None, help="Rule pack JSON path.")
@click.option("--out", "out_path", required=True, help="Where to write the model.")
@click.option("--learning-rate", default=1e-3, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--weight-decay", default=0.02, show_default=True)
@click.option("--patience", default=3, show_default=True)
@click.option("--max-epochs", default=100, show_default=True)
@click.option("--hidden", default=256, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--val-ratio", default=0.1, show_default=True)
@click.option("--preset", default=None, type=click.Choice(["paper"]),
              help="Hyperparameter preset; explicit flags still win.")
@with_provider_options
@click.pass_context
def train(ctx, data_path, rules_path, out_path, learning_rate, batch_size,
          weight_decay, patience, max_epochs, hidden, seed, val_ratio, preset,
          provider, dim, endpoint, encoder_model, encoder_tokenizer):
    """Train the fusion head on a labeled corpus and write the model file."""
    # val and test each take val_ratio, so the train share must stay positive
    if not 0.0 < val_ratio < 0.5:
        raise click.UsageError(f"--val-ratio must be in (0, 0.5), got {val_ratio}")
    from click.core import ParameterSource

    if preset == "paper" and ctx.get_parameter_source(
        "learning_rate"
    ) is not ParameterSource.COMMANDLINE:
        learning_rate = 2e-5  # batch size, decay, patience defaults already match
    try:
        config = TrainConfig(
            learning_rate=learning_rate, batch_size=batch_size,
            weight_decay=weight_decay, patience=patience,
            max_epochs=max_epochs, hidden=hidden, seed=seed,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))

    pack = _load_rules(rules_path)
    examples = _load_dataset(data_path)
    try:
        parts = dataio.split(
            examples, ratios=(1.0 - 2 * val_ratio, val_ratio, val_ratio), seed=seed
        )
    except dataio.DataError as exc:
        raise click.ClickException(str(exc))

    cfg = _provider_config(provider, dim, endpoint, encoder_model, encoder_tokenizer)
    try:
        emb_provider = make_provider(cfg)
    except ProviderError as exc:
        raise click.ClickException(str(exc))

    def featurize(rows):
        try:
            embs = emb_provider.embed_batch([r.text for r in rows])
        except ProviderError as exc:
            raise click.ClickException(f"embedding provider: {exc}")
        return [
            (fuse(e, extract_features(r.text, pack)), r.label)
            for e, r in zip(embs, rows)
        ]

    _echo_err(f"featurizing {len(parts.train)} train / {len(parts.val)} val examples")
    try:
        params, log = train_head(featurize(parts.train), featurize(parts.val), config)
    except (TrainingDiverged, ValueError) as exc:
        raise click.ClickException(f"training failed: {exc}")

    for row in log:
        _echo_err(
            f"epoch {row['epoch']:>3}  train {row['train_loss']:.4f}  "
            f"val {row['val_loss']:.4f}" + ("  *" if row["improved"] else "")
        )
    save_params(params, out_path, rule_pack_version=pack.version,
                provider=cfg.to_dict())
    click.echo(out_path)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


@main.command("eval")
@click.option("--data", "data_path", required=True, help="Labeled JSONL/CSV corpus.")
@click.option("--model", "model_path", default=None, help="Trained model file.")
@click.option("--rules", "rules_path", default=None, help="Rule pack JSON path.")
@click.option("--heuristics-only", is_flag=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--asr", is_flag=True,
              help="Also report the attack success rate over label-1 prompts.")
@click.option("--out", "out_path", default=None, help="Write the JSON report here.")
@with_provider_options
def eval_cmd(data_path, model_path, rules_path, heuristics_only, threshold, asr,
             out_path, provider, dim, endpoint, encoder_model, encoder_tokenizer):
    """Evaluate a detector over a labeled corpus."""
    if not heuristics_only and not model_path:
        raise click.UsageError("provide --model or --heuristics-only")
    pack = _load_rules(rules_path)
    examples = _load_dataset(data_path)
    if not examples:
        raise click.ClickException(f"{data_path}: no usable examples")

    if heuristics_only:
        det = HeuristicDetector(pack)
    else:
        try:
            params, meta = load_params(
                model_path, expect_n_heur=len(pack),
                expect_rule_pack_version=pack.version,
            )
        except ModelFileError as exc:
            raise click.ClickException(str(exc))
        saved = meta.get("provider") or {}
        cfg = _provider_config(
            saved.get("backend", provider), saved.get("dim", dim),
            endpoint, encoder_model, encoder_tokenizer,
        )
        try:
            det = FusedDetector(pack, make_provider(cfg), params,
                                threshold=threshold,
                                model_version=_file_version(model_path))
        except (ProviderError, ValueError) as exc:
            raise click.ClickException(str(exc))

    try:
        report = evaluate(det, examples)
    except ProviderError as exc:
        raise click.ClickException(f"embedding provider: {exc}")
    click.echo(report_render(report))
    doc = report_to_json(report)
    if asr:
        attacks = [ex for ex in examples if ex.label == 1]
        if attacks:
            rate, passed = attack_success_rate(det, attacks)
            doc["attack_success_rate"] = rate
            doc["attacks_passed"] = len(passed)
            click.echo(
                f"\nASR        {100 * rate:.2f}% ({len(passed)}/{len(attacks)} passed)"
            )
    if out_path:
        Path(out_path).write_text(json.dumps(doc, indent=2), encoding="utf-8")
        _echo_err(f"report written to {out_path}")


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", default=None, help="Gateway TOML config.")
@click.option("--listen", default=None, help="Override listen address host:port.")
@click.option("--upstream", default=None, help="Override upstream base URL.")
@click.option("--mode", default=None, type=click.Choice(["block", "flag"]))
@click.option("--threshold", default=None, type=float)
def serve(config_path, listen, upstream, mode, threshold):
    """Run the detection and filtering gateway."""
    import uvicorn

    from .gateway import GatewayConfigError, create_app, load_gateway_config
    from dataclasses import replace

    try:
        cfg = load_gateway_config(config_path)
        overrides = {
            k: v for k, v in {
                "listen": listen, "upstream": upstream,
                "mode": mode, "threshold": threshold,
            }.items() if v is not None
        }
        if overrides:
            cfg = replace(cfg, **overrides)
            cfg.validate()
    except (OSError, GatewayConfigError, ValueError) as exc:
        raise click.ClickException(f"gateway config: {exc}")

    host, _, port = cfg.listen.partition(":")
    app = create_app(cfg)
    _echo_err(f"listening on {cfg.listen} (mode={cfg.mode})")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8088),
                log_level="warning")


# ---------------------------------------------------------------------------
# rules
# ---------------------------------------------------------------------------


@main.group()
def rules() -> None:
    """Inspect and check rule packs."""


@rules.command("validate")
@click.argument("pack_path")
def rules_validate(pack_path):
    """Validate a rule pack file and report its layout."""
    try:
        pack = load_pack(pack_path)
    except (OSError, RulePackError) as exc:
        raise click.ClickException(f"invalid rule pack: {exc}")
    click.echo(f"version: {pack.version}")
    click.echo(f"features ({len(pack)}): {', '.join(pack.names)}")
    for rule in pack.semantic:
        click.echo(f"  {rule.name}: {len(rule.synonym_set)} match terms")
    for rule in pack.structural:
        click.echo(f"  {rule.name}: {rule.kind} >= {rule.threshold}")


@rules.command("test")
@click.option("--rules", "rules_path", default=None, help="Rule pack JSON path.")
@click.option("--data", "data_path", default=None,
              help="Labeled corpus (defaults to the bundled fixtures).")
def rules_test(rules_path, data_path):
    """Run the heuristic channel over a labeled corpus and summarize."""
    pack = _load_rules(rules_path)
    examples = (
        _load_dataset(data_path) if data_path else dataio.load_fixture_corpus()
    )
    det = HeuristicDetector(pack)
    report = evaluate(det, examples)
    click.echo(report_render(report))


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


@main.command()
@click.argument("input_path")
@click.option("--out", "out_path", required=True, help="Canonical JSONL output.")
def ingest(input_path, out_path):
    """Convert a JSONL or CSV corpus into the canonical JSONL form."""
    examples = _load_dataset(input_path)
    if not examples:
        raise click.ClickException(f"{input_path}: no usable examples")
    dataio.write_jsonl(examples, out_path)
    counts = sum(1 for e in examples if e.label == 1)
    _echo_err(f"{len(examples)} examples ({counts} injection) -> {out_path}")
    click.echo(out_path)


if __name__ == "__main__":
    main()
