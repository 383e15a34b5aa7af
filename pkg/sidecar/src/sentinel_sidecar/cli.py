"""Launcher for the embedding sidecar."""

from __future__ import annotations

import click

from .app import DEFAULT_MODEL, SidecarConfig, create_app


@click.command()
@click.option("--model", default=DEFAULT_MODEL, show_default=True,
              help="Hugging Face model name or local checkpoint path.")
@click.option("--listen", default="127.0.0.1:8090", show_default=True)
@click.option("--max-batch", default=64, show_default=True)
@click.option("--max-seq-len", default=512, show_default=True)
def main(model, listen, max_batch, max_seq_len):
    """Serve pooled transformer embeddings over POST /embed."""
    import uvicorn

    try:
        config = SidecarConfig(model=model, listen=listen, max_batch=max_batch,
                               max_seq_len=max_seq_len)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    host, _, port = config.listen.partition(":")
    uvicorn.run(create_app(config), host=host or "127.0.0.1",
                port=int(port or 8090), log_level="info")


if __name__ == "__main__":
    main()
