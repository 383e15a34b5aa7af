"""Embedding service: a pretrained encoder behind the /embed wire protocol.

Any Hugging Face encoder checkpoint works; the default is a DeBERTa-v3-base
class model. Token states are mean-pooled over real tokens only (padding
and special tokens excluded) so the pooled vector reflects the text, not
the template. Inference runs serially under a lock in evaluation mode, so
identical inputs always produce identical vectors.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

DEFAULT_MODEL = "microsoft/deberta-v3-base"


@dataclass(frozen=True)
class SidecarConfig:
    model: str = DEFAULT_MODEL
    listen: str = "127.0.0.1:8090"
    max_batch: int = 64
    max_seq_len: int = 512

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")
        if self.max_seq_len < 8:
            raise ValueError(f"max_seq_len must be >= 8, got {self.max_seq_len}")


class EmbedRequest(BaseModel):
    texts: list[str]


class Encoder:
    """Loaded tokenizer + model pair with masked mean pooling."""

    def __init__(self, config: SidecarConfig):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model)
        self.model = AutoModel.from_pretrained(config.model)
        self.model.eval()
        self.dim = int(self.model.config.hidden_size)
        self._torch = torch
        self._lock = threading.Lock()

    def _truncated_indices(self, texts: list[str]) -> list[int]:
        lengths = self.tokenizer(texts, truncation=False)["input_ids"]
        return [
            i for i, ids in enumerate(lengths) if len(ids) > self.config.max_seq_len
        ]

    def embed(self, texts: list[str]) -> tuple[list[list[float]], list[int]]:
        torch = self._torch
        truncated = self._truncated_indices(texts)
        batch = self.tokenizer(
            texts,
            padding=True,
            truncation=True,
            max_length=self.config.max_seq_len,
            return_tensors="pt",
            return_special_tokens_mask=True,
        )
        special = batch.pop("special_tokens_mask")
        with self._lock, torch.no_grad():
            states = self.model(**batch).last_hidden_state
        mask = (batch["attention_mask"] * (1 - special)).unsqueeze(-1).to(states.dtype)
        summed = (states * mask).sum(dim=1)
        counts = mask.sum(dim=1).clamp(min=1.0)
        pooled = summed / counts
        return pooled.tolist(), truncated


def create_app(config: SidecarConfig, defer_load: bool = False) -> FastAPI:
    """Build the service; the model loads on startup unless deferred."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if app.state.encoder is None and not defer_load:
            app.state.encoder = Encoder(config)
        yield

    app = FastAPI(title="sentinel-embed-sidecar", lifespan=lifespan)
    app.state.encoder = None
    app.state.config = config

    def _encoder() -> Encoder:
        if app.state.encoder is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return app.state.encoder

    @app.get("/healthz")
    def healthz():
        encoder = _encoder()
        return {"status": "ok", "model": config.model, "dim": encoder.dim}

    @app.post("/embed")
    def embed(request: EmbedRequest):
        encoder = _encoder()
        if not request.texts:
            raise HTTPException(status_code=400, detail="texts must be non-empty")
        if len(request.texts) > config.max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.texts)} exceeds max {config.max_batch}",
            )
        try:
            vectors, truncated = encoder.embed(request.texts)
        except Exception as exc:  # model failure is a 500, not a crash
            raise HTTPException(status_code=500, detail=f"encoder failure: {exc}")
        body = {"dim": encoder.dim, "vectors": vectors}
        if truncated:
            body["truncated"] = truncated
        return body

    return app
