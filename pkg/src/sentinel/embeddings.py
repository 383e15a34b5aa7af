"""Semantic embedding providers.

A provider turns text into a fixed-dimension pooled vector. Three backends:

* ``stub`` — deterministic feature hashing of lemmas, for tests and offline
  training runs; needs no model artifact.
* ``onnx_file`` — a local ONNX encoder (requires the ``onnxruntime`` extra);
  token states are mean-pooled over the attention mask.
* ``remote`` — an HTTP sidecar speaking ``POST /embed``
  ``{"texts": [...]}`` -> ``{"dim": d, "vectors": [[...], ...]}``.

All providers are immutable after construction and safe to share across
threads. Every returned vector has exactly the configured dimension.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from typing import Sequence

import httpx
import numpy as np

from .normalizer import normalize

__all__ = [
    "ProviderError",
    "ProviderUnavailable",
    "ProviderTimeout",
    "DimensionMismatch",
    "BatchItemError",
    "SemanticEmbedding",
    "ProviderConfig",
    "EmbeddingProvider",
    "StubProvider",
    "OnnxProvider",
    "RemoteProvider",
    "make_provider",
    "validate_embed_response",
]

DEFAULT_DIM = 768

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 1 << 64


class ProviderError(RuntimeError):
    """Base class for embedding-provider failures."""


class ProviderUnavailable(ProviderError):
    """Backend cannot be reached or refused the request."""


class ProviderTimeout(ProviderError):
    """Backend did not answer within the configured timeout."""


class DimensionMismatch(ProviderError):
    """Backend returned vectors of an unexpected dimension."""


class BatchItemError(ProviderError):
    """A batch element failed; ``index`` locates it."""

    def __init__(self, index: int, message: str):
        super().__init__(f"batch element {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class SemanticEmbedding:
    values: np.ndarray
    provider_id: str

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ProviderError(f"{self.provider_id}: non-finite embedding values")


@dataclass(frozen=True)
class ProviderConfig:
    """Backend selection plus backend-specific settings."""

    backend: str = "stub"
    dim: int = DEFAULT_DIM
    model_path: str | None = None
    tokenizer_path: str | None = None
    endpoint: str | None = None
    timeout_s: float = 10.0
    max_inflight: int = 8

    def __post_init__(self) -> None:
        if self.backend not in ("stub", "onnx_file", "remote"):
            raise ValueError(f"unknown embedding backend {self.backend!r}")
        if self.dim < 1:
            raise ValueError(f"dimension must be positive, got {self.dim}")

    def to_dict(self) -> dict:
        return {"backend": self.backend, "dim": self.dim}


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) % _U64
    return h


class EmbeddingProvider:
    """Shared batch plumbing; subclasses implement ``_embed_one``."""

    config: ProviderConfig
    provider_id: str = "base"

    def embed(self, text: str) -> SemanticEmbedding:
        values = self._embed_one(text)
        if values.shape != (self.config.dim,):
            raise DimensionMismatch(
                f"{self.provider_id}: got {values.shape[0]} values, "
                f"expected {self.config.dim}"
            )
        return SemanticEmbedding(values=values, provider_id=self.provider_id)

    def embed_batch(self, texts: Sequence[str]) -> list[SemanticEmbedding]:
        out = []
        for i, text in enumerate(texts):
            try:
                out.append(self.embed(text))
            except ProviderError as exc:
                raise BatchItemError(i, str(exc)) from exc
        return out

    def _embed_one(self, text: str) -> np.ndarray:
        raise NotImplementedError


class StubProvider(EmbeddingProvider):
    """Feature-hash lemmas into ``dim`` buckets and L2-normalize.

    FNV-1a over the lemma bytes keeps the mapping stable across processes
    and platforms. Empty text embeds to the zero vector.
    """

    provider_id = "stub"

    def __init__(self, config: ProviderConfig):
        self.config = config

    def _embed_one(self, text: str) -> np.ndarray:
        counts = np.zeros(self.config.dim, dtype=np.float64)
        for tok in normalize(text).tokens:
            counts[_fnv1a64(tok.lemma.encode("utf-8")) % self.config.dim] += 1.0
        norm = float(np.linalg.norm(counts))
        return counts / norm if norm > 0.0 else counts


class OnnxProvider(EmbeddingProvider):
    """Local ONNX encoder with masked mean pooling.

    The session and tokenizer are loaded eagerly so a missing or invalid
    model file fails at construction, never mid-call.
    """

    provider_id = "onnx_file"

    def __init__(self, config: ProviderConfig):
        if not config.model_path:
            raise ProviderError("onnx_file backend requires model_path")
        try:
            import onnxruntime  # noqa: F401  (optional extra)
        except ImportError as exc:
            raise ProviderError(
                "onnx_file backend requires the 'onnx' extra (onnxruntime)"
            ) from exc
        from pathlib import Path

        if not Path(config.model_path).is_file():
            raise ProviderError(f"model file not found: {config.model_path}")
        if not config.tokenizer_path or not Path(config.tokenizer_path).is_file():
            raise ProviderError(
                f"tokenizer config not found: {config.tokenizer_path}"
            )
        self.config = config
        self._session = onnxruntime.InferenceSession(config.model_path)
        self._vocab = self._load_vocab(config.tokenizer_path)

    @staticmethod
    def _load_vocab(path: str) -> dict[str, int]:
        doc = json.loads(open(path, encoding="utf-8").read())
        vocab = doc.get("vocab")
        if not isinstance(vocab, dict):
            raise ProviderError("tokenizer config missing 'vocab' mapping")
        return vocab

    def _embed_one(self, text: str) -> np.ndarray:
        unk = self._vocab.get("[UNK]", 0)
        ids = [
            self._vocab.get(t.lemma, unk) for t in normalize(text).tokens
        ] or [unk]
        input_ids = np.asarray([ids], dtype=np.int64)
        mask = np.ones_like(input_ids)
        (states,) = self._session.run(
            None, {"input_ids": input_ids, "attention_mask": mask}
        )
        pooled = states[0].mean(axis=0).astype(np.float64)
        return pooled


class RemoteProvider(EmbeddingProvider):
    """HTTP client for the ``/embed`` sidecar protocol."""

    provider_id = "remote"

    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None):
        if not config.endpoint:
            raise ProviderError("remote backend requires endpoint")
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout_s)
        self._gate = threading.Semaphore(config.max_inflight)

    def _post(self, texts: Sequence[str]) -> dict:
        url = self.config.endpoint.rstrip("/") + "/embed"
        with self._gate:
            try:
                resp = self._client.post(url, json={"texts": list(texts)})
            except httpx.TimeoutException as exc:
                raise ProviderTimeout(f"remote: {exc}") from exc
            except httpx.HTTPError as exc:
                raise ProviderUnavailable(f"remote: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderUnavailable(
                f"remote: status {resp.status_code}: {resp.text[:200]}"
            )
        try:
            return resp.json()
        except json.JSONDecodeError as exc:
            raise ProviderUnavailable(f"remote: invalid JSON body ({exc})") from exc

    def _vectors(self, texts: Sequence[str]) -> list[np.ndarray]:
        doc = self._post(texts)
        err = validate_embed_response(doc, expected_dim=self.config.dim)
        if err:
            raise DimensionMismatch(f"remote: {err}")
        vectors = doc["vectors"]
        if len(vectors) != len(texts):
            raise ProviderUnavailable(
                f"remote: sent {len(texts)} texts, got {len(vectors)} vectors"
            )
        return [np.asarray(v, dtype=np.float64) for v in vectors]

    def _embed_one(self, text: str) -> np.ndarray:
        return self._vectors([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[SemanticEmbedding]:
        if not texts:
            return []
        out = []
        for i, values in enumerate(self._vectors(texts)):
            if values.shape != (self.config.dim,):
                raise BatchItemError(
                    i, f"got {values.shape[0]} values, expected {self.config.dim}"
                )
            out.append(
                SemanticEmbedding(values=values, provider_id=self.provider_id)
            )
        return out


def validate_embed_response(doc: object, expected_dim: int | None = None) -> str | None:
    """Check a ``/embed`` response against the wire contract.

    Returns a description of the first violation, or None if conformant.
    Shared by the remote provider and the sidecar conformance tests.
    """
    if not isinstance(doc, dict):
        return "response is not a JSON object"
    if "dim" not in doc or "vectors" not in doc:
        return "response must carry 'dim' and 'vectors'"
    dim = doc["dim"]
    if not isinstance(dim, int) or dim < 1:
        return f"'dim' must be a positive integer, got {dim!r}"
    if expected_dim is not None and dim != expected_dim:
        return f"dim {dim} does not match configured {expected_dim}"
    vectors = doc["vectors"]
    if not isinstance(vectors, list):
        return "'vectors' must be a list"
    for i, vec in enumerate(vectors):
        if not isinstance(vec, list) or len(vec) != dim:
            return f"vector {i} does not have length {dim}"
        if not all(isinstance(x, (int, float)) for x in vec):
            return f"vector {i} has non-numeric entries"
    return None


def make_provider(config: ProviderConfig) -> EmbeddingProvider:
    if config.backend == "stub":
        return StubProvider(config)
    if config.backend == "onnx_file":
        return OnnxProvider(config)
    return RemoteProvider(config)
