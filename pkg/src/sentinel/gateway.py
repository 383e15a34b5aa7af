"""HTTP detection service and filtering reverse proxy.

Exposes three endpoints in front of an upstream chat-completion API:

* ``POST /v1/detect`` — score a single text, return the verdict.
* ``POST /v1/chat/completions`` — score the user messages of the request;
  in ``block`` mode injections get a 403 and the upstream is never
  contacted, in ``flag`` mode everything is forwarded and the response
  carries ``X-Injection-Score`` / ``X-Injection-Label`` headers.
* ``GET /healthz`` — liveness plus loaded model/pack versions.

Detection state (rule pack, head parameters, provider) is immutable and
shared across requests; ``reload`` swaps the whole state object atomically.
Provider failures fail closed in block mode: the request is treated as an
injection and the verdict is marked degraded. Forwarded request bodies are
the original bytes, untouched.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import httpx
from contextlib import asynccontextmanager
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse
from starlette.background import BackgroundTask
from starlette.concurrency import run_in_threadpool

from .detector import DetectionVerdict, FusedDetector, HeuristicDetector
from .embeddings import ProviderConfig, ProviderError, make_provider
from .head import load_params
from .rules import RulePack, load_default_pack, load_pack

__all__ = ["GatewayConfig", "GatewayState", "load_gateway_config", "create_app"]

ENV_PREFIX = "SENTINEL_"

# hop-by-hop and recomputed headers never forwarded either direction
_SKIP_HEADERS = {
    "host",
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "te",
    "trailers",
    "transfer-encoding",
    "upgrade",
    "content-length",
}


class GatewayConfigError(ValueError):
    """Gateway configuration is invalid."""


@dataclass(frozen=True)
class GatewayConfig:
    listen: str = "127.0.0.1:8088"
    upstream: str = ""
    upstream_token_env: str = ""
    mode: str = "flag"  # "block" | "flag"
    threshold: float = 0.5
    timeout_s: float = 30.0
    heuristics_only: bool = False
    rules_path: str | None = None
    model_path: str | None = None
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    log_path: str | None = None
    log_prompts: bool = False

    def validate(self) -> None:
        if self.mode not in ("block", "flag"):
            raise GatewayConfigError(f"mode must be 'block' or 'flag', got {self.mode!r}")
        if not 0.0 < self.threshold < 1.0:
            raise GatewayConfigError(
                f"threshold must be inside (0, 1), got {self.threshold}"
            )
        if self.mode == "block" and not self.heuristics_only and not self.model_path:
            raise GatewayConfigError(
                "block mode requires a model file or heuristics_only"
            )


def _load_toml(path: str | Path) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load_gateway_config(
    path: str | Path | None = None, env: dict | None = None
) -> GatewayConfig:
    """Build the config from an optional TOML file plus SENTINEL_* overrides."""
    env = os.environ if env is None else env
    doc = _load_toml(path) if path else {}
    provider_doc = doc.get("provider", {})
    provider = ProviderConfig(
        backend=provider_doc.get("backend", "stub"),
        dim=int(provider_doc.get("dim", ProviderConfig.dim)),
        model_path=provider_doc.get("model_path"),
        tokenizer_path=provider_doc.get("tokenizer_path"),
        endpoint=provider_doc.get("endpoint"),
        timeout_s=float(provider_doc.get("timeout_s", ProviderConfig.timeout_s)),
        max_inflight=int(provider_doc.get("max_inflight", ProviderConfig.max_inflight)),
    )
    cfg = GatewayConfig(
        listen=doc.get("listen", GatewayConfig.listen),
        upstream=doc.get("upstream", ""),
        upstream_token_env=doc.get("upstream_token_env", ""),
        mode=doc.get("mode", GatewayConfig.mode),
        threshold=float(doc.get("threshold", GatewayConfig.threshold)),
        timeout_s=float(doc.get("timeout_s", GatewayConfig.timeout_s)),
        heuristics_only=bool(doc.get("heuristics_only", False)),
        rules_path=doc.get("rules"),
        model_path=doc.get("model"),
        provider=provider,
        log_path=doc.get("log"),
        log_prompts=bool(doc.get("log_prompts", False)),
    )
    overrides = {}
    if env.get(ENV_PREFIX + "LISTEN"):
        overrides["listen"] = env[ENV_PREFIX + "LISTEN"]
    if env.get(ENV_PREFIX + "UPSTREAM"):
        overrides["upstream"] = env[ENV_PREFIX + "UPSTREAM"]
    if env.get(ENV_PREFIX + "MODE"):
        overrides["mode"] = env[ENV_PREFIX + "MODE"]
    if env.get(ENV_PREFIX + "THRESHOLD"):
        overrides["threshold"] = float(env[ENV_PREFIX + "THRESHOLD"])
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _file_version(path: str | Path) -> str:
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return digest[:12]


class GatewayState:
    """Loaded detection state; replaced as a whole on reload."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.pack: RulePack = (
            load_pack(config.rules_path) if config.rules_path else load_default_pack()
        )
        self.degraded_reason: str | None = None
        self.model_version = "heuristics-only"
        if config.heuristics_only or not config.model_path:
            self.detector = HeuristicDetector(self.pack)
            if not config.heuristics_only and config.mode == "block":
                self.degraded_reason = "block mode without a model"
        else:
            try:
                provider = make_provider(config.provider)
                params, _meta = load_params(
                    config.model_path,
                    expect_emb_dim=config.provider.dim,
                    expect_n_heur=len(self.pack),
                    expect_rule_pack_version=self.pack.version,
                )
                self.model_version = _file_version(config.model_path)
                self.detector = FusedDetector(
                    self.pack,
                    provider,
                    params,
                    threshold=config.threshold,
                    model_version=self.model_version,
                )
            except (OSError, ValueError, ProviderError) as exc:
                # keep serving: health reports degraded, block mode fails closed
                self.detector = HeuristicDetector(self.pack)
                self.model_version = "heuristics-only"
                self.degraded_reason = f"model load failed: {exc}"

    @property
    def status(self) -> str:
        return "degraded" if self.degraded_reason else "ok"


class _RequestLog:
    """Append-only JSONL log; never stores prompts unless asked to."""

    def __init__(self, path: str | None, log_prompts: bool):
        self._path = Path(path) if path else None
        self._log_prompts = log_prompts
        self._lock = threading.Lock()

    def write(self, endpoint: str, verdict: DetectionVerdict | None, *,
              blocked: bool = False, prompt: str | None = None) -> None:
        if self._path is None:
            return
        entry = {
            "ts": time.time(),
            "endpoint": endpoint,
            "blocked": blocked,
        }
        if verdict is not None:
            entry["verdict"] = verdict.to_dict()
        if self._log_prompts and prompt is not None:
            entry["prompt"] = prompt
        line = json.dumps(entry, ensure_ascii=False)
        with self._lock:
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def _degraded_verdict(state: GatewayState) -> DetectionVerdict:
    # fail closed: an unscorable request counts as an injection in block mode
    return DetectionVerdict(
        label="injection" if state.config.mode == "block" else "benign",
        p_injection=1.0 if state.config.mode == "block" else 0.0,
        triggered_rules=(),
        latency_micros=0,
        model_version=state.model_version,
        rule_pack_version=state.pack.version,
        degraded=True,
    )


def _user_texts(body: dict) -> list[str]:
    texts = []
    for message in body.get("messages", []):
        if not isinstance(message, dict) or message.get("role") != "user":
            continue
        content = message.get("content")
        if isinstance(content, str):
            texts.append(content)
        elif isinstance(content, list):  # content-part arrays: keep text parts
            texts.append(
                " ".join(
                    part.get("text", "")
                    for part in content
                    if isinstance(part, dict) and part.get("type") == "text"
                )
            )
    return texts


def _score_user_texts(state: GatewayState, texts: list[str]) -> DetectionVerdict:
    """Each user message is scored alone plus once concatenated; max wins."""
    candidates = [t for t in texts if t.strip()]
    if len(candidates) > 1:
        candidates.append(" ".join(candidates))
    if not candidates:
        candidates = [""]
    verdicts = [state.detector.detect(t) for t in candidates]
    return max(verdicts, key=lambda v: v.p_injection)


def create_app(
    config: GatewayConfig, transport: httpx.AsyncBaseTransport | None = None
) -> FastAPI:
    """Build the ASGI app; ``transport`` is injectable for tests."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        await app.state.client.aclose()

    app = FastAPI(title="sentinel-gateway", lifespan=lifespan)
    app.state.sentinel = GatewayState(config)
    app.state.log = _RequestLog(config.log_path, config.log_prompts)
    app.state.client = httpx.AsyncClient(
        transport=transport, timeout=config.timeout_s
    )

    def reload_state(new_config: GatewayConfig | None = None) -> None:
        app.state.sentinel = GatewayState(new_config or app.state.sentinel.config)

    app.state.reload = reload_state

    @app.get("/healthz")
    async def healthz():
        state: GatewayState = app.state.sentinel
        return {
            "status": state.status,
            "model_version": state.model_version,
            "rule_pack_version": state.pack.version,
        }

    @app.post("/v1/detect")
    async def detect(request: Request):
        state: GatewayState = app.state.sentinel
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return JSONResponse({"detail": "body must be JSON"}, status_code=400)
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str) or not text.strip():
            return JSONResponse(
                {"detail": "field 'text' must be a non-empty string"},
                status_code=400,
            )
        try:
            verdict = await run_in_threadpool(state.detector.detect, text)
        except ProviderError as exc:
            app.state.log.write("/v1/detect", None, prompt=text)
            return JSONResponse(
                {"detail": f"embedding provider unavailable: {exc}"},
                status_code=503,
            )
        app.state.log.write("/v1/detect", verdict, prompt=text)
        return verdict.to_dict()

    @app.post("/v1/chat/completions")
    async def chat_completions(request: Request):
        state: GatewayState = app.state.sentinel
        raw = await request.body()
        try:
            body = json.loads(raw) if raw else {}
        except json.JSONDecodeError:
            return JSONResponse({"detail": "body must be JSON"}, status_code=400)

        texts = _user_texts(body if isinstance(body, dict) else {})
        joined = "\n".join(texts)
        try:
            verdict = await run_in_threadpool(_score_user_texts, state, texts)
        except ProviderError:
            verdict = _degraded_verdict(state)

        if state.config.mode == "block" and verdict.label == "injection":
            app.state.log.write(
                "/v1/chat/completions", verdict, blocked=True, prompt=joined
            )
            return JSONResponse(
                {"blocked": True, "verdict": verdict.to_dict()}, status_code=403
            )

        app.state.log.write("/v1/chat/completions", verdict, prompt=joined)

        upstream_headers = {
            k: v
            for k, v in request.headers.items()
            if k.lower() not in _SKIP_HEADERS
        }
        token_env = state.config.upstream_token_env
        if token_env and os.environ.get(token_env):
            upstream_headers["authorization"] = f"Bearer {os.environ[token_env]}"

        url = state.config.upstream.rstrip("/") + "/v1/chat/completions"
        upstream_request = app.state.client.build_request(
            "POST", url, content=raw, headers=upstream_headers
        )
        try:
            upstream_response = await app.state.client.send(
                upstream_request, stream=True
            )
        except httpx.TimeoutException:
            return JSONResponse({"detail": "upstream timeout"}, status_code=504)
        except httpx.HTTPError as exc:
            return JSONResponse(
                {"detail": f"upstream unreachable: {exc}"}, status_code=502
            )

        response_headers = {
            k: v
            for k, v in upstream_response.headers.items()
            if k.lower() not in _SKIP_HEADERS
        }
        if state.config.mode == "flag":
            response_headers["X-Injection-Score"] = f"{verdict.p_injection:.6f}"
            response_headers["X-Injection-Label"] = verdict.label
            if verdict.degraded:
                response_headers["X-Injection-Degraded"] = "true"

        if upstream_response.is_stream_consumed:
            # body already buffered (test transports, tiny responses)
            body = await upstream_response.aread()
            await upstream_response.aclose()
            return Response(
                content=body,
                status_code=upstream_response.status_code,
                headers=response_headers,
            )
        return StreamingResponse(
            upstream_response.aiter_raw(),
            status_code=upstream_response.status_code,
            headers=response_headers,
            background=BackgroundTask(upstream_response.aclose),
        )

    return app
