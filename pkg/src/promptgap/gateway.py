"""Uniform client for the five model roles with caching and bounded parallelism.

Completions are cached in content-addressed files under the run directory, so
an interrupted run resumes without reissuing requests and a warm-cache re-run
touches the network zero times. Endpoints speak the OpenAI-compatible
chat-completions / embeddings wire protocol; ``mock://`` base URLs resolve to
the in-process endpoints from :mod:`promptgap.mock`.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import requests

from .answers import PromptRecord, Rollout, RolloutSet, extract_answer, ROLES
from .errors import (
    ConfigError,
    EmbedderUnavailable,
    EndpointUnavailable,
    ImageMissing,
)
from . import mock as mock_endpoints


@dataclass
class DecodingParams:
    temperature: float = 0.7
    top_p: float = 0.8
    top_k: int = 20
    max_output_tokens: int = 8192


@dataclass
class RetryPolicy:
    attempts: int = 3
    backoff_base_ms: int = 250


@dataclass
class EndpointConfig:
    role: str
    base_url: str
    model_name: str = ""
    decoding: DecodingParams = field(default_factory=DecodingParams)
    api_key_env: Optional[str] = None
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    # mock:// extras
    script_path: Optional[str] = None
    embed_dim: int = 64

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"unknown role {self.role!r}")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")

    @classmethod
    def from_json_dict(cls, role: str, row: Dict[str, object]) -> "EndpointConfig":
        decoding = DecodingParams(**row.get("decoding", {}))
        retry = RetryPolicy(**row.get("retry", {}))
        return cls(
            role=role,
            base_url=str(row.get("base_url", "")),
            model_name=str(row.get("model_name", "")),
            decoding=decoding,
            api_key_env=row.get("api_key_env"),
            max_in_flight=int(row.get("max_in_flight", 4)),
            retry=retry,
            script_path=row.get("script_path"),
            embed_dim=int(row.get("embed_dim", 64)),
        )


class HttpChatEndpoint:
    """Chat-completions over HTTP with retry and exponential backoff."""

    def __init__(self, config: EndpointConfig):
        self.config = config
        self.session = requests.Session()

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, messages: Sequence[dict], decoding: DecodingParams, seed: int = 0) -> str:
        body = {
            "model": self.config.model_name,
            "messages": [_resolve_message_images(m) for m in messages],
            "temperature": decoding.temperature,
            "top_p": decoding.top_p,
            "top_k": decoding.top_k,
            "max_tokens": decoding.max_output_tokens,
            "seed": seed,
        }
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        last_error: Optional[Exception] = None
        for attempt in range(self.config.retry.attempts):
            try:
                resp = self.session.post(url, json=body, headers=self._headers(), timeout=600)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:
                last_error = exc
                time.sleep(self.config.retry.backoff_base_ms / 1000 * 2 ** attempt)
        raise EndpointUnavailable(f"{self.config.role} endpoint failed: {last_error}")


class HttpEmbeddingEndpoint:
    def __init__(self, config: EndpointConfig):
        self.config = config
        self.session = requests.Session()

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        url = self.config.base_url.rstrip("/") + "/embeddings"
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.config.model_name, "input": list(texts)}
        last_error: Optional[Exception] = None
        for attempt in range(self.config.retry.attempts):
            try:
                resp = self.session.post(url, json=body, headers=headers, timeout=600)
                resp.raise_for_status()
                rows = resp.json()["data"]
                return np.array([row["embedding"] for row in rows])
            except Exception as exc:
                last_error = exc
                time.sleep(self.config.retry.backoff_base_ms / 1000 * 2 ** attempt)
        raise EmbedderUnavailable(f"embedder endpoint failed: {last_error}")


def _resolve_message_images(message: dict) -> dict:
    """Replace local-path image refs with base64 data URLs for the wire."""
    content = message.get("content")
    if not isinstance(content, list):
        return message
    resolved = []
    for item in content:
        if item.get("type") == "image_url":
            url = item["image_url"]["url"]
            if not url.startswith(("http://", "https://", "data:")):
                data = Path(url).read_bytes()
                suffix = Path(url).suffix.lstrip(".") or "png"
                url = f"data:image/{suffix};base64,{base64.b64encode(data).decode()}"
            resolved.append({"type": "image_url", "image_url": {"url": url}})
        else:
            resolved.append(item)
    return {**message, "content": resolved}


def build_endpoint(config: EndpointConfig):
    if config.base_url.startswith("mock://"):
        kind = config.base_url[len("mock://"):].split("?")[0].strip("/")
        if kind in ("hashing-embedder", "hashing"):
            return mock_endpoints.HashingEmbedder(dim=config.embed_dim)
        if kind == "script":
            if not config.script_path:
                raise ConfigError(f"{config.role}: mock://script requires script_path")
            return mock_endpoints.load_script(config.script_path)
        raise ConfigError(f"unknown mock endpoint {config.base_url!r}")
    if config.role == "embedder":
        return HttpEmbeddingEndpoint(config)
    return HttpChatEndpoint(config)


@dataclass
class RolloutCacheKey:
    role: str
    model_name: str
    content_hash: str
    decoding_hash: str
    sample_index: int
    tag: str = ""

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CompletionCache:
    """Content-addressed completion store; tolerant of concurrent writers."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def _path(self, role: str, digest: str) -> Path:
        return self.root / role / digest[:2] / f"{digest}.json"

    def get(self, role: str, digest: str) -> Optional[str]:
        path = self._path(role, digest)
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)["text"]

    def put(self, role: str, digest: str, text: str) -> None:
        path = self._path(role, digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump({"text": text}, fh, ensure_ascii=False)
        os.replace(tmp, path)

    def get_vector(self, digest: str) -> Optional[np.ndarray]:
        path = self._path("embedder", digest)
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as fh:
            return np.array(json.load(fh)["vector"])

    def put_vector(self, digest: str, vector: np.ndarray) -> None:
        path = self._path("embedder", digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump({"vector": [float(x) for x in vector]}, fh)
        os.replace(tmp, path)


class Gateway:
    """Shared, thread-safe client for the configured model roles."""

    def __init__(
        self,
        configs: Dict[str, EndpointConfig],
        cache_dir,
        endpoints: Optional[Dict[str, object]] = None,
    ):
        self.configs = configs
        self.cache = CompletionCache(Path(cache_dir))
        self.endpoints = dict(endpoints or {})
        for role, config in configs.items():
            if role not in self.endpoints:
                self.endpoints[role] = build_endpoint(config)
        self.stats: Dict[str, int] = {"network_calls": 0, "cache_hits": 0}
        self._stats_lock = threading.Lock()
        self._key_locks: Dict[str, threading.Lock] = {}
        self._key_locks_guard = threading.Lock()

    def _config(self, role: str) -> EndpointConfig:
        if role not in self.configs:
            raise ConfigError(f"no endpoint configured for role {role!r}")
        return self.configs[role]

    def _bump(self, counter: str, n: int = 1) -> None:
        with self._stats_lock:
            self.stats[counter] += n

    def _key_lock(self, digest: str) -> threading.Lock:
        with self._key_locks_guard:
            return self._key_locks.setdefault(digest, threading.Lock())

    @staticmethod
    def _content_hash(text: str, image_refs: Sequence[str]) -> str:
        payload = json.dumps({"text": text, "images": list(image_refs)}, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @staticmethod
    def _decoding_hash(decoding: DecodingParams) -> str:
        return hashlib.sha256(json.dumps(asdict(decoding), sort_keys=True).encode()).hexdigest()

    @staticmethod
    def build_messages(text: str, image_refs: Sequence[str]) -> List[dict]:
        content: List[dict] = [{"type": "text", "text": text}]
        for ref in image_refs:
            content.append({"type": "image_url", "image_url": {"url": ref}})
        return [{"role": "user", "content": content}]

    def _check_images(self, image_refs: Sequence[str]) -> None:
        for ref in image_refs:
            if ref.startswith(("http://", "https://", "data:", "mock://")):
                continue
            if not Path(ref).exists():
                raise ImageMissing(f"image not found: {ref}")

    def _cached_complete(
        self,
        role: str,
        text: str,
        image_refs: Sequence[str],
        seed: int,
        sample_index: int,
        tag: str = "",
    ) -> str:
        config = self._config(role)
        key = RolloutCacheKey(
            role=role,
            model_name=config.model_name,
            content_hash=self._content_hash(text, image_refs),
            decoding_hash=self._decoding_hash(config.decoding),
            sample_index=sample_index,
            tag=tag,
        )
        digest = key.digest()
        cached = self.cache.get(role, digest)
        if cached is not None:
            self._bump("cache_hits")
            return cached
        # Collapse duplicate concurrent requests for the same key to one call.
        with self._key_lock(digest):
            cached = self.cache.get(role, digest)
            if cached is not None:
                self._bump("cache_hits")
                return cached
            messages = self.build_messages(text, image_refs)
            response = self.endpoints[role].complete(messages, config.decoding, seed=seed)
            self._bump("network_calls")
            self.cache.put(role, digest, response)
            return response

    def complete_text(
        self,
        role: str,
        text: str,
        image_refs: Sequence[str] = (),
        seed: int = 0,
        tag: str = "",
    ) -> str:
        """One cached completion for an arbitrary rendered prompt."""
        self._check_images(image_refs)
        return self._cached_complete(role, text, image_refs, seed=seed, sample_index=0, tag=tag)

    def sample_rollouts(
        self,
        role: str,
        prompt: PromptRecord,
        k: int,
        seed_base: int = 0,
        instruction: Optional[str] = None,
    ) -> RolloutSet:
        """K cached completions for one prompt, with answer extraction applied.

        ``instruction`` (e.g. the answer-format contract) is appended to the
        prompt text. Cache misses are issued with at most ``max_in_flight``
        concurrent requests; every completion is persisted before being
        returned.
        """
        config = self._config(role)
        self._check_images(prompt.image_refs)
        if k == 0:
            return RolloutSet(prompt_id=prompt.id, role=role, rollouts=[])
        text = prompt.text if instruction is None else f"{prompt.text}\n\n{instruction}"

        def one(i: int) -> str:
            return self._cached_complete(
                role,
                text,
                prompt.image_refs,
                seed=seed_base + i,
                sample_index=i,
            )

        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            texts = list(pool.map(one, range(k)))
        rollouts = [Rollout(raw_text=t, extracted_answer=extract_answer(t)) for t in texts]
        return RolloutSet(prompt_id=prompt.id, role=role, rollouts=rollouts)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Embed texts with per-text caching; rows match input order."""
        self._config("embedder")
        if not texts:
            return np.empty((0, 0))
        digests = [
            RolloutCacheKey(
                role="embedder",
                model_name=self.configs["embedder"].model_name,
                content_hash=hashlib.sha256(t.encode("utf-8")).hexdigest(),
                decoding_hash="",
                sample_index=0,
            ).digest()
            for t in texts
        ]
        cached = [self.cache.get_vector(d) for d in digests]
        missing = [i for i, v in enumerate(cached) if v is None]
        if len(missing) < len(texts):
            self._bump("cache_hits", len(texts) - len(missing))
        if missing:
            vectors = np.asarray(self.endpoints["embedder"].embed([texts[i] for i in missing]))
            self._bump("network_calls")
            for j, i in enumerate(missing):
                self.cache.put_vector(digests[i], vectors[j])
                cached[i] = vectors[j]
        return np.vstack([np.asarray(v) for v in cached])

    def make_judge(self):
        """Judge handle for answer grouping: (prompt, attempt) -> response."""
        def judge(prompt: str, attempt: int) -> str:
            return self.complete_text("judge", prompt, seed=attempt, tag=f"attempt={attempt}")
        return judge
