"""Deterministic in-process endpoints for tests and dry runs.

The hashing embedder derives a unit vector from the SHA-256 of each text; the
scripted chat endpoint replays canned responses matched by substring against
the rendered request. Both are deterministic, so pipelines built on them are
reproducible end to end.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np


class HashingEmbedder:
    """Maps each text to a deterministic unit vector seeded by its SHA-256."""

    def __init__(self, dim: int = 64):
        self.dim = dim
        self.call_count = 0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self.call_count += 1
        vectors = np.empty((len(texts), self.dim))
        for i, text in enumerate(texts):
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            v = rng.standard_normal(self.dim)
            vectors[i] = v / np.linalg.norm(v)
        return vectors


@dataclass
class ScriptRule:
    contains: str
    response: Union[str, List[str]]


class ScriptedChatEndpoint:
    """Replays scripted responses; matches rules by substring, in order.

    A list-valued response is indexed by ``seed % len``, which lets a script
    express an exact answer distribution over K seeded rollouts. Tracks call
    counts and peak concurrency for cache/parallelism assertions.
    """

    def __init__(
        self,
        rules: Sequence[ScriptRule] = (),
        default: Union[str, List[str], None] = None,
        delay_ms: int = 0,
    ):
        self.rules = list(rules)
        self.default = default
        self.delay_ms = delay_ms
        self.call_count = 0
        self._lock = threading.Lock()
        self._in_flight = 0
        self.peak_in_flight = 0

    def _pick(self, response: Union[str, List[str]], seed: int) -> str:
        if isinstance(response, list):
            return response[seed % len(response)]
        return response

    def complete(self, messages: Sequence[dict], decoding, seed: int = 0) -> str:
        with self._lock:
            self.call_count += 1
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
        try:
            if self.delay_ms:
                time.sleep(self.delay_ms / 1000)
            match_text = render_match_text(messages)
            for rule in self.rules:
                if rule.contains in match_text:
                    return self._pick(rule.response, seed)
            if self.default is not None:
                return self._pick(self.default, seed)
            raise RuntimeError(f"no scripted rule matches request: {match_text[:200]!r}")
        finally:
            with self._lock:
                self._in_flight -= 1


def render_match_text(messages: Sequence[dict]) -> str:
    """Flatten chat messages (text parts and image refs) into one string."""
    parts: List[str] = []
    for message in messages:
        content = message.get("content", "")
        if isinstance(content, str):
            parts.append(content)
            continue
        for item in content:
            if item.get("type") == "text":
                parts.append(item.get("text", ""))
            elif item.get("type") == "image_url":
                parts.append(item.get("image_url", {}).get("url", ""))
    return "\n".join(parts)


def load_script(path) -> ScriptedChatEndpoint:
    """Load a scripted endpoint from a JSON file.

    Schema: {"delay_ms": int?, "default": str | [str]?, "rules":
    [{"contains": str, "response": str | [str]}]}.
    """
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    rules = [ScriptRule(r["contains"], r["response"]) for r in spec.get("rules", [])]
    return ScriptedChatEndpoint(
        rules=rules,
        default=spec.get("default"),
        delay_ms=int(spec.get("delay_ms", 0)),
    )
