"""Rubric-based propensity-interval annotation over a chat-completions API.

Wire format (OpenAI-compatible), one POST per uncached request::

    POST {endpoint}
    Authorization: Bearer $PROPIRT_API_KEY     (header omitted when unset)
    Content-Type: application/json

    {"model": "<model>",
     "messages": [{"role": "system", "content": "<system text>"},
                  {"role": "user", "content": "<user text>"}],
     "temperature": 0.0}

The answer is read from ``choices[0].message.content``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import httpx

from .errors import NetworkError, OrderViolation, ParseFailure, RangeViolation, TemplateError
from .model import PropensityWindow
from .prompts import ANNOTATION_SYSTEM_PROMPT, ANNOTATION_TEMPLATE

logger = logging.getLogger(__name__)

API_KEY_ENV = "PROPIRT_API_KEY"
LEVEL_MIN, LEVEL_MAX = -3, 3


@dataclass(frozen=True)
class AnnotationRequest:
    propensity_name: str
    rubric_text: str
    question_text: str
    model_name: str = "gpt-4.1"
    temperature: float = 0.0
    # A different template/system pair turns the client into e.g. an answer judge.
    template: str = ANNOTATION_TEMPLATE
    system_text: str = ANNOTATION_SYSTEM_PROMPT

    def cache_key(self) -> str:
        payload = {
            "propensity": self.propensity_name,
            "rubric": self.rubric_text,
            "question": self.question_text,
            "model": self.model_name,
        }
        if self.template != ANNOTATION_TEMPLATE or self.system_text != ANNOTATION_SYSTEM_PROMPT:
            payload["template"] = self.template
            payload["system"] = self.system_text
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class AnnotationResult:
    window: Optional[PropensityWindow]
    raw_response: Optional[str]
    cached: bool
    error: Optional[str] = None
    error_type: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.window is not None


_PLACEHOLDER = re.compile(r"\{(\w+)\}")


def build_prompt(req: AnnotationRequest):
    """Return ``(system_text, user_text)`` with placeholders filled in one pass.

    Substituted values are inserted literally, so braces inside a question are
    never re-interpreted.
    """
    if not req.rubric_text.strip():
        raise TemplateError("rubric text is empty")
    if not req.question_text.strip():
        raise TemplateError("question text is empty")
    values = {
        "propensity_name": req.propensity_name,
        "rubric": req.rubric_text,
        "question_text": req.question_text,
    }

    def fill(match):
        name = match.group(1)
        if name not in values:
            raise TemplateError(f"template placeholder {{{name}}} has no value")
        return values[name]

    return req.system_text, _PLACEHOLDER.sub(fill, req.template)


_INT = r"([+\-−]?\s*\d+(?:\.0+)?)"
_ANSWER = re.compile(r"(?:propensity\s+)?range\s+is\s*:?\s*\[\s*" + _INT + r"\s*,\s*" + _INT + r"\s*\]",
                     re.IGNORECASE)


def _level(token: str) -> int:
    return int(float(token.replace("−", "-").replace(" ", "")))


def render_answer(lower: int, upper: int) -> str:
    def fmt(v):
        return f"+{v}" if v > 0 else str(v)
    return f"The propensity range is [{fmt(lower)}, {fmt(upper)}]"


def parse_interval(text: str) -> PropensityWindow:
    """Window from the last 'propensity range is [x, y]' in ``text``."""
    matches = _ANSWER.findall(text or "")
    if not matches:
        raise ParseFailure("no 'propensity range is [x, y]' answer found")
    lo, hi = (_level(t) for t in matches[-1])
    if lo > hi:
        raise OrderViolation(f"lower bound {lo} exceeds upper bound {hi}")
    if lo < LEVEL_MIN or hi > LEVEL_MAX:
        raise RangeViolation(f"interval [{lo}, {hi}] outside [{LEVEL_MIN}, {LEVEL_MAX}]")
    return PropensityWindow(float(lo), float(hi))


class ResponseCache:
    """Content-addressed on-disk store, one JSON file per key.

    Writes go through a temp file and ``os.replace``, so concurrent writers
    of the same key leave one complete record.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        path = self._path(key)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None

    def put(self, key: str, record: dict) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(record, fh, sort_keys=True, ensure_ascii=False)
        os.replace(tmp, path)


class ChatClient:
    """Minimal OpenAI-compatible chat-completions client with retry."""

    def __init__(self, endpoint: str, api_key: Optional[str] = None, timeout: float = 60.0,
                 max_retries: int = 4, backoff: float = 1.0, transport=None):
        if not endpoint.rstrip("/").endswith("/chat/completions"):
            endpoint = endpoint.rstrip("/") + "/chat/completions"
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_retries = max_retries
        self.backoff = backoff
        self.calls = 0
        self._lock = threading.Lock()
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def complete(self, model: str, system_text: str, user_text: str, temperature: float = 0.0) -> str:
        body = {
            "model": model,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": temperature,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            with self._lock:
                self.calls += 1
            try:
                resp = self._http.post(self.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                logger.warning("request failed (attempt %d): %s", attempt + 1, last)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                logger.warning("transient status %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise NetworkError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise NetworkError(f"malformed completion payload: {exc}") from None
        raise NetworkError(f"gave up after {self.max_retries + 1} attempts: {last}")


def annotate_batch(requests: Sequence[AnnotationRequest], client: Optional[ChatClient] = None,
                   concurrency_limit: int = 4, cache: Optional[ResponseCache] = None) -> List[AnnotationResult]:
    """Annotate every request; the result list follows request order.

    Cache hits never touch the network. Failures are recorded per item.
    """
    if concurrency_limit < 1:
        raise ValueError("concurrency_limit must be at least 1")
    keys = [r.cache_key() for r in requests]
    raw = {}
    cached = set()
    pending = {}
    for key, req in zip(keys, requests):
        if key in raw or key in pending:
            continue
        hit = cache.get(key) if cache is not None else None
        if hit is not None:
            raw[key] = hit["response"]
            cached.add(key)
        else:
            pending[key] = req

    errors = {}

    def fetch(key, req):
        try:
            system_text, user_text = build_prompt(req)
        except TemplateError as exc:
            errors[key] = exc
            return
        if client is None:
            errors[key] = NetworkError("no client configured and no cached response")
            return
        try:
            text = client.complete(req.model_name, system_text, user_text, req.temperature)
        except NetworkError as exc:
            errors[key] = exc
            return
        raw[key] = text
        if cache is not None:
            cache.put(key, {"key": key, "model": req.model_name, "response": text})

    with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
        list(pool.map(lambda kv: fetch(*kv), pending.items()))

    results = []
    for key in keys:
        if key in errors:
            exc = errors[key]
            results.append(AnnotationResult(None, None, False, str(exc), type(exc).__name__))
            continue
        text = raw[key]
        try:
            window = parse_interval(text)
        except ParseFailure as exc:
            results.append(AnnotationResult(None, text, key in cached, str(exc), type(exc).__name__))
            continue
        results.append(AnnotationResult(window, text, key in cached))
    return results
