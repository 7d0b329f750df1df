"""External-LLM step labeling.

Sends each reasoning step to a chat-completions endpoint with a fixed
classification instruction, parses the reply back onto the taxonomy, and
handles the operational side: disk cache keyed by (prompt, step, run),
token-bucket rate limiting, bounded retries, and multi-run agreement
collection for reliability studies.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import httpx

from steptag.model import OTHER_TAG, ReasoningStep, Taxonomy, write_jsonl

logger = logging.getLogger(__name__)

SYSTEM_PROMPT_TEMPLATE = (
    "Classify the following reasoning step into one of the categories defined. "
    "Classes = {classes}"
)


class AnnotationError(RuntimeError):
    pass


class ChatClient(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


class HttpChatClient:
    """JSON-over-HTTP chat endpoint (messages array in, choices[0] text out).

    Credentials come only from the named environment variable.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "STEPTAG_API_KEY",
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_seconds: float = 0.5,
        client: Optional[httpx.Client] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        headers = {}
        api_key = os.environ.get(api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def complete(self, messages: list[dict]) -> str:
        payload = {"model": self.model, "messages": messages}
        last_exc: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_seconds * (2 ** (attempt - 1)))
            try:
                resp = self._client.post(f"{self.base_url}/chat/completions", json=payload)
            except httpx.HTTPError as exc:
                last_exc = exc
                continue
            if resp.status_code >= 500:
                last_exc = AnnotationError(f"server error {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise AnnotationError(f"annotator endpoint error {resp.status_code}: {resp.text}")
            choice = resp.json()["choices"][0]
            content = choice.get("message", {}).get("content") or choice.get("text", "")
            if not content:
                raise AnnotationError("empty completion")
            return content
        raise AnnotationError(f"endpoint unreachable after retries: {last_exc}")


def build_messages(step_text: str, taxonomy: Taxonomy) -> list[dict]:
    classes = ", ".join(taxonomy.tags)
    return [
        {"role": "system", "content": SYSTEM_PROMPT_TEMPLATE.format(classes=classes)},
        {"role": "user", "content": step_text},
    ]


def parse_tag(reply: str, taxonomy: Taxonomy) -> str:
    """Map a model reply onto the taxonomy: exact, then case/punctuation
    insensitive, then case-insensitive prefix; anything else is "Other".
    """
    reply = reply.strip()
    if reply in taxonomy:
        return reply
    cleaned = re.sub(r"[^\w\s/-]", "", reply).strip().casefold()
    for tag in taxonomy.all_tags:
        if cleaned == tag.casefold():
            return tag
    for tag in taxonomy.all_tags:
        if cleaned and tag.casefold().startswith(cleaned):
            logger.info("fuzzy tag match: %r -> %r", reply, tag)
            return tag
    logger.warning("off-taxonomy reply %r mapped to %r", reply, OTHER_TAG)
    return OTHER_TAG


def annotate_step(step_text: str, taxonomy: Taxonomy, client: ChatClient) -> str:
    if not step_text:
        raise ValueError("step text must be nonempty")
    return parse_tag(client.complete(build_messages(step_text, taxonomy)), taxonomy)


class RateLimiter:
    """Token bucket: at most `rate` acquisitions per second, thread-safe."""

    def __init__(self, rate: float, burst: Optional[float] = None):
        if rate <= 0:
            raise ValueError("rate must be > 0")
        self.rate = rate
        self.capacity = burst if burst is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


@dataclass
class AnnotationJob:
    taxonomy: Taxonomy
    runs_per_step: int = 1
    rate_limit: float = 10.0  # requests per second
    cache_path: Optional[Path] = None
    max_retries: int = 2

    def __post_init__(self):
        if self.runs_per_step < 1:
            raise ValueError("runs_per_step must be >= 1")
        if self.rate_limit <= 0:
            raise ValueError("rate limit must be > 0")


@dataclass
class AnnotationResult:
    #: (trace_id, step_index, run) -> tag
    labels: dict[tuple[str, int, int], str]
    failed: list[tuple[str, int, int]]
    wire_calls: int

    def to_records(self) -> list[dict]:
        return [
            {"trace_id": tid, "step_index": idx, "run": run, "tag": tag}
            for (tid, idx, run), tag in sorted(self.labels.items())
        ]

    def agreement_ratings(self) -> list[list[str]]:
        """Per-step label lists across runs, for the kappa computation."""
        by_step: dict[tuple[str, int], list[str]] = {}
        for (tid, idx, run), tag in sorted(self.labels.items()):
            by_step.setdefault((tid, idx), []).append(tag)
        return [labels for _, labels in sorted(by_step.items())]


class _Cache:
    """Append-only JSONL label cache; resumable and reproducible."""

    def __init__(self, path: Optional[Path]):
        self.path = path
        self._data: dict[str, str] = {}
        self._lock = threading.Lock()
        if path is not None and path.exists():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._data[rec["key"]] = rec["tag"]

    def get(self, key: str) -> Optional[str]:
        return self._data.get(key)

    def put(self, key: str, tag: str) -> None:
        with self._lock:
            self._data[key] = tag
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "tag": tag}) + "\n")


def _cache_key(system_prompt: str, step_text: str, run: int) -> str:
    h = hashlib.sha256()
    for part in (system_prompt, step_text, str(run)):
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def annotate_corpus(
    job: AnnotationJob,
    steps_by_trace: dict[str, Sequence[ReasoningStep]],
    client: ChatClient,
    output_path: Optional[Path] = None,
) -> AnnotationResult:
    """Label every step `runs_per_step` times; cache hits skip wire calls."""
    cache = _Cache(job.cache_path)
    limiter = RateLimiter(job.rate_limit)
    system_prompt = SYSTEM_PROMPT_TEMPLATE.format(
        classes=", ".join(job.taxonomy.tags)
    )

    labels: dict[tuple[str, int, int], str] = {}
    failed: list[tuple[str, int, int]] = []
    wire_calls = 0

    for trace_id in sorted(steps_by_trace):
        for step in steps_by_trace[trace_id]:
            for run in range(job.runs_per_step):
                key = _cache_key(system_prompt, step.text, run)
                cached = cache.get(key)
                if cached is not None:
                    labels[(trace_id, step.index, run)] = cached
                    continue
                tag = None
                for attempt in range(job.max_retries + 1):
                    limiter.acquire()
                    wire_calls += 1
                    try:
                        tag = annotate_step(step.text, job.taxonomy, client)
                        break
                    except Exception as exc:
                        logger.warning(
                            "annotation failed (%s step %d run %d, attempt %d): %s",
                            trace_id, step.index, run, attempt, exc,
                        )
                if tag is None:
                    failed.append((trace_id, step.index, run))
                    continue
                cache.put(key, tag)
                labels[(trace_id, step.index, run)] = tag

    result = AnnotationResult(labels=labels, failed=failed, wire_calls=wire_calls)
    if output_path is not None:
        write_jsonl(result.to_records(), output_path)
    return result


def load_annotations(path: str | Path) -> dict[tuple[str, int, int], str]:
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                labels[(rec["trace_id"], rec["step_index"], rec["run"])] = rec["tag"]
    return labels
