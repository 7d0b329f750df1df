"""Step-tagging detectors.

A detector scores a (step text, tag) pair in [0, 1]; ``tag_step`` turns the
per-tag scores into one tag.  Two detectors ship: a lexical trigger-phrase
heuristic (low-fidelity fallback, no dependencies) and a client for a
remote binary classifier served over the /classify wire protocol.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from importlib import resources
from typing import Optional, Protocol

import httpx

from steptag.model import OTHER_TAG, Taxonomy, ValidationError

logger = logging.getLogger(__name__)


class DetectorError(RuntimeError):
    """Transport or protocol failure while scoring a step."""


class StepDetector(Protocol):
    def score(self, step_text: str, tag: str) -> float: ...

    def decide(self, step_text: str, tag: str, cutoff: float) -> bool: ...


class LexicalRuleSet:
    """Per-tag case-insensitive trigger phrases."""

    def __init__(self, rules: dict[str, list[str]], taxonomy: Optional[Taxonomy] = None):
        taxonomy = taxonomy or Taxonomy()
        for tag, patterns in rules.items():
            if tag not in taxonomy:
                raise ValidationError(f"rule tag {tag!r} not in taxonomy")
            if not patterns:
                raise ValidationError(f"empty pattern list for tag {tag!r}")
        self.rules = {tag: [p.lower() for p in patterns] for tag, patterns in rules.items()}

    @classmethod
    def bundled(cls, taxonomy: Optional[Taxonomy] = None) -> "LexicalRuleSet":
        doc = json.loads(
            resources.files("steptag.data").joinpath("lexical_rules.json").read_text()
        )
        return cls(doc["rules"], taxonomy)

    def __contains__(self, tag: str) -> bool:
        return tag in self.rules


def lexical_score(step_text: str, tag: str, rules: LexicalRuleSet) -> float:
    """1.0 iff any trigger phrase of `tag` occurs in the step, else 0.0."""
    if tag not in rules:
        raise KeyError(f"no lexical rules for tag {tag!r}")
    haystack = step_text.lower()
    return 1.0 if any(p in haystack for p in rules.rules[tag]) else 0.0


class LexicalDetector:
    def __init__(self, rules: Optional[LexicalRuleSet] = None):
        self.rules = rules or LexicalRuleSet.bundled()

    def score(self, step_text: str, tag: str) -> float:
        return lexical_score(step_text, tag, self.rules)

    def decide(self, step_text: str, tag: str, cutoff: float) -> bool:
        return self.score(step_text, tag) >= cutoff


class RemoteDetector:
    """Client for the classifier service.

    POST {base_url}/classify with {"text": ..., "tag": ...} -> {"score": p}.
    5xx responses are retried with exponential backoff; scores are cached
    by (text, tag) content hash, which is sound because served scores are
    deterministic.
    """

    def __init__(
        self,
        base_url: str,
        max_retries: int = 3,
        backoff_seconds: float = 0.2,
        timeout: float = 10.0,
        client: Optional[httpx.Client] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self._client = client or httpx.Client(timeout=timeout)
        self._cache: dict[str, float] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _key(step_text: str, tag: str) -> str:
        h = hashlib.sha256()
        h.update(step_text.encode("utf-8"))
        h.update(b"\x00")
        h.update(tag.encode("utf-8"))
        return h.hexdigest()

    def score(self, step_text: str, tag: str) -> float:
        key = self._key(step_text, tag)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        score = self._request(step_text, tag)
        with self._lock:
            self._cache[key] = score
        return score

    def decide(self, step_text: str, tag: str, cutoff: float) -> bool:
        return self.score(step_text, tag) >= cutoff

    def _request(self, step_text: str, tag: str) -> float:
        payload = {"text": step_text, "tag": tag}
        last_exc: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_seconds * (2 ** (attempt - 1)))
            try:
                resp = self._client.post(f"{self.base_url}/classify", json=payload)
            except httpx.HTTPError as exc:
                last_exc = exc
                continue
            if resp.status_code >= 500:
                last_exc = DetectorError(f"server error {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise DetectorError(
                    f"classifier rejected request ({resp.status_code}): {resp.text}"
                )
            return self._parse_score(resp)
        raise DetectorError(f"classifier unreachable after retries: {last_exc}")

    @staticmethod
    def _parse_score(resp: httpx.Response) -> float:
        try:
            score = resp.json()["score"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DetectorError(f"malformed classifier response: {exc}") from exc
        if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise DetectorError(f"score {score!r} outside [0, 1]")
        return float(score)

    def healthy(self) -> bool:
        try:
            resp = self._client.post(
                f"{self.base_url}/classify", json={"text": "ping", "tag": "Verification"}
            )
            return resp.status_code == 200
        except httpx.HTTPError:
            return False


def remote_score(step_text: str, tag: str, endpoint: str) -> float:
    return RemoteDetector(endpoint).score(step_text, tag)


def tag_step(
    step_text: str,
    taxonomy: Taxonomy,
    detector: StepDetector,
    cutoff: float = 0.5,
) -> str:
    """Pick the argmax-scoring tag at or above `cutoff`, else "Other".

    Ties break toward the earlier taxonomy position.
    """
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError("cutoff must be in [0, 1]")
    best_tag = OTHER_TAG
    best_score = -1.0
    for tag in taxonomy.tags:
        score = detector.score(step_text, tag)
        if score >= cutoff and score > best_score:
            best_tag, best_score = tag, score
    return best_tag
