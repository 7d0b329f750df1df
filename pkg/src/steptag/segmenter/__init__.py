"""Reasoning-step segmentation: batch and streaming, with a compiled core.

The hot boundary scan lives in ``_speedups`` (Cython) when the extension
compiled at install time; otherwise the pure-Python scanner in ``_pure``
is used.  Set ``STEPTAG_PURE=1`` to force the fallback.  Both backends
implement identical semantics and are cross-checked by the test suite.
"""

from __future__ import annotations

import os
from typing import Callable, Optional

from steptag.model import ReasoningStep, SegmenterConfig

from . import _pure
from ._pure import word_count

if os.environ.get("STEPTAG_PURE"):
    _speedups = None
else:
    try:
        from . import _speedups  # type: ignore[attr-defined]
    except ImportError:
        _speedups = None

#: Active backend name, "c" or "pure".
BACKEND = "c" if _speedups is not None else "pure"


class SegmenterError(RuntimeError):
    """Stream-lifecycle misuse (push after finish, double finish)."""


def _steps_from_char_spans(text: str, spans) -> list[ReasoningStep]:
    steps = []
    byte_off = 0
    for index, (start, end, count) in enumerate(spans):
        piece = text[start:end]
        nbytes = len(piece.encode("utf-8"))
        steps.append(
            ReasoningStep(
                index=index,
                text=piece,
                token_count=count,
                char_span=(byte_off, byte_off + nbytes),
            )
        )
        byte_off += nbytes
    return steps


def segment_full(
    text: str,
    config: SegmenterConfig,
    counter: Optional[Callable[[str], int]] = None,
) -> list[ReasoningStep]:
    """Split `text` into reasoning steps.

    With the default token counting (whitespace-separated words) the scan
    runs on the compiled backend when available.  A custom `counter`
    forces the generic pure path.
    """
    if not text:
        return []
    if counter is None and _speedups is not None:
        data = text.encode("utf-8")
        delims = tuple(d.encode("utf-8") for d in config.delimiters)
        spans = _speedups.scan_bytes(data, delims, config.k, config.max_steps)
        return [
            ReasoningStep(
                index=i,
                text=data[start:end].decode("utf-8"),
                token_count=count,
                char_span=(start, end),
            )
            for i, (start, end, count) in enumerate(spans)
        ]
    if counter is None:
        spans = _pure.scan(text, config.delimiters, config.k, config.max_steps)
        return _steps_from_char_spans(text, spans)
    return _steps_from_char_spans(
        text, _scan_with_counter(text, config, counter)
    )


def _scan_with_counter(text, config, counter):
    spans = []
    pos = 0
    scan_from = 0
    while len(spans) < config.max_steps - 1:
        hit = _pure._find_earliest(text, config.delimiters, scan_from)
        if hit is None:
            break
        d_start, d_len = hit
        end = d_start + d_len
        count = max(1, counter(text[pos:end]))
        if count >= config.k:
            spans.append((pos, end, count))
            pos = end
            scan_from = end
        else:
            scan_from = d_start + 1
    if pos < len(text):
        spans.append((pos, len(text), max(1, counter(text[pos:]))))
    return spans


class StreamSegmenter:
    """Incremental segmenter for one token stream.

    counting="words" recomputes whitespace-word counts over the buffer and
    is byte-for-byte equivalent to ``segment_full`` regardless of how the
    text is chunked into deltas.  counting="deltas" trusts the per-push
    token counts (default 1 per delta), for live streams where the real
    tokenizer boundaries are known upstream.

    Single-writer: not safe for concurrent pushes on one instance.
    """

    def __init__(self, config: SegmenterConfig, counting: str = "words"):
        if counting not in ("words", "deltas"):
            raise ValueError("counting must be 'words' or 'deltas'")
        self.config = config
        self.counting = counting
        self.buffer = ""
        self.emitted_steps = 0
        self.finished = False
        self._scan_from = 0
        self._byte_off = 0
        self._max_dlen = max(len(d) for d in config.delimiters)
        # counting="deltas": (end position in buffer, token count) per push
        self._count_events: list[list[int]] = []

    @property
    def buffered_token_count(self) -> int:
        if self.counting == "words":
            return word_count(self.buffer) if self.buffer else 0
        return sum(c for _, c in self._count_events)

    def _candidate_count(self, end: int) -> int:
        if self.counting == "words":
            return word_count(self.buffer[:end])
        return max(1, sum(c for pos, c in self._count_events if pos <= end))

    def push_token(self, delta: str, token_count: Optional[int] = None) -> list[ReasoningStep]:
        """Feed one delta; returns the steps it completed (possibly several)."""
        if self.finished:
            raise SegmenterError("push_token after finish")
        if not delta:
            return []
        self.buffer += delta
        if self.counting == "deltas":
            self._count_events.append([len(self.buffer), 1 if token_count is None else token_count])
        return self._drain()

    def _drain(self) -> list[ReasoningStep]:
        out = []
        while self.emitted_steps < self.config.max_steps - 1:
            hit = _pure._find_earliest(self.buffer, self.config.delimiters, self._scan_from)
            if hit is None:
                self._scan_from = max(
                    self._scan_from, len(self.buffer) - self._max_dlen + 1, 0
                )
                break
            d_start, d_len = hit
            end = d_start + d_len
            if self._candidate_count(end) >= self.config.k:
                out.append(self._emit(end))
            else:
                self._scan_from = d_start + 1
        return out

    def _emit(self, end: int) -> ReasoningStep:
        text = self.buffer[:end]
        if self.counting == "words":
            count = word_count(text)
        else:
            count = max(1, sum(c for pos, c in self._count_events if pos <= end))
            self._count_events = [
                [pos - end, c] for pos, c in self._count_events if pos > end
            ]
        nbytes = len(text.encode("utf-8"))
        step = ReasoningStep(
            index=self.emitted_steps,
            text=text,
            token_count=count,
            char_span=(self._byte_off, self._byte_off + nbytes),
        )
        self.buffer = self.buffer[end:]
        self._scan_from = 0
        self._byte_off += nbytes
        self.emitted_steps += 1
        return step

    def finish(self) -> Optional[ReasoningStep]:
        """Flush the remainder as the final step (exempt from the k floor)."""
        if self.finished:
            raise SegmenterError("double finish")
        self.finished = True
        if not self.buffer:
            return None
        return self._emit(len(self.buffer))

    @property
    def at_capacity(self) -> bool:
        """True when the max_steps cap is forcing further text into one step."""
        return self.emitted_steps >= self.config.max_steps - 1
