"""Pure-Python segmentation scanner.

Reference implementation of the boundary scan; the compiled extension in
``_speedups.pyx`` implements the identical semantics over utf-8 bytes.

A step boundary is any delimiter occurrence at which the text accumulated
since the previous boundary holds at least ``k`` tokens; below-``k``
occurrences merge into the following step.  Tokens are whitespace-separated
runs (ASCII whitespace), with empty runs clamped to a count of 1 so every
step carries at least one token.
"""

from __future__ import annotations

import re
from bisect import bisect_left

BACKEND = "pure"

_WORD_RE = re.compile(r"[^ \t\n\r\x0b\x0c]+")


def word_count(text: str) -> int:
    """Whitespace-separated run count, clamped to >= 1 for nonempty text."""
    n = len(_WORD_RE.findall(text))
    if n == 0 and text:
        return 1
    return n


def _find_earliest(text: str, delimiters: tuple[str, ...], start: int):
    """Earliest delimiter occurrence at or after `start`; ties keep the longest."""
    best = None
    for d in delimiters:
        i = text.find(d, start)
        if i == -1:
            continue
        if best is None or i < best[0] or (i == best[0] and len(d) > best[1]):
            best = (i, len(d))
    return best


def scan(text: str, delimiters: tuple[str, ...], k: int, max_steps: int):
    """Return (start, end, token_count) char spans covering `text` exactly.

    At most ``max_steps`` spans are produced; once ``max_steps - 1`` boundary
    spans exist, the remainder merges into the final span regardless of
    further delimiters.
    """
    if not text:
        return []

    # Word-start positions for O(log n) range counts during the scan.
    starts = [m.start() for m in _WORD_RE.finditer(text)]

    def count(a: int, b: int) -> int:
        c = bisect_left(starts, b) - bisect_left(starts, a)
        if a > 0 and not _is_ws(text[a]) and not _is_ws(text[a - 1]):
            c += 1  # word split by the span boundary
        return c if c > 0 else 1

    spans = []
    pos = 0
    scan_from = 0
    while len(spans) < max_steps - 1:
        hit = _find_earliest(text, delimiters, scan_from)
        if hit is None:
            break
        d_start, d_len = hit
        end = d_start + d_len
        if count(pos, end) >= k:
            spans.append((pos, end, count(pos, end)))
            pos = end
            scan_from = end
        else:
            scan_from = d_start + 1
    if pos < len(text):
        spans.append((pos, len(text), count(pos, len(text))))
    return spans


def _is_ws(ch: str) -> bool:
    return ch in " \t\n\r\x0b\x0c"
