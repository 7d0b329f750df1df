# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled segmentation scanner.

Byte-level counterpart of ``_pure.scan``: same boundary semantics, operating
on utf-8 bytes with a precomputed word-start prefix array so merge-heavy
texts stay O(n + delimiter hits).
"""

from libc.stdlib cimport free, malloc
from libc.string cimport memchr

BACKEND = "c"

cdef inline bint _is_ws(unsigned char b) nogil:
    return b == 0x20 or b == 0x09 or b == 0x0a or b == 0x0d or b == 0x0b or b == 0x0c


def scan_bytes(bytes data, tuple delimiters, Py_ssize_t k, Py_ssize_t max_steps):
    """Return (start, end, token_count) byte spans covering `data` exactly."""
    cdef Py_ssize_t n = len(data)
    if n == 0:
        return []

    cdef const unsigned char* buf = data
    cdef Py_ssize_t* prefix = <Py_ssize_t*> malloc((n + 1) * sizeof(Py_ssize_t))
    if prefix == NULL:
        raise MemoryError()

    cdef Py_ssize_t i
    cdef Py_ssize_t acc = 0
    prefix[0] = 0
    for i in range(n):
        if not _is_ws(buf[i]) and (i == 0 or _is_ws(buf[i - 1])):
            acc += 1
        prefix[i + 1] = acc

    spans = []
    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t scan_from = 0
    cdef Py_ssize_t best_start, best_len, hit, c, end
    cdef bytes d
    try:
        while len(spans) < max_steps - 1:
            best_start = -1
            best_len = 0
            for d in delimiters:
                hit = data.find(d, scan_from)
                if hit == -1:
                    continue
                if best_start == -1 or hit < best_start or (
                    hit == best_start and len(d) > best_len
                ):
                    best_start = hit
                    best_len = len(d)
            if best_start == -1:
                break
            end = best_start + best_len
            c = _range_count(buf, prefix, pos, end)
            if c >= k:
                spans.append((pos, end, c))
                pos = end
                scan_from = end
            else:
                scan_from = best_start + 1
        if pos < n:
            spans.append((pos, n, _range_count(buf, prefix, pos, n)))
    finally:
        free(prefix)
    return spans


cdef inline Py_ssize_t _range_count(
    const unsigned char* buf, Py_ssize_t* prefix, Py_ssize_t a, Py_ssize_t b
):
    cdef Py_ssize_t c = prefix[b] - prefix[a]
    if a > 0 and not _is_ws(buf[a]) and not _is_ws(buf[a - 1]):
        c += 1
    if c == 0:
        c = 1
    return c
