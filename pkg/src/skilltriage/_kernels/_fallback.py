"""Pure-Python implementations of the hot scoring kernels.

These are the reference semantics; the compiled extension in
``_speedups.pyx`` must match them bit-for-bit on the same inputs.
"""

from __future__ import annotations

import math
from collections import Counter


def shannon_entropy_bits(data: bytes) -> float:
    """Shannon entropy of a byte string, in bits per byte.

    H = -sum(p_b * log2(p_b)) over the byte-value frequencies. Ranges
    from 0.0 (single repeated byte) to 8.0 (uniform over all 256 values).
    Empty input is defined as 0.0.
    """
    n = len(data)
    if n == 0:
        return 0.0
    counts = Counter(data)
    h = 0.0
    # Ascending byte-value order keeps the summation order (and thus the
    # exact float result) identical to the compiled kernel.
    for value in sorted(counts):
        p = counts[value] / n
        h -= p * math.log2(p)
    return abs(h)  # avoid -0.0 for single-symbol input


def levenshtein(a: str, b: str) -> int:
    """Unit-cost Levenshtein edit distance between two strings."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    # Two-row dynamic program; keep the shorter string as the row.
    if len(b) > len(a):
        a, b = b, a
    prev = list(range(len(b) + 1))
    cur = [0] * (len(b) + 1)
    for i, ca in enumerate(a, start=1):
        cur[0] = i
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev, cur = cur, prev
    return prev[len(b)]


def min_levenshtein(name: str, candidates: list[str]) -> int:
    """Minimum edit distance from ``name`` to any candidate.

    Returns len(name) when the candidate list is empty (distance to the
    empty corpus is the cost of deleting every character).
    """
    if not candidates:
        return len(name)
    best = None
    for cand in candidates:
        d = levenshtein(name, cand)
        if best is None or d < best:
            best = d
            if best == 0:
                break
    return best
