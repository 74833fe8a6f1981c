# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring kernels: byte entropy and edit distance.

Semantics must match skilltriage._kernels._fallback exactly; the test
suite cross-checks both backends on random inputs.
"""

from libc.stdlib cimport free, malloc
from libc.math cimport fabs, log2


def shannon_entropy_bits(data):
    """Shannon entropy in bits per byte; 0.0 for empty input."""
    cdef const unsigned char[::1] view = data
    cdef Py_ssize_t n = view.shape[0]
    if n == 0:
        return 0.0
    cdef long counts[256]
    cdef Py_ssize_t i
    for i in range(256):
        counts[i] = 0
    for i in range(n):
        counts[view[i]] += 1
    cdef double h = 0.0
    cdef double p
    for i in range(256):
        if counts[i] != 0:
            p = <double>counts[i] / <double>n
            h -= p * log2(p)
    return fabs(h)


def levenshtein(str a, str b):
    """Unit-cost Levenshtein edit distance between two strings."""
    if a == b:
        return 0
    cdef Py_ssize_t la = len(a)
    cdef Py_ssize_t lb = len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    if lb > la:
        a, b = b, a
        la, lb = lb, la
    cdef Py_ssize_t *prev = <Py_ssize_t *> malloc((lb + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t *cur = <Py_ssize_t *> malloc((lb + 1) * sizeof(Py_ssize_t))
    if prev == NULL or cur == NULL:
        if prev != NULL:
            free(prev)
        if cur != NULL:
            free(cur)
        raise MemoryError()
    cdef Py_ssize_t i, j, cost, best
    cdef Py_ssize_t *tmp
    cdef Py_UCS4 ca, cb
    try:
        for j in range(lb + 1):
            prev[j] = j
        for i in range(1, la + 1):
            cur[0] = i
            ca = a[i - 1]
            for j in range(1, lb + 1):
                cb = b[j - 1]
                cost = 0 if ca == cb else 1
                best = prev[j] + 1
                if cur[j - 1] + 1 < best:
                    best = cur[j - 1] + 1
                if prev[j - 1] + cost < best:
                    best = prev[j - 1] + cost
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
        return prev[lb]
    finally:
        free(prev)
        free(cur)


def min_levenshtein(str name, list candidates):
    """Minimum edit distance from ``name`` to any candidate."""
    if not candidates:
        return len(name)
    cdef Py_ssize_t best = -1
    cdef Py_ssize_t d
    for cand in candidates:
        d = levenshtein(name, <str>cand)
        if best < 0 or d < best:
            best = d
            if best == 0:
                break
    return best
