# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: LCS table fill and greedy block alignment.

Semantics must stay identical to ``_pykernels``; the test suite checks
the two backends against each other on random inputs.
"""

from libc.stdlib cimport malloc, free


cdef int* _to_ints(object seq, Py_ssize_t n) except NULL:
    cdef int* buf = <int*> malloc(n * sizeof(int) if n > 0 else sizeof(int))
    if buf == NULL:
        raise MemoryError()
    cdef Py_ssize_t i
    for i in range(n):
        buf[i] = seq[i]
    return buf


def lcs_length(a, b):
    """Length of the longest common subsequence of two id sequences."""
    cdef Py_ssize_t n = len(a)
    cdef Py_ssize_t m = len(b)
    if n == 0 or m == 0:
        return 0
    if m > n:
        a, b = b, a
        n, m = m, n
    cdef int* av = _to_ints(a, n)
    cdef int* bv = NULL
    cdef int* prev = NULL
    cdef int* curr = NULL
    cdef int* tmp
    cdef Py_ssize_t i, j
    cdef int ai, up, left, result
    try:
        bv = _to_ints(b, m)
        prev = <int*> malloc((m + 1) * sizeof(int))
        curr = <int*> malloc((m + 1) * sizeof(int))
        if prev == NULL or curr == NULL:
            raise MemoryError()
        for j in range(m + 1):
            prev[j] = 0
            curr[j] = 0
        for i in range(1, n + 1):
            ai = av[i - 1]
            for j in range(1, m + 1):
                if ai == bv[j - 1]:
                    curr[j] = prev[j - 1] + 1
                else:
                    up = prev[j]
                    left = curr[j - 1]
                    curr[j] = up if up >= left else left
            tmp = prev
            prev = curr
            curr = tmp
        result = prev[m]
    finally:
        free(av)
        free(bv)
        free(prev)
        free(curr)
    return result


def greedy_align(c, r):
    """Greedy maximum unigram alignment; returns (matches, chunks).

    Same block-claiming order as the pure-Python kernel: longest run of
    equal unused ids first, ties to the leftmost candidate position then
    the leftmost reference position.
    """
    cdef Py_ssize_t n = len(c)
    cdef Py_ssize_t m = len(r)
    if n == 0 or m == 0:
        return 0, 0
    cdef int* cv = _to_ints(c, n)
    cdef int* rv = NULL
    cdef char* used_c = NULL
    cdef char* used_r = NULL
    cdef Py_ssize_t i, j, k, best_i, best_j, best_len
    cdef int matches = 0
    cdef int chunks = 0
    cdef int ci
    try:
        rv = _to_ints(r, m)
        used_c = <char*> malloc(n)
        used_r = <char*> malloc(m)
        if used_c == NULL or used_r == NULL:
            raise MemoryError()
        for i in range(n):
            used_c[i] = 0
        for j in range(m):
            used_r[j] = 0
        while True:
            best_len = 0
            best_i = -1
            best_j = -1
            for i in range(n):
                if used_c[i]:
                    continue
                ci = cv[i]
                for j in range(m):
                    if used_r[j] or rv[j] != ci:
                        continue
                    k = 0
                    while (
                        i + k < n
                        and j + k < m
                        and not used_c[i + k]
                        and not used_r[j + k]
                        and cv[i + k] == rv[j + k]
                    ):
                        k += 1
                    if k > best_len:
                        best_len = k
                        best_i = i
                        best_j = j
            if best_len == 0:
                break
            for k in range(best_len):
                used_c[best_i + k] = 1
                used_r[best_j + k] = 1
            matches += best_len
            chunks += 1
    finally:
        free(cv)
        free(rv)
        free(used_c)
        free(used_r)
    return matches, chunks
