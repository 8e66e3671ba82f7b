"""Pure-Python kernels: LCS table fill and greedy block alignment.

These mirror the compiled kernels in ``_ckernels`` exactly; the package
falls back to this module when the extension is unavailable.
"""

from __future__ import annotations

from typing import Sequence


def lcs_length(a: Sequence[int], b: Sequence[int]) -> int:
    """Length of the longest common subsequence of two id sequences."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    if m > n:  # keep the rolling row short
        a, b = b, a
        n, m = m, n
    prev = [0] * (m + 1)
    curr = [0] * (m + 1)
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                curr[j] = prev[j - 1] + 1
            else:
                pj = prev[j]
                cj = curr[j - 1]
                curr[j] = pj if pj >= cj else cj
        prev, curr = curr, prev
    return prev[m]


def greedy_align(c: Sequence[int], r: Sequence[int]) -> tuple[int, int]:
    """Greedy maximum unigram alignment of two id sequences.

    Repeatedly claims the longest contiguous run of equal, still-unused
    ids (ties: leftmost in ``c``, then leftmost in ``r``) until no common
    unused id remains. Returns (matched unigrams, chunk count). The match
    count always equals the per-id min-count bound; the chunk count is
    the greedy block count, which is what the fragmentation penalty uses
    on inputs too large for exhaustive search.
    """
    n, m = len(c), len(r)
    used_c = [False] * n
    used_r = [False] * m
    matches = 0
    chunks = 0
    while True:
        best_len = 0
        best_i = -1
        best_j = -1
        for i in range(n):
            if used_c[i]:
                continue
            for j in range(m):
                if used_r[j] or r[j] != c[i]:
                    continue
                k = 0
                while (
                    i + k < n
                    and j + k < m
                    and not used_c[i + k]
                    and not used_r[j + k]
                    and c[i + k] == r[j + k]
                ):
                    k += 1
                if k > best_len:
                    best_len = k
                    best_i = i
                    best_j = j
        if best_len == 0:
            break
        for k in range(best_len):
            used_c[best_i + k] = True
            used_r[best_j + k] = True
        matches += best_len
        chunks += 1
    return matches, chunks
