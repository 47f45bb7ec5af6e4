# distutils: language = c++
"""Compiled kernels for the token-overlap hot path.

Must stay result-identical to _pure; the test suite cross-checks both
backends on random inputs.
"""

from cython.operator cimport dereference as deref
from libcpp.unordered_map cimport unordered_map

import numpy as np
cimport numpy as cnp

BACKEND = "native"


def lcs_length(cnp.int32_t[::1] a, cnp.int32_t[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        return 0
    if m > n:
        a, b = b, a
        n, m = m, n
    cdef cnp.ndarray[cnp.int32_t, ndim=1] prev_arr = np.zeros(m + 1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cur_arr = np.zeros(m + 1, dtype=np.int32)
    cdef cnp.int32_t[::1] prev = prev_arr
    cdef cnp.int32_t[::1] cur = cur_arr
    cdef cnp.int32_t[::1] tmp
    cdef Py_ssize_t i, j
    cdef cnp.int32_t x, pj, cj
    for i in range(n):
        x = a[i]
        cur[0] = 0
        for j in range(1, m + 1):
            if x == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                pj = prev[j]
                cj = cur[j - 1]
                cur[j] = pj if pj >= cj else cj
        tmp = prev
        prev = cur
        cur = tmp
    return int(prev[m])


def clipped_ngram_matches(cnp.int32_t[::1] cand, cnp.int32_t[::1] ref, int n):
    # callers guarantee 1 <= n <= 4 and ids < 2**16 so n-grams pack into 64 bits
    cdef Py_ssize_t nc = cand.shape[0]
    cdef Py_ssize_t nr = ref.shape[0]
    if nc < n or nr < n:
        return 0
    cdef unordered_map[unsigned long long, long] counts
    cdef unordered_map[unsigned long long, long].iterator it
    cdef unsigned long long key
    cdef Py_ssize_t i
    cdef int k
    cdef long matches = 0
    for i in range(nr - n + 1):
        key = 0
        for k in range(n):
            key = (key << 16) | (<unsigned long long> ref[i + k])
        counts[key] = counts[key] + 1
    for i in range(nc - n + 1):
        key = 0
        for k in range(n):
            key = (key << 16) | (<unsigned long long> cand[i + k])
        it = counts.find(key)
        if it != counts.end() and deref(it).second > 0:
            counts[key] = deref(it).second - 1
            matches += 1
    return int(matches)
