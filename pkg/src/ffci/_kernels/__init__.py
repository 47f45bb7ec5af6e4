"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the
pure-Python twin takes over.  Set FFCI_PURE_KERNELS=1 to force the fallback
(used by the benchmark and the parity tests).
"""

import importlib
import os

import numpy as np

from ffci._kernels import _pure

_native = None
if not os.environ.get("FFCI_PURE_KERNELS"):
    try:
        _native = importlib.import_module("ffci._kernels._native")
    except ImportError:
        _native = None

BACKEND = "native" if _native is not None else "pure"

# ids up to 16 bits pack into the compiled kernel's 64-bit n-gram key
_NATIVE_MAX_ID = 1 << 16
_NATIVE_MAX_N = 4


def lcs_length(a, b) -> int:
    """LCS length between two sequences of non-negative token ids."""
    if _native is not None:
        return _native.lcs_length(np.asarray(a, dtype=np.int32),
                                  np.asarray(b, dtype=np.int32))
    return _pure.lcs_length(a, b)


def clipped_ngram_matches(cand, ref, n: int) -> int:
    """Sum over n-grams of min(candidate count, reference count).

    Token ids must be non-negative.  The compiled path handles n <= 4 with
    ids below 2**16; anything else falls back to the pure implementation.
    """
    if n < 1:
        raise ValueError("n-gram order must be >= 1")
    if _native is not None and n <= _NATIVE_MAX_N:
        ca = np.asarray(cand, dtype=np.int32)
        ra = np.asarray(ref, dtype=np.int32)
        if (ca.size == 0 or ca.max() < _NATIVE_MAX_ID) and \
           (ra.size == 0 or ra.max() < _NATIVE_MAX_ID):
            return _native.clipped_ngram_matches(ca, ra, n)
    return _pure.clipped_ngram_matches(cand, ref, n)
