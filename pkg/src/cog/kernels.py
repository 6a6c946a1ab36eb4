"""Hot numeric kernels, compiled with numba when available.

Every kernel has a pure-numpy implementation and a numba-compiled twin with
identical semantics. The numba path is selected at import time when numba is
importable, unless the environment variable ``COG_DISABLE_NUMBA`` is set to
``1``/``true``/``yes``. ``benchmarks/bench_kernels.py`` times both paths.

The selection is process-wide and fixed at import, so incremental and batch
uses of the same kernel always share one arithmetic order.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("COG_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via COG_DISABLE_NUMBA instead
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and not _DISABLED


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------


def _context_step_np(c_prev: np.ndarray, emb: np.ndarray, alpha: float) -> np.ndarray:
    # convex mix of the token embedding and the previous state, then L2
    # normalization; normalization is skipped for the exact zero vector
    u = alpha * emb + (1.0 - alpha) * c_prev
    n = np.sqrt(u @ u)
    if n > 0.0:
        return u / n
    return u


def _context_series_np(embs: np.ndarray, alpha: float) -> np.ndarray:
    t_len, dim = embs.shape
    out = np.empty((t_len, dim))
    c = np.zeros(dim)
    for t in range(t_len):
        c = _context_step_np(c, embs[t], alpha)
        out[t] = c
    return out


def _longest_match_np(query: np.ndarray, doc: np.ndarray) -> tuple[int, int]:
    m = query.shape[0]
    n = doc.shape[0]
    if n == 0 or m == 0:
        return 0, -1
    padded = np.full(n + m, -1, dtype=np.int64)
    padded[:n] = doc
    windows = np.lib.stride_tricks.sliding_window_view(padded, m)[:n]
    lengths = (windows == query).cumprod(axis=1).sum(axis=1)
    best = int(lengths.max())
    if best == 0:
        return 0, -1
    return best, int(np.argmax(lengths))


def _span_max_np(a: np.ndarray, b: np.ndarray, lmax: int) -> float:
    m = a.shape[0]
    best = -np.inf
    for off in range(min(lmax, m)):
        v = a[: m - off] + b[off:]
        top = v.max()
        if top > best:
            best = top
    return float(best)


def _span_sumexp_np(a: np.ndarray, b: np.ndarray, lmax: int, shift: float) -> float:
    m = a.shape[0]
    total = 0.0
    for off in range(min(lmax, m)):
        total += np.exp(a[: m - off] + b[off:] - shift).sum()
    return float(total)


def _span_weight_sums_np(
    a: np.ndarray, b: np.ndarray, lmax: int, shift: float, denom: float
) -> tuple[np.ndarray, np.ndarray]:
    m = a.shape[0]
    row = np.zeros(m)
    col = np.zeros(m)
    for off in range(min(lmax, m)):
        w = np.exp(a[: m - off] + b[off:] - shift) / denom
        row[: m - off] += w
        col[off:] += w
    return row, col


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:

    @njit(cache=True)
    def _context_step_nb(c_prev, emb, alpha):
        d = emb.shape[0]
        u = alpha * emb + (1.0 - alpha) * c_prev
        s = 0.0
        for j in range(d):
            s += u[j] * u[j]
        n = np.sqrt(s)
        if n > 0.0:
            return u / n
        return u

    @njit(cache=True)
    def _context_series_nb(embs, alpha):
        t_len, dim = embs.shape
        out = np.empty((t_len, dim))
        c = np.zeros(dim)
        for t in range(t_len):
            c = _context_step_nb(c, embs[t], alpha)
            out[t] = c
        return out

    @njit(cache=True)
    def _longest_match_nb(query, doc):
        m = query.shape[0]
        n = doc.shape[0]
        best = 0
        best_start = -1
        for start in range(n):
            limit = n - start
            if m < limit:
                limit = m
            if limit <= best:
                continue
            length = 0
            while length < limit and doc[start + length] == query[length]:
                length += 1
            if length > best:
                best = length
                best_start = start
                if best == m:
                    break
        return best, best_start

    @njit(cache=True)
    def _span_max_nb(a, b, lmax):
        m = a.shape[0]
        best = -np.inf
        for s in range(m):
            hi = s + lmax
            if hi > m:
                hi = m
            for e in range(s, hi):
                z = a[s] + b[e]
                if z > best:
                    best = z
        return best

    @njit(cache=True)
    def _span_sumexp_nb(a, b, lmax, shift):
        m = a.shape[0]
        total = 0.0
        for s in range(m):
            hi = s + lmax
            if hi > m:
                hi = m
            for e in range(s, hi):
                total += np.exp(a[s] + b[e] - shift)
        return total

    @njit(cache=True)
    def _span_weight_sums_nb(a, b, lmax, shift, denom):
        m = a.shape[0]
        row = np.zeros(m)
        col = np.zeros(m)
        for s in range(m):
            hi = s + lmax
            if hi > m:
                hi = m
            for e in range(s, hi):
                w = np.exp(a[s] + b[e] - shift) / denom
                row[s] += w
                col[e] += w
        return row, col

    context_step = _context_step_nb
    context_series = _context_series_nb
    _longest_match = _longest_match_nb
    span_max = _span_max_nb
    span_sumexp = _span_sumexp_nb
    span_weight_sums = _span_weight_sums_nb
else:
    context_step = _context_step_np
    context_series = _context_series_np
    _longest_match = _longest_match_np
    span_max = _span_max_np
    span_sumexp = _span_sumexp_np
    span_weight_sums = _span_weight_sums_np


def longest_match(query: np.ndarray, doc: np.ndarray) -> tuple[int, int]:
    """Longest prefix of ``query`` occurring contiguously in ``doc``.

    Returns ``(length, start)`` where ``start`` is the smallest document
    position achieving that length, or ``(0, -1)`` when not even the first
    token matches.
    """
    length, start = _longest_match(query, doc)
    return int(length), int(start)
