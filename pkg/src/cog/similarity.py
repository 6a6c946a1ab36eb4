"""Deterministic cosine scoring for the coarse retrieval stages.

BLAS matrix-vector products can give results that depend on a row's position
in the matrix, so two bitwise-identical vectors may score differently in the
last ulp, which would defeat the ascending-id tie rule. Row dots here use
math.fsum (exactly rounded), so equal inputs always score equal, and for
float32 stores the float64 products are exact, making the result platform
independent.
"""

from __future__ import annotations

from math import fsum, sqrt
from typing import Optional

import numpy as np


def dot_exact(u: np.ndarray, v: np.ndarray) -> float:
    return fsum((u.astype(np.float64) * v.astype(np.float64)).tolist())


def norm_exact(u: np.ndarray) -> float:
    u = u.astype(np.float64)
    return sqrt(fsum((u * u).tolist()))


def cosine_scores(
    vectors: np.ndarray, query: np.ndarray, norms: Optional[np.ndarray] = None
) -> np.ndarray:
    """Cosine of each row of ``vectors`` against ``query``; zero vectors on
    either side score 0.0."""
    q = np.asarray(query, dtype=np.float64)
    qn = norm_exact(q)
    out = np.zeros(len(vectors))
    if qn == 0.0:
        return out
    for i in range(len(vectors)):
        vn = norm_exact(vectors[i]) if norms is None else float(norms[i])
        if vn > 0.0:
            out[i] = dot_exact(vectors[i], q) / (vn * qn)
    return out


def row_norms(vectors: np.ndarray) -> np.ndarray:
    return np.asarray([norm_exact(row) for row in vectors])
