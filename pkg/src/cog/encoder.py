"""Prefix and phrase encoders.

The engine scores a candidate by the dot product between a prefix vector q and
the candidate's vector. Phrase vectors are assembled from per-token start/end
halves: a span (s, e) of a document is represented as [start[s]; end[e]], so a
document of m tokens yields all of its span representations from two m x (d/2)
matrices — storage grows with tokens, never with spans.

The bundled toy backend is fully deterministic and differentiable:

* base embeddings e(w): seeded uniform in [-0.1, 0.1], one row per vocab id
* contextual state: c_t = L2normalize(alpha * e(x_t) + (1 - alpha) * c_{t-1}),
  c_0 = 0, normalization skipped for the exact zero vector (alpha = 0.5)
* prefix vector q = contextual state of the last prefix token (so d_t == d)
* start/end halves: two seeded affine maps d_t -> d/2 applied per token
* context-independent token embeddings: an independent seeded |V| x d table

Backends are immutable after construction; PrefixState is a value, and
appending a token computes one recurrence step without re-encoding.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels

_PARAMS_MAGIC = b"COGP"
_PARAMS_VERSION = 1


class EncoderError(ValueError):
    pass


@dataclass
class DocumentReps:
    """Per-token start/end projection matrices, each m x (d/2)."""

    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        if self.start.shape != self.end.shape:
            raise EncoderError("start/end shape mismatch")

    @property
    def m(self) -> int:
        return self.start.shape[0]


def phrase_repr(s: int, e: int, reps: DocumentReps) -> np.ndarray:
    """Representation of the span [s, e]: concatenation [start[s]; end[e]]."""
    m = reps.m
    if not (0 <= s < m and 0 <= e < m):
        raise EncoderError(f"span ({s}, {e}) out of range for document of {m} tokens")
    if s > e:
        raise EncoderError(f"span start {s} exceeds end {e}")
    return np.concatenate([reps.start[s], reps.end[e]])


class ToyParams:
    """All trainable arrays of the toy backend, in float64.

    Serialized layout (little-endian): magic "COGP", u16 version, u32 d,
    u32 d_t, u32 vocab_size, u64 seed, f64 alpha, then the raw float64 arrays
    emb, w_start, b_start, w_end, b_end, token_table in that order.
    """

    FIELDS = ("emb", "w_start", "b_start", "w_end", "b_end", "token_table")

    def __init__(
        self,
        emb: np.ndarray,
        w_start: np.ndarray,
        b_start: np.ndarray,
        w_end: np.ndarray,
        b_end: np.ndarray,
        token_table: np.ndarray,
        alpha: float = 0.5,
        seed: int = 0,
    ):
        self.emb = np.asarray(emb, dtype=np.float64)
        self.w_start = np.asarray(w_start, dtype=np.float64)
        self.b_start = np.asarray(b_start, dtype=np.float64)
        self.w_end = np.asarray(w_end, dtype=np.float64)
        self.b_end = np.asarray(b_end, dtype=np.float64)
        self.token_table = np.asarray(token_table, dtype=np.float64)
        self.alpha = float(alpha)
        self.seed = int(seed)

        v, d_t = self.emb.shape
        half = self.w_start.shape[1]
        d = 2 * half
        if d % 2 != 0 or d <= 0:
            raise EncoderError("representation dimension must be positive and even")
        if d_t != d:
            raise EncoderError("toy backend requires d_t == d (q is the last contextual state)")
        if self.w_start.shape != (d_t, half) or self.w_end.shape != (d_t, half):
            raise EncoderError("projection matrices must be d_t x d/2")
        if self.b_start.shape != (half,) or self.b_end.shape != (half,):
            raise EncoderError("projection biases must be d/2")
        if self.token_table.shape != (v, d):
            raise EncoderError("token table must be |V| x d")
        self.vocab_size = v
        self.d = d
        self.d_t = d_t

    @classmethod
    def seeded(cls, vocab_size: int, d: int = 64, seed: int = 0, alpha: float = 0.5) -> "ToyParams":
        if d % 2 != 0 or d <= 0:
            raise EncoderError("d must be positive and even")
        if vocab_size < 1:
            raise EncoderError("vocabulary must contain at least the UNK token")
        rng = np.random.default_rng(seed)
        half = d // 2
        # draw order is part of the format: emb, w_start, b_start, w_end, b_end, table
        return cls(
            emb=rng.uniform(-0.1, 0.1, (vocab_size, d)),
            w_start=rng.uniform(-0.1, 0.1, (d, half)),
            b_start=rng.uniform(-0.1, 0.1, half),
            w_end=rng.uniform(-0.1, 0.1, (d, half)),
            b_end=rng.uniform(-0.1, 0.1, half),
            token_table=rng.uniform(-0.1, 0.1, (vocab_size, d)),
            alpha=alpha,
            seed=seed,
        )

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in self.FIELDS]

    def copy(self) -> "ToyParams":
        return ToyParams(
            *[a.copy() for a in self.arrays()], alpha=self.alpha, seed=self.seed
        )

    # flat-vector view, used by gradient descent and finite differences
    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_vector(self, vec: np.ndarray) -> "ToyParams":
        out = []
        pos = 0
        for a in self.arrays():
            n = a.size
            out.append(vec[pos : pos + n].reshape(a.shape).copy())
            pos += n
        if pos != vec.size:
            raise EncoderError("parameter vector size mismatch")
        return ToyParams(*out, alpha=self.alpha, seed=self.seed)

    def to_bytes(self) -> bytes:
        head = _PARAMS_MAGIC + struct.pack(
            "<HIIIQd",
            _PARAMS_VERSION,
            self.d,
            self.d_t,
            self.vocab_size,
            self.seed,
            self.alpha,
        )
        body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in self.arrays())
        return head + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ToyParams":
        if blob[:4] != _PARAMS_MAGIC:
            raise EncoderError("not a parameter dump (bad magic)")
        version, d, d_t, vocab, seed, alpha = struct.unpack_from("<HIIIQd", blob, 4)
        if version != _PARAMS_VERSION:
            raise EncoderError(f"unsupported parameter dump version {version}")
        half = d // 2
        shapes = [(vocab, d_t), (d_t, half), (half,), (d_t, half), (half,), (vocab, d)]
        pos = 4 + struct.calcsize("<HIIIQd")
        arrays = []
        for shape in shapes:
            n = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape)
            arrays.append(arr.astype(np.float64))
            pos += n * 8
        if pos != len(blob):
            raise EncoderError("parameter dump has trailing bytes")
        return cls(*arrays, alpha=alpha, seed=seed)

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


class PrefixState:
    """Incremental prefix representation. Value semantics: append returns a
    new state and never mutates the old one."""

    __slots__ = ("tokens", "c", "csum")

    def __init__(self, tokens: tuple[int, ...], c: np.ndarray, csum: np.ndarray):
        self.tokens = tokens
        self.c = c
        self.csum = csum

    @property
    def q(self) -> np.ndarray:
        return self.c

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PrefixState):
            return NotImplemented
        return (
            self.tokens == other.tokens
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.csum, other.csum)
        )


class EncoderBackend:
    """Contract every encoder backend satisfies (toy and sidecar)."""

    d: int
    d_t: int
    vocab_size: int

    @property
    def fingerprint(self) -> str:
        raise NotImplementedError

    def encode_prefix_init(self, tokens: Sequence[int]) -> PrefixState:
        raise NotImplementedError

    def encode_prefix_append(self, state: PrefixState, token: int) -> PrefixState:
        raise NotImplementedError

    def encode_document(self, tokens: Sequence[int]) -> DocumentReps:
        raise NotImplementedError

    def token_embedding(self, token: int) -> np.ndarray:
        raise NotImplementedError

    def token_table(self) -> np.ndarray:
        raise NotImplementedError

    def retrieval_vector(self, state: PrefixState) -> np.ndarray:
        """d/2 vector used by the coarse document-retrieval stage."""
        raise NotImplementedError


class ToyBackend(EncoderBackend):
    def __init__(self, params: ToyParams):
        self.params = params
        self.d = params.d
        self.d_t = params.d_t
        self.vocab_size = params.vocab_size

    @property
    def fingerprint(self) -> str:
        return self.params.fingerprint

    def _check_token(self, token: int) -> None:
        if not 0 <= token < self.vocab_size:
            raise EncoderError(f"token id {token} outside vocabulary of {self.vocab_size}")

    def context_series(self, tokens: Sequence[int]) -> np.ndarray:
        """Contextual state after each token, as an m x d_t matrix."""
        for t in tokens:
            self._check_token(t)
        rows = self.params.emb[np.asarray(tokens, dtype=np.int64)]
        return kernels.context_series(np.ascontiguousarray(rows), self.params.alpha)

    def encode_prefix_init(self, tokens: Sequence[int]) -> PrefixState:
        if len(tokens) == 0:
            raise EncoderError("prefix must contain at least one token")
        state = PrefixState((), np.zeros(self.d_t), np.zeros(self.d_t))
        for t in tokens:
            state = self.encode_prefix_append(state, t)
        return state

    def encode_prefix_append(self, state: PrefixState, token: int) -> PrefixState:
        self._check_token(token)
        c = kernels.context_step(state.c, self.params.emb[token], self.params.alpha)
        return PrefixState(state.tokens + (int(token),), c, state.csum + c)

    def encode_document(self, tokens: Sequence[int]) -> DocumentReps:
        if len(tokens) == 0:
            raise EncoderError("cannot encode an empty document")
        ctx = self.context_series(tokens)
        return DocumentReps(
            start=ctx @ self.params.w_start + self.params.b_start,
            end=ctx @ self.params.w_end + self.params.b_end,
        )

    def token_embedding(self, token: int) -> np.ndarray:
        self._check_token(token)
        return self.params.token_table[token].copy()

    def token_table(self) -> np.ndarray:
        return self.params.token_table.copy()

    def retrieval_vector(self, state: PrefixState) -> np.ndarray:
        if len(state) == 0:
            raise EncoderError("retrieval vector of an empty prefix is undefined")
        pooled = state.csum / len(state)
        return pooled @ self.params.w_start + self.params.b_start
