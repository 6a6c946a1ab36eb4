"""The dynamic vocabulary: per-document start/end vector stores, the token
embedding table, the coarse document retriever, and candidate assembly.

Storage grows as O(total tokens x d) + O(|V| x d): only per-token start/end
halves are kept, and any span's vector is assembled on demand by
concatenation. Scoring casts the float32 stores to float64 and accumulates in
float64, which keeps results bit-stable across save/load round trips.

Index file format (all little-endian), magic "COG1":

    offset  field
    0       magic "COG1"
    4       u16 format version (currently 1)
    6       u16 reserved
    8       u32 d, u32 d_t, u32 l_max, u32 vocab_size, u32 n_docs
    28      u64 encoder seed
    36      f64 encoder alpha
    44      32-byte encoder fingerprint (sha256)
    76      u32 section count, then per section: u32 id, u64 offset, u64 len
    ...     u32 crc32 over all section payload bytes
    ...     section payloads

Sections: 1 vocab surfaces (JSON), 2 doc lengths (u32), 3 doc tokens (u32,
concatenated), 4 token table (f32), 5 start matrices (f32, concatenated),
6 end matrices (f32, concatenated), 7 doc retrieval vectors (f32), 8 encoder
parameter dump (may be empty for external backends). The coarse retrieval
vector of a document is the mean of its start-matrix rows; the prefix side
uses the same definition (start-projected mean of the prefix's contextual
vectors), so both live in R^{d/2}.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus, Vocabulary
from .encoder import DocumentReps, EncoderBackend, PrefixState, ToyBackend, ToyParams
from .segmenter import Segment
from .similarity import cosine_scores, row_norms

_MAGIC = b"COG1"
_VERSION = 1

_SEC_VOCAB = 1
_SEC_DOC_LENGTHS = 2
_SEC_DOC_TOKENS = 3
_SEC_TOKEN_TABLE = 4
_SEC_START = 5
_SEC_END = 6
_SEC_DOC_VECTORS = 7
_SEC_PARAMS = 8


class PhraseIndexError(Exception):
    """Base for index construction/usage errors."""


class IndexFormatError(PhraseIndexError):
    """File is not a recognizable index."""


class IndexVersionError(IndexFormatError):
    pass


class IndexTruncatedError(IndexFormatError):
    pass


class IndexChecksumError(IndexFormatError):
    pass


@dataclass
class SearchConfig:
    k_docs: int = 1024
    include_tokens: bool = True
    tokens_only: bool = False

    def __post_init__(self):
        if self.k_docs < 0:
            raise ValueError("k_docs must be >= 0")


@dataclass
class Candidate:
    ref: Segment
    vector: np.ndarray
    score: Optional[float] = None


class CandidateSet(Sequence):
    """Candidates in canonical order: token candidates by id, then phrase
    candidates by (doc, s, e). Vectors live in one float32 matrix; scores are
    filled by ``score_candidates``."""

    def __init__(
        self,
        vectors: np.ndarray,
        token_ids: np.ndarray,
        phrase_docs: np.ndarray,
        phrase_s: np.ndarray,
        phrase_e: np.ndarray,
    ):
        self.vectors = vectors
        self.token_ids = token_ids
        self.phrase_docs = phrase_docs
        self.phrase_s = phrase_s
        self.phrase_e = phrase_e
        self.scores: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.token_ids) + len(self.phrase_docs)

    @property
    def n_tokens(self) -> int:
        return len(self.token_ids)

    def ref(self, i: int) -> Segment:
        nt = self.n_tokens
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError("candidate index out of range")
        if i < nt:
            return Segment.token_seg(int(self.token_ids[i]))
        j = i - nt
        return Segment.phrase(
            int(self.phrase_docs[j]), int(self.phrase_s[j]), int(self.phrase_e[j])
        )

    def __getitem__(self, i: int) -> Candidate:
        ref = self.ref(i)
        score = None if self.scores is None else float(self.scores[i])
        return Candidate(ref=ref, vector=self.vectors[i], score=score)


@lru_cache(maxsize=512)
def _span_indices(m: int, l_max: int) -> tuple[np.ndarray, np.ndarray]:
    # all (s, e) with e - s + 1 <= l_max, lexicographic in (s, e)
    counts = np.minimum(l_max, m - np.arange(m))
    s_idx = np.repeat(np.arange(m), counts)
    within = np.arange(counts.sum()) - np.repeat(np.concatenate([[0], counts.cumsum()[:-1]]), counts)
    return s_idx, s_idx + within


def span_count(m: int, l_max: int) -> int:
    """Number of spans of a document of m tokens: sum over lengths 1..l_max of
    (m - length + 1)."""
    return int(np.minimum(l_max, m - np.arange(m)).sum())


class PhraseIndex:
    def __init__(
        self,
        doc_starts: list[np.ndarray],
        doc_ends: list[np.ndarray],
        doc_vectors: np.ndarray,
        token_table: np.ndarray,
        doc_tokens: list[np.ndarray],
        vocab_surfaces: list[str],
        l_max: int,
        seed: int,
        alpha: float,
        fingerprint: str,
        params_blob: bytes = b"",
        backend: Optional[EncoderBackend] = None,
        d_t: Optional[int] = None,
    ):
        self.doc_starts = doc_starts
        self.doc_ends = doc_ends
        self.doc_vectors = doc_vectors
        self.token_table = token_table
        self.doc_tokens = doc_tokens
        self.vocab_surfaces = vocab_surfaces
        self.l_max = l_max
        self.seed = seed
        self.alpha = alpha
        self.fingerprint = fingerprint
        self.params_blob = params_blob
        self.backend = backend
        self.d = int(token_table.shape[1])
        if d_t is None:
            d_t = backend.d_t if backend is not None else self.d
        self.d_t = d_t
        self._doc_norms: Optional[np.ndarray] = None

    def doc_vector_norms(self) -> np.ndarray:
        if self._doc_norms is None:
            self._doc_norms = row_norms(self.doc_vectors)
        return self._doc_norms

    @property
    def n_docs(self) -> int:
        return len(self.doc_tokens)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab_surfaces)

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(self.vocab_surfaces).freeze()

    def doc_reps(self, doc_id: int) -> DocumentReps:
        return DocumentReps(start=self.doc_starts[doc_id], end=self.doc_ends[doc_id])

    def doc_length(self, doc_id: int) -> int:
        return len(self.doc_tokens[doc_id])


def build_index(corpus: Corpus, backend: EncoderBackend, l_max: int = 8) -> PhraseIndex:
    """Encode every document offline and assemble the dynamic vocabulary.

    Any corpus sharing the backend's vocabulary can be indexed, trained-on or
    not; that is what makes swapping collections a no-retraining operation.
    """
    if len(corpus) == 0:
        raise PhraseIndexError("cannot index an empty corpus")
    if len(corpus.vocabulary) != backend.vocab_size:
        raise PhraseIndexError(
            f"vocabulary size {len(corpus.vocabulary)} does not match "
            f"backend token table {backend.vocab_size}"
        )
    doc_starts: list[np.ndarray] = []
    doc_ends: list[np.ndarray] = []
    doc_vecs = np.zeros((len(corpus), backend.d // 2), dtype=np.float32)
    doc_tokens: list[np.ndarray] = []
    for doc in corpus.documents:
        if len(doc.tokens) == 0:
            raise PhraseIndexError(f"document {doc.id} is empty")
        reps = backend.encode_document(doc.tokens)
        start32 = reps.start.astype(np.float32)
        end32 = reps.end.astype(np.float32)
        doc_starts.append(start32)
        doc_ends.append(end32)
        doc_vecs[doc.id] = reps.start.mean(axis=0).astype(np.float32)
        doc_tokens.append(np.asarray(doc.tokens, dtype=np.uint32))
    params_blob = b""
    if isinstance(backend, ToyBackend):
        params_blob = backend.params.to_bytes()
        seed, alpha = backend.params.seed, backend.params.alpha
    else:
        seed, alpha = 0, 0.0
    return PhraseIndex(
        doc_starts=doc_starts,
        doc_ends=doc_ends,
        doc_vectors=doc_vecs,
        token_table=np.asarray(backend.token_table(), dtype=np.float32),
        doc_tokens=doc_tokens,
        vocab_surfaces=corpus.vocabulary.surfaces(),
        l_max=l_max,
        seed=seed,
        alpha=alpha,
        fingerprint=backend.fingerprint,
        params_blob=params_blob,
        backend=backend,
    )


def retrieve_documents(index: PhraseIndex, state: PrefixState, k: int) -> list[int]:
    """Coarse stage: top-k documents by cosine against the prefix retrieval
    vector, ties broken by ascending id. k >= N returns every document."""
    if k <= 0:
        return []
    if index.backend is None:
        raise PhraseIndexError("index has no attached encoder backend")
    rv = index.backend.retrieval_vector(state).astype(np.float32)
    cos = cosine_scores(index.doc_vectors, rv, norms=index.doc_vector_norms())
    ids = np.arange(index.n_docs)
    order = np.lexsort((ids, -cos))
    return [int(i) for i in order[:k]]


def collect_candidates(
    index: PhraseIndex, doc_ids: Sequence[int], config: SearchConfig
) -> CandidateSet:
    """All spans (length <= l_max) of the listed documents plus, unless
    disabled, every vocabulary token. The same surface span in two documents
    yields two distinct candidates."""
    d = index.d
    parts: list[np.ndarray] = []
    if config.tokens_only or config.include_tokens:
        token_ids = np.arange(index.vocab_size, dtype=np.int64)
        parts.append(index.token_table)
    else:
        token_ids = np.empty(0, dtype=np.int64)
    docs_sorted = sorted(set(int(i) for i in doc_ids)) if not config.tokens_only else []
    pd: list[np.ndarray] = []
    ps: list[np.ndarray] = []
    pe: list[np.ndarray] = []
    for doc_id in docs_sorted:
        m = index.doc_length(doc_id)
        s_idx, e_idx = _span_indices(m, index.l_max)
        vecs = np.concatenate(
            [index.doc_starts[doc_id][s_idx], index.doc_ends[doc_id][e_idx]], axis=1
        )
        parts.append(vecs)
        pd.append(np.full(len(s_idx), doc_id, dtype=np.int64))
        ps.append(s_idx.astype(np.int64))
        pe.append(e_idx.astype(np.int64))
    if parts:
        vectors = np.concatenate(parts, axis=0)
    else:
        vectors = np.empty((0, d), dtype=np.float32)
    cat = lambda xs: np.concatenate(xs) if xs else np.empty(0, dtype=np.int64)
    return CandidateSet(vectors, token_ids, cat(pd), cat(ps), cat(pe))


def score_candidates(state: PrefixState, candidates: CandidateSet) -> CandidateSet:
    """Fill each candidate's fitness: the dot product of its vector with the
    prefix vector, accumulated in float64. Order is preserved."""
    q = state.q.astype(np.float32).astype(np.float64)
    if candidates.vectors.shape[1] != q.shape[0]:
        raise PhraseIndexError(
            f"candidate dimension {candidates.vectors.shape[1]} does not match prefix {q.shape[0]}"
        )
    candidates.scores = candidates.vectors.astype(np.float64) @ q
    return candidates


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_index(index: PhraseIndex, path: str | Path) -> None:
    sections: list[tuple[int, bytes]] = []
    vocab_json = json.dumps(index.vocab_surfaces, sort_keys=False, separators=(",", ":"))
    sections.append((_SEC_VOCAB, vocab_json.encode("utf-8")))
    lengths = np.asarray([len(t) for t in index.doc_tokens], dtype="<u4")
    sections.append((_SEC_DOC_LENGTHS, lengths.tobytes()))
    sections.append(
        (_SEC_DOC_TOKENS, np.concatenate(index.doc_tokens).astype("<u4").tobytes())
    )
    sections.append((_SEC_TOKEN_TABLE, np.ascontiguousarray(index.token_table, "<f4").tobytes()))
    sections.append(
        (_SEC_START, b"".join(np.ascontiguousarray(a, "<f4").tobytes() for a in index.doc_starts))
    )
    sections.append(
        (_SEC_END, b"".join(np.ascontiguousarray(a, "<f4").tobytes() for a in index.doc_ends))
    )
    sections.append((_SEC_DOC_VECTORS, np.ascontiguousarray(index.doc_vectors, "<f4").tobytes()))
    sections.append((_SEC_PARAMS, index.params_blob))

    head = _MAGIC + struct.pack(
        "<HHIIIIIQd",
        _VERSION,
        0,
        index.d,
        index.d_t,
        index.l_max,
        index.vocab_size,
        index.n_docs,
        index.seed,
        index.alpha,
    )
    head += bytes.fromhex(index.fingerprint)
    table_size = 4 + len(sections) * 20 + 4
    payload_start = len(head) + table_size
    table = struct.pack("<I", len(sections))
    offset = payload_start
    payload = b""
    for sec_id, blob in sections:
        table += struct.pack("<IQQ", sec_id, offset, len(blob))
        offset += len(blob)
        payload += blob
    crc = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    Path(path).write_bytes(head + table + crc + payload)


def load_index(path: str | Path) -> PhraseIndex:
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise IndexFormatError("not an index file (bad magic)")
    head_fmt = "<HHIIIIIQd"
    head_size = 4 + struct.calcsize(head_fmt) + 32
    if len(blob) < head_size + 8:
        raise IndexTruncatedError("index header truncated")
    version, _, d, d_t, l_max, vocab_size, n_docs, seed, alpha = struct.unpack_from(
        head_fmt, blob, 4
    )
    if version != _VERSION:
        raise IndexVersionError(f"index format version {version}, expected {_VERSION}")
    fingerprint = blob[head_size - 32 : head_size].hex()
    (n_sections,) = struct.unpack_from("<I", blob, head_size)
    pos = head_size + 4
    table: dict[int, tuple[int, int]] = {}
    for _ in range(n_sections):
        if pos + 20 > len(blob):
            raise IndexTruncatedError("section table truncated")
        sec_id, off, length = struct.unpack_from("<IQQ", blob, pos)
        table[sec_id] = (off, length)
        pos += 20
    (crc_stored,) = struct.unpack_from("<I", blob, pos)
    payload_start = pos + 4
    if any(off + length > len(blob) for off, length in table.values()):
        raise IndexTruncatedError("index payload truncated")
    payload = blob[payload_start:]
    if (zlib.crc32(payload) & 0xFFFFFFFF) != crc_stored:
        raise IndexChecksumError("index payload checksum mismatch")

    def section(sec_id: int) -> bytes:
        off, length = table[sec_id]
        return blob[off : off + length]

    surfaces = json.loads(section(_SEC_VOCAB).decode("utf-8"))
    lengths = np.frombuffer(section(_SEC_DOC_LENGTHS), dtype="<u4")
    all_tokens = np.frombuffer(section(_SEC_DOC_TOKENS), dtype="<u4")
    token_table = np.frombuffer(section(_SEC_TOKEN_TABLE), dtype="<f4").reshape(vocab_size, d)
    half = d // 2
    starts_flat = np.frombuffer(section(_SEC_START), dtype="<f4")
    ends_flat = np.frombuffer(section(_SEC_END), dtype="<f4")
    doc_vectors = np.frombuffer(section(_SEC_DOC_VECTORS), dtype="<f4").reshape(n_docs, half)
    params_blob = section(_SEC_PARAMS)

    doc_tokens: list[np.ndarray] = []
    doc_starts: list[np.ndarray] = []
    doc_ends: list[np.ndarray] = []
    tok_pos = 0
    vec_pos = 0
    for m in lengths:
        m = int(m)
        doc_tokens.append(all_tokens[tok_pos : tok_pos + m].astype(np.uint32))
        doc_starts.append(starts_flat[vec_pos : vec_pos + m * half].reshape(m, half))
        doc_ends.append(ends_flat[vec_pos : vec_pos + m * half].reshape(m, half))
        tok_pos += m
        vec_pos += m * half

    backend: Optional[EncoderBackend] = None
    if params_blob:
        backend = ToyBackend(ToyParams.from_bytes(params_blob))
    return PhraseIndex(
        doc_starts=doc_starts,
        doc_ends=doc_ends,
        doc_vectors=doc_vectors,
        token_table=token_table,
        doc_tokens=doc_tokens,
        vocab_surfaces=surfaces,
        l_max=int(l_max),
        seed=int(seed),
        alpha=float(alpha),
        fingerprint=fingerprint,
        params_blob=params_blob,
        backend=backend,
        d_t=int(d_t),
    )
