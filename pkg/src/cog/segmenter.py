"""Greedy segmentation of training documents into copied phrases and tokens.

Scanning a document left to right, each step takes the longest prefix of the
unsegmented remainder (capped at l_max) that occurs contiguously inside one of
the document's retrieved neighbor documents. If that longest match is at least
l_min tokens it becomes a phrase segment carrying its provenance (source doc,
start, end); otherwise a single token segment is emitted. Concatenating the
segments always reproduces the document exactly.

Among equal-length longest matches the hit in the highest-ranked neighbor
wins, then the smallest start position. Matches never span document
boundaries. Neighbors are ranked by cosine similarity of mean-pooled
contextual token vectors, ties broken by ascending document id.

``brute_force_segment`` is the testing oracle: same contract, but it searches
every other document (no top-k restriction) with an independent n-gram
position-table implementation instead of the scanning kernel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .corpus import Corpus
from .encoder import EncoderBackend
from .similarity import cosine_scores, row_norms


@dataclass(frozen=True)
class Segment:
    kind: str  # "phrase" | "token"
    source_doc: int = -1
    s: int = -1
    e: int = -1
    token: int = -1

    @classmethod
    def phrase(cls, source_doc: int, s: int, e: int) -> "Segment":
        return cls(kind="phrase", source_doc=source_doc, s=s, e=e)

    @classmethod
    def token_seg(cls, token: int) -> "Segment":
        return cls(kind="token", token=token)

    @property
    def length(self) -> int:
        return self.e - self.s + 1 if self.kind == "phrase" else 1

    def to_dict(self) -> dict:
        if self.kind == "phrase":
            return {"kind": "phrase", "src": self.source_doc, "s": self.s, "e": self.e}
        return {"kind": "token", "id": self.token}

    @classmethod
    def from_dict(cls, rec: dict) -> "Segment":
        if rec["kind"] == "phrase":
            return cls.phrase(rec["src"], rec["s"], rec["e"])
        return cls.token_seg(rec["id"])


@dataclass
class SegmentedDocument:
    doc_id: int
    segments: list[Segment] = field(default_factory=list)

    def token_ids(self, corpus: Corpus) -> list[int]:
        """Concatenated segment tokens; must equal the document's tokens."""
        out: list[int] = []
        for seg in self.segments:
            if seg.kind == "phrase":
                out.extend(corpus.doc(seg.source_doc).tokens[seg.s : seg.e + 1])
            else:
                out.append(seg.token)
        return out


@dataclass
class SegmenterConfig:
    l_min: int = 2
    l_max: int = 8
    k_neighbors: int = 16  # 1024 at full scale

    def __post_init__(self):
        if not 1 <= self.l_min <= self.l_max:
            raise ValueError("require 1 <= l_min <= l_max")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


class Segmenter:
    """Caches per-document token arrays and retrieval vectors for one corpus."""

    def __init__(self, corpus: Corpus, backend: EncoderBackend, config: SegmenterConfig):
        self.corpus = corpus
        self.backend = backend
        self.config = config
        self._arrays = [np.asarray(d.tokens, dtype=np.int64) for d in corpus.documents]
        self._doc_vectors: Optional[np.ndarray] = None
        self._doc_norms: Optional[np.ndarray] = None
        self._ngram_tables: dict[int, dict] = {}

    def _vectors(self) -> np.ndarray:
        if self._doc_vectors is None:
            dim = self.backend.d_t
            vecs = np.zeros((len(self.corpus), dim))
            for i, doc in enumerate(self.corpus.documents):
                if doc.tokens:
                    vecs[i] = self.backend.context_series(doc.tokens).mean(axis=0)
            self._doc_vectors = vecs
            self._doc_norms = row_norms(vecs)
        return self._doc_vectors

    def neighbors(self, doc_id: int, k: int) -> list[int]:
        """Up to k other document ids by descending cosine, ties by id."""
        self.corpus.doc(doc_id)
        n = len(self.corpus)
        if n <= 1 or k <= 0:
            return []
        vecs = self._vectors()
        cos = cosine_scores(vecs, vecs[doc_id], norms=self._doc_norms)
        ids = np.arange(n)
        order = np.lexsort((ids, -cos))
        ranked = [int(i) for i in order if i != doc_id]
        return ranked[:k]

    def search_phrase(
        self, query: Sequence[int], neighbor_ids: Sequence[int]
    ) -> Optional[tuple[int, int]]:
        """First occurrence of the full query scanning neighbors in rank order."""
        if len(query) == 0:
            raise ValueError("query must be non-empty")
        q = np.asarray(query, dtype=np.int64)
        for nid in neighbor_ids:
            length, start = kernels.longest_match(q, self._arrays[nid])
            if length == len(q):
                return nid, start
        return None

    def segment_document(self, doc_id: int) -> SegmentedDocument:
        cfg = self.config
        ranked = self.neighbors(doc_id, cfg.k_neighbors)
        neighbor_arrays = [(nid, self._arrays[nid]) for nid in ranked]
        tokens = self._arrays[doc_id]
        segments: list[Segment] = []
        cursor = 0
        total = len(tokens)
        while cursor < total:
            cap = min(cfg.l_max, total - cursor)
            query = tokens[cursor : cursor + cap]
            best_len, best_doc, best_start = 0, -1, -1
            for nid, arr in neighbor_arrays:
                length, start = kernels.longest_match(query, arr)
                if length > best_len:
                    best_len, best_doc, best_start = length, nid, start
                    if best_len == cap:
                        break
            if best_len >= cfg.l_min:
                segments.append(Segment.phrase(best_doc, best_start, best_start + best_len - 1))
                cursor += best_len
            else:
                segments.append(Segment.token_seg(int(tokens[cursor])))
                cursor += 1
        return SegmentedDocument(doc_id=doc_id, segments=segments)

    def _ngram_table(self, doc_id: int) -> dict:
        got = self._ngram_tables.get(doc_id)
        if got is None:
            toks = self.corpus.doc(doc_id).tokens
            got = {}
            for length in range(1, min(self.config.l_max, len(toks)) + 1):
                for start in range(len(toks) - length + 1):
                    key = tuple(toks[start : start + length])
                    if key not in got:
                        got[key] = start
            self._ngram_tables[doc_id] = got
        return got

    def brute_force_segment(self, doc_id: int) -> SegmentedDocument:
        """Oracle: same greedy contract over ALL other documents, implemented
        with n-gram position tables instead of the scanning kernel."""
        cfg = self.config
        ranked = self.neighbors(doc_id, len(self.corpus))
        tables = [(nid, self._ngram_table(nid)) for nid in ranked]
        tokens = self.corpus.doc(doc_id).tokens
        segments: list[Segment] = []
        cursor = 0
        total = len(tokens)
        while cursor < total:
            cap = min(cfg.l_max, total - cursor)
            hit = None
            for length in range(cap, 0, -1):
                key = tuple(tokens[cursor : cursor + length])
                for nid, table in tables:
                    start = table.get(key)
                    if start is not None:
                        hit = (length, nid, start)
                        break
                if hit is not None:
                    break
            if hit is not None and hit[0] >= cfg.l_min:
                length, nid, start = hit
                segments.append(Segment.phrase(nid, start, start + length - 1))
                cursor += length
            else:
                segments.append(Segment.token_seg(tokens[cursor]))
                cursor += 1
        return SegmentedDocument(doc_id=doc_id, segments=segments)


def neighbors(
    corpus: Corpus, doc_id: int, k: int, backend: EncoderBackend
) -> list[int]:
    return Segmenter(corpus, backend, SegmenterConfig()).neighbors(doc_id, k)


def segment_document(
    corpus: Corpus, doc_id: int, config: SegmenterConfig, backend: EncoderBackend
) -> SegmentedDocument:
    return Segmenter(corpus, backend, config).segment_document(doc_id)


def brute_force_segment(
    corpus: Corpus, doc_id: int, config: SegmenterConfig, backend: EncoderBackend
) -> SegmentedDocument:
    return Segmenter(corpus, backend, config).brute_force_segment(doc_id)


def segment_corpus(
    corpus: Corpus, config: SegmenterConfig, backend: EncoderBackend
) -> list[SegmentedDocument]:
    seg = Segmenter(corpus, backend, config)
    return [seg.segment_document(d.id) for d in corpus.documents]


def write_segments(path: str | Path, segmented: Iterable[SegmentedDocument]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sd in segmented:
            rec = {"doc": sd.doc_id, "segments": [s.to_dict() for s in sd.segments]}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_segments(path: str | Path) -> list[SegmentedDocument]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(
                SegmentedDocument(
                    doc_id=rec["doc"],
                    segments=[Segment.from_dict(s) for s in rec["segments"]],
                )
            )
    return out
