"""Corpus ingestion, deterministic tokenization, and the vocabulary table.

Corpus file format (input): line-delimited UTF-8 JSON records, one document
per line, each an object ``{"id": int, "text": string}``. Input ids must be
unique; documents are assigned dense ids 0..N-1 in stream order.

The tokenizer splits on Unicode whitespace and then splits every ASCII
punctuation character out as a standalone token ("a,b" -> ["a", ",", "b"]).
It is a pure function of the input text. Unseen surfaces are appended to a
mutable vocabulary; a frozen vocabulary maps them to the reserved UNK id 0,
which is what lets an engine trained on one corpus index a new domain.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

UNK_ID = 0
UNK_SURFACE = "<unk>"

_PUNCT = frozenset(string.punctuation)


class CorpusError(ValueError):
    """Malformed corpus input (bad record, duplicate id, unknown token)."""


class Vocabulary:
    """Bijection between token surfaces and dense integer ids.

    Id 0 is always the UNK surface. A frozen vocabulary maps unknown surfaces
    to UNK instead of growing.
    """

    def __init__(self, surfaces: Sequence[str] | None = None):
        if surfaces is None:
            surfaces = [UNK_SURFACE]
        if not surfaces or surfaces[0] != UNK_SURFACE:
            raise CorpusError("vocabulary must reserve id 0 for %r" % UNK_SURFACE)
        self._surfaces: list[str] = list(surfaces)
        self._ids: dict[str, int] = {s: i for i, s in enumerate(self._surfaces)}
        if len(self._ids) != len(self._surfaces):
            raise CorpusError("duplicate surfaces in vocabulary")
        self.frozen = False

    def __len__(self) -> int:
        return len(self._surfaces)

    def freeze(self) -> "Vocabulary":
        self.frozen = True
        return self

    def id_for(self, surface: str) -> int:
        got = self._ids.get(surface)
        if got is not None:
            return got
        if self.frozen:
            return UNK_ID
        new_id = len(self._surfaces)
        self._surfaces.append(surface)
        self._ids[surface] = new_id
        return new_id

    def surface(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._surfaces):
            raise CorpusError(f"unknown token id {token_id}")
        return self._surfaces[token_id]

    def surfaces(self) -> list[str]:
        return list(self._surfaces)


def _split_punct(chunk: str) -> Iterator[str]:
    buf: list[str] = []
    for ch in chunk:
        if ch in _PUNCT:
            if buf:
                yield "".join(buf)
                buf.clear()
            yield ch
        else:
            buf.append(ch)
    if buf:
        yield "".join(buf)


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Tokenize ``text`` into ids, growing ``vocab`` unless it is frozen."""
    ids: list[int] = []
    for chunk in text.split():
        for surface in _split_punct(chunk):
            ids.append(vocab.id_for(surface))
    return ids


def tokenize_surfaces(text: str) -> list[str]:
    """Tokenize to surfaces only, without touching any vocabulary."""
    out: list[str] = []
    for chunk in text.split():
        out.extend(_split_punct(chunk))
    return out


def detokenize(tokens: Sequence[int], vocab: Vocabulary) -> str:
    """Join token surfaces with single spaces (lossy inverse: punctuation is
    not re-attached, but re-tokenizing the result reproduces ``tokens``)."""
    return " ".join(vocab.surface(t) for t in tokens)


@dataclass
class Document:
    id: int
    text: str
    tokens: list[int]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Corpus:
    documents: list[Document] = field(default_factory=list)
    vocabulary: Vocabulary = field(default_factory=Vocabulary)

    def __len__(self) -> int:
        return len(self.documents)

    def doc(self, doc_id: int) -> Document:
        if not 0 <= doc_id < len(self.documents):
            raise CorpusError(f"no document with id {doc_id}")
        return self.documents[doc_id]

    def to_dict(self) -> dict:
        return {
            "vocabulary": self.vocabulary.surfaces(),
            "documents": [
                {"id": d.id, "text": d.text, "tokens": d.tokens} for d in self.documents
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Corpus":
        vocab = Vocabulary(data["vocabulary"])
        vocab.frozen = True
        docs = [
            Document(id=rec["id"], text=rec["text"], tokens=list(rec["tokens"]))
            for rec in data["documents"]
        ]
        return cls(documents=docs, vocabulary=vocab)

    def save(self, path: str | Path) -> None:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        Path(path).write_text(payload, encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Corpus":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def ingest_corpus(lines: Iterable[str], vocab: Vocabulary | None = None) -> Corpus:
    """Build a Corpus from an iterable of JSONL records.

    Ids are reassigned densely in stream order; duplicate input ids are
    rejected. Pass a frozen ``vocab`` to ingest under an existing vocabulary
    (unseen surfaces become UNK).
    """
    if vocab is None:
        vocab = Vocabulary()
    seen_ids: set[int] = set()
    docs: list[Document] = []
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
            raise CorpusError(f"line {lineno}: record must be an object with 'id' and 'text'")
        if not isinstance(rec["id"], int) or isinstance(rec["id"], bool):
            raise CorpusError(f"line {lineno}: 'id' must be an integer")
        if not isinstance(rec["text"], str):
            raise CorpusError(f"line {lineno}: 'text' must be a string")
        if rec["id"] in seen_ids:
            raise CorpusError(f"line {lineno}: duplicate id {rec['id']}")
        seen_ids.add(rec["id"])
        text = rec["text"]
        docs.append(Document(id=len(docs), text=text, tokens=tokenize(text, vocab)))
    return Corpus(documents=docs, vocabulary=vocab)


def ingest_corpus_file(path: str | Path, vocab: Vocabulary | None = None) -> Corpus:
    with open(path, "r", encoding="utf-8") as fh:
        return ingest_corpus(fh, vocab=vocab)
