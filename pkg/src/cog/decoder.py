"""Generation loop: repeated candidate retrieval and selection.

Each step encodes the prefix incrementally, retrieves the top-k documents,
collects and scores their spans plus the token vocabulary, picks a candidate
(greedy or nucleus), and appends its tokens to the prefix one by one. The loop
stops when max_new_tokens have been emitted; a phrase crossing the boundary is
truncated so the continuation has exactly that length. Every step is recorded
with provenance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import detokenize, tokenize
from .encoder import EncoderBackend
from .index import (
    Candidate,
    CandidateSet,
    PhraseIndexError,
    PhraseIndex,
    SearchConfig,
    collect_candidates,
    retrieve_documents,
    score_candidates,
)
from .segmenter import Segment


class DecodeError(Exception):
    pass


@dataclass
class GenerationConfig:
    mode: str = "greedy"  # "greedy" | "nucleus"
    p: float = 0.95
    max_new_tokens: int = 128
    prefix_tokens: int = 32
    seed: int = 0
    search: SearchConfig = field(default_factory=SearchConfig)
    coarse_refresh: int = 1  # re-run document retrieval every n steps

    def __post_init__(self):
        if self.mode not in ("greedy", "nucleus"):
            raise ValueError(f"unknown decoding mode {self.mode!r}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("nucleus mass p must be in (0, 1]")
        if self.max_new_tokens < 0:
            raise ValueError("max_new_tokens must be >= 0")
        if self.coarse_refresh < 1:
            raise ValueError("coarse_refresh must be >= 1")


@dataclass
class TraceStep:
    ref: Segment
    score: float
    prob: float
    emitted: list[int]
    surface: str

    def to_dict(self) -> dict:
        if self.ref.kind == "phrase":
            return {
                "kind": "phrase",
                "src": self.ref.source_doc,
                "s": self.ref.s,
                "e": self.ref.e,
                "token": None,
                "score": self.score,
                "prob": self.prob,
                "surface": self.surface,
            }
        return {
            "kind": "token",
            "src": None,
            "s": None,
            "e": None,
            "token": self.ref.token,
            "score": self.score,
            "prob": self.prob,
            "surface": self.surface,
        }


@dataclass
class GenerationTrace:
    steps: list[TraceStep] = field(default_factory=list)
    seed: int = 0

    @property
    def step_count(self) -> int:
        return len(self.steps)

    @property
    def token_count(self) -> int:
        return sum(len(s.emitted) for s in self.steps)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for step in self.steps:
                fh.write(json.dumps(step.to_dict(), separators=(",", ":")) + "\n")


def next_distribution(scores: np.ndarray) -> np.ndarray:
    """Softmax (temperature 1) over fitness scores, max-subtracted."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise DecodeError("cannot form a distribution over zero candidates")
    if not np.all(np.isfinite(scores)):
        raise DecodeError("candidate scores must be finite")
    z = np.exp(scores - scores.max())
    return z / z.sum()


def greedy_index(scores: np.ndarray) -> int:
    """Position of the highest score; ties resolve to the earliest candidate
    in canonical order (tokens by id, then phrases by (doc, s, e))."""
    scores = np.asarray(scores)
    if scores.size == 0:
        raise DecodeError("cannot select from zero candidates")
    return int(np.argmax(scores))


def greedy_select(candidates: CandidateSet) -> Candidate:
    if candidates.scores is None:
        raise DecodeError("candidates have not been scored")
    return candidates[greedy_index(candidates.scores)]


def nucleus_sample(probs: np.ndarray, p: float, rng: np.random.Generator) -> int:
    """Sample from the smallest top-probability set with cumulative mass >= p,
    renormalized. Returns the index into the original distribution."""
    probs = np.asarray(probs, dtype=np.float64)
    order = np.argsort(-probs, kind="stable")
    csum = np.cumsum(probs[order])
    cutoff = int(np.searchsorted(csum, p, side="left")) + 1
    nucleus = order[:cutoff]
    weights = probs[nucleus]
    weights = weights / weights.sum()
    r = rng.random()
    pick = int(np.searchsorted(np.cumsum(weights), r, side="right"))
    if pick >= len(nucleus):
        pick = len(nucleus) - 1
    return int(nucleus[pick])


def generate(
    index: PhraseIndex,
    backend: EncoderBackend,
    prefix_text: str,
    config: GenerationConfig,
) -> tuple[str, GenerationTrace]:
    """Generate a continuation of exactly max_new_tokens tokens (when > 0)."""
    if backend.fingerprint != index.fingerprint:
        raise PhraseIndexError(
            "encoder fingerprint mismatch between backend and index: "
            f"{backend.fingerprint[:12]} vs {index.fingerprint[:12]}"
        )
    vocab = index.vocabulary()
    prefix_ids = tokenize(prefix_text, vocab)
    if not prefix_ids:
        raise DecodeError("prefix text tokenizes to zero tokens")
    if config.prefix_tokens:
        prefix_ids = prefix_ids[: config.prefix_tokens]
    state = backend.encode_prefix_init(prefix_ids)
    rng = np.random.default_rng(config.seed)
    trace = GenerationTrace(seed=config.seed)
    emitted_all: list[int] = []
    doc_ids: Optional[list[int]] = None
    step_i = 0
    while len(emitted_all) < config.max_new_tokens:
        if not config.search.tokens_only and (
            doc_ids is None or step_i % config.coarse_refresh == 0
        ):
            doc_ids = retrieve_documents(index, state, config.search.k_docs)
        cands = collect_candidates(index, doc_ids or [], config.search)
        if len(cands) == 0:
            raise DecodeError("empty candidate set (no documents and tokens disabled)")
        score_candidates(state, cands)
        probs = next_distribution(cands.scores)
        if config.mode == "greedy":
            pos = greedy_index(cands.scores)
        else:
            pos = nucleus_sample(probs, config.p, rng)
        ref = cands.ref(pos)
        if ref.kind == "phrase":
            chosen = [int(t) for t in index.doc_tokens[ref.source_doc][ref.s : ref.e + 1]]
        else:
            chosen = [ref.token]
        emit = chosen[: config.max_new_tokens - len(emitted_all)]
        for tok in emit:
            state = backend.encode_prefix_append(state, tok)
        trace.steps.append(
            TraceStep(
                ref=ref,
                score=float(cands.scores[pos]),
                prob=float(probs[pos]),
                emitted=emit,
                surface=detokenize(emit, vocab),
            )
        )
        emitted_all.extend(emit)
        step_i += 1
    return detokenize(emitted_all, vocab), trace


def step_stats(trace: GenerationTrace) -> dict:
    """Histogram of emitted segment lengths plus means; tokens count as 1."""
    lengths = [len(s.emitted) for s in trace.steps]
    hist: dict[int, int] = {}
    for n in lengths:
        hist[n] = hist.get(n, 0) + 1
    total = sum(lengths)
    return {
        "histogram": dict(sorted(hist.items())),
        "mean_length": (total / len(lengths)) if lengths else 0.0,
        "steps": len(lengths),
        "tokens": total,
    }
