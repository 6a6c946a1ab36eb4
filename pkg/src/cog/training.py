"""Desk-scale training of the toy encoder.

Two losses, summed:

* phrase loss: for each segment k of a training document (skipping a
  document's first segment, whose preceding prefix is empty), a contrastive
  term -log( exp(q_k . p_k) / (sum over candidates exp(q_k . p)) ) where the
  candidate set is every span (length <= l_max) of the segment's source
  document plus every vocabulary token embedding. A segment copied from the
  token vocabulary uses its token embedding as the positive and the
  vocabulary alone as candidates. The batch value is the mean over scored
  segments.
* token loss: the standard next-token cross-entropy over the vocabulary at
  every position whose prefix is non-empty, mean over positions.

All arithmetic is float64. Gradients are analytic, reverse-mode through the
affine projections and the normalize-mix recurrence; ``finite_diff_check``
verifies them with central differences. ``train_toy`` is plain full-batch
gradient descent with global gradient-norm clipping at 1.0, deterministic for
a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .corpus import Corpus
from .encoder import ToyParams
from .segmenter import SegmentedDocument


class TrainingError(Exception):
    pass


@dataclass
class TrainingBatch:
    corpus: Corpus
    segmented: list[SegmentedDocument]
    l_max: int = 8


@dataclass
class LossReport:
    phrase_loss: float
    token_loss: float
    total: float
    n_phrase_terms: int
    n_token_terms: int
    accuracy: float = float("nan")
    grads: Optional["ParamGrads"] = None


class ParamGrads:
    """Gradient accumulator with the same array layout as ToyParams."""

    def __init__(self, params: ToyParams):
        self.emb = np.zeros_like(params.emb)
        self.w_start = np.zeros_like(params.w_start)
        self.b_start = np.zeros_like(params.b_start)
        self.w_end = np.zeros_like(params.w_end)
        self.b_end = np.zeros_like(params.b_end)
        self.token_table = np.zeros_like(params.token_table)

    def arrays(self) -> list[np.ndarray]:
        return [self.emb, self.w_start, self.b_start, self.w_end, self.b_end, self.token_table]

    def scale(self, factor: float) -> "ParamGrads":
        for a in self.arrays():
            a *= factor
        return self

    def add(self, other: "ParamGrads") -> "ParamGrads":
        for mine, theirs in zip(self.arrays(), other.arrays()):
            mine += theirs
        return self

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def norm(self) -> float:
        return float(np.sqrt(sum(float((a * a).sum()) for a in self.arrays())))


class _Caches:
    """Per-evaluation forward caches under the current parameters."""

    def __init__(self, corpus: Corpus, params: ToyParams):
        self.corpus = corpus
        self.params = params
        self._ctx: dict[int, np.ndarray] = {}
        self._reps: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def tokens(self, doc_id: int) -> np.ndarray:
        return np.asarray(self.corpus.doc(doc_id).tokens, dtype=np.int64)

    def ctx(self, doc_id: int) -> np.ndarray:
        got = self._ctx.get(doc_id)
        if got is None:
            rows = self.params.emb[self.tokens(doc_id)]
            got = kernels.context_series(np.ascontiguousarray(rows), self.params.alpha)
            self._ctx[doc_id] = got
        return got

    def reps(self, doc_id: int) -> tuple[np.ndarray, np.ndarray]:
        got = self._reps.get(doc_id)
        if got is None:
            c = self.ctx(doc_id)
            got = (
                c @ self.params.w_start + self.params.b_start,
                c @ self.params.w_end + self.params.b_end,
            )
            self._reps[doc_id] = got
        return got


def _context_backward(
    tokens: np.ndarray, ctx: np.ndarray, d_ctx: np.ndarray, params: ToyParams, d_emb: np.ndarray
) -> None:
    """Reverse the normalize-mix recurrence, accumulating into d_emb."""
    alpha = params.alpha
    carry = np.zeros(params.d_t)
    for t in range(len(tokens) - 1, -1, -1):
        dc = d_ctx[t] + carry
        c_prev = ctx[t - 1] if t > 0 else np.zeros(params.d_t)
        u = alpha * params.emb[tokens[t]] + (1.0 - alpha) * c_prev
        n = np.sqrt(u @ u)
        if n > 0.0:
            c = ctx[t]
            du = (dc - c * (c @ dc)) / n
        else:
            du = dc
        d_emb[tokens[t]] += alpha * du
        carry = (1.0 - alpha) * du


def _phrase_pass(
    batch: TrainingBatch,
    params: ToyParams,
    caches: _Caches,
    want_grads: bool,
    include_token_negatives: bool,
):
    half = params.d // 2
    grads = ParamGrads(params) if want_grads else None
    d_ctx: dict[int, np.ndarray] = {}
    d_start: dict[int, np.ndarray] = {}
    d_end: dict[int, np.ndarray] = {}

    def ctx_grad(doc_id: int) -> np.ndarray:
        got = d_ctx.get(doc_id)
        if got is None:
            got = np.zeros_like(caches.ctx(doc_id))
            d_ctx[doc_id] = got
        return got

    loss_sum = 0.0
    n_terms = 0
    n_correct = 0
    for segdoc in batch.segmented:
        train_ctx = caches.ctx(segdoc.doc_id)
        offset = 0
        for seg in segdoc.segments:
            seg_len = seg.length
            if offset == 0:
                offset += seg_len
                continue  # no prefix representation before the first segment
            q = train_ctx[offset - 1]
            qh, qt = q[:half], q[half:]
            if seg.kind == "phrase":
                if seg.source_doc == segdoc.doc_id:
                    raise TrainingError(
                        f"segment of doc {segdoc.doc_id} sources itself"
                    )
                ds, de = caches.reps(seg.source_doc)
                a = ds @ qh
                b = de @ qt
                z_pos = a[seg.s] + b[seg.e]
                shift = kernels.span_max(a, b, batch.l_max)
                z_tok = None
                if include_token_negatives:
                    z_tok = params.token_table @ q
                    shift = max(shift, float(z_tok.max()))
                denom = kernels.span_sumexp(a, b, batch.l_max, shift)
                if z_tok is not None:
                    denom += float(np.exp(z_tok - shift).sum())
                loss_sum += float(np.log(denom) + shift - z_pos)
                if z_pos >= shift:
                    n_correct += 1
                if want_grads:
                    row, col = kernels.span_weight_sums(a, b, batch.l_max, shift, denom)
                    row[seg.s] -= 1.0
                    col[seg.e] -= 1.0
                    dq = np.concatenate([ds.T @ row, de.T @ col])
                    sg = d_start.get(seg.source_doc)
                    if sg is None:
                        sg = np.zeros_like(ds)
                        eg = np.zeros_like(de)
                        d_start[seg.source_doc] = sg
                        d_end[seg.source_doc] = eg
                    else:
                        eg = d_end[seg.source_doc]
                    sg += np.outer(row, qh)
                    eg += np.outer(col, qt)
                    if z_tok is not None:
                        g_tok = np.exp(z_tok - shift) / denom
                        grads.token_table += np.outer(g_tok, q)
                        dq += params.token_table.T @ g_tok
                    ctx_grad(segdoc.doc_id)[offset - 1] += dq
            else:
                if not include_token_negatives:
                    raise TrainingError(
                        "token segments need the vocabulary in the candidate set"
                    )
                z_tok = params.token_table @ q
                shift = float(z_tok.max())
                denom = float(np.exp(z_tok - shift).sum())
                z_pos = float(z_tok[seg.token])
                loss_sum += float(np.log(denom) + shift - z_pos)
                if z_pos >= shift:
                    n_correct += 1
                if want_grads:
                    g_tok = np.exp(z_tok - shift) / denom
                    g_tok[seg.token] -= 1.0
                    grads.token_table += np.outer(g_tok, q)
                    ctx_grad(segdoc.doc_id)[offset - 1] += params.token_table.T @ g_tok
            offset += seg_len
            n_terms += 1

    if want_grads:
        for doc_id, sg in d_start.items():
            eg = d_end[doc_id]
            c = caches.ctx(doc_id)
            grads.w_start += c.T @ sg
            grads.b_start += sg.sum(axis=0)
            grads.w_end += c.T @ eg
            grads.b_end += eg.sum(axis=0)
            ctx_grad(doc_id)[:] += sg @ params.w_start.T + eg @ params.w_end.T
        for doc_id, dc in d_ctx.items():
            _context_backward(caches.tokens(doc_id), caches.ctx(doc_id), dc, params, grads.emb)
    return loss_sum, n_terms, n_correct, grads


def _token_pass(batch: TrainingBatch, params: ToyParams, caches: _Caches, want_grads: bool):
    grads = ParamGrads(params) if want_grads else None
    loss_sum = 0.0
    n_terms = 0
    for segdoc in batch.segmented:
        tokens = caches.tokens(segdoc.doc_id)
        if len(tokens) < 2:
            continue
        ctx = caches.ctx(segdoc.doc_id)
        q_rows = ctx[:-1]
        targets = tokens[1:]
        logits = q_rows @ params.token_table.T
        shift = logits.max(axis=1)
        expz = np.exp(logits - shift[:, None])
        sums = expz.sum(axis=1)
        rows = np.arange(len(targets))
        loss_sum += float((np.log(sums) + shift - logits[rows, targets]).sum())
        n_terms += len(targets)
        if want_grads:
            g = expz / sums[:, None]
            g[rows, targets] -= 1.0
            grads.token_table += g.T @ q_rows
            d_ctx = np.zeros_like(ctx)
            d_ctx[:-1] = g @ params.token_table
            _context_backward(tokens, ctx, d_ctx, params, grads.emb)
    return loss_sum, n_terms, grads


def phrase_loss(
    batch: TrainingBatch,
    params: ToyParams,
    want_grads: bool = True,
    include_token_negatives: bool = True,
) -> tuple[float, Optional[ParamGrads]]:
    caches = _Caches(batch.corpus, params)
    loss_sum, n, _, grads = _phrase_pass(
        batch, params, caches, want_grads, include_token_negatives
    )
    if n == 0:
        return 0.0, grads
    if want_grads:
        grads.scale(1.0 / n)
    return loss_sum / n, grads


def token_loss(
    batch: TrainingBatch, params: ToyParams, want_grads: bool = True
) -> tuple[float, Optional[ParamGrads]]:
    caches = _Caches(batch.corpus, params)
    loss_sum, n, grads = _token_pass(batch, params, caches, want_grads)
    if n == 0:
        return 0.0, grads
    if want_grads:
        grads.scale(1.0 / n)
    return loss_sum / n, grads


def total_loss(
    batch: TrainingBatch,
    params: ToyParams,
    want_grads: bool = True,
    include_token_negatives: bool = True,
) -> LossReport:
    caches = _Caches(batch.corpus, params)
    p_sum, p_n, p_correct, p_grads = _phrase_pass(
        batch, params, caches, want_grads, include_token_negatives
    )
    t_sum, t_n, t_grads = _token_pass(batch, params, caches, want_grads)
    l_p = p_sum / p_n if p_n else 0.0
    l_t = t_sum / t_n if t_n else 0.0
    grads = None
    if want_grads:
        grads = p_grads.scale(1.0 / p_n if p_n else 0.0)
        grads.add(t_grads.scale(1.0 / t_n if t_n else 0.0))
    return LossReport(
        phrase_loss=l_p,
        token_loss=l_t,
        total=l_p + l_t,
        n_phrase_terms=p_n,
        n_token_terms=t_n,
        accuracy=(p_correct / p_n) if p_n else float("nan"),
        grads=grads,
    )


def central_diff_max_rel_err(value_fn, analytic: np.ndarray, theta: np.ndarray, epsilon: float) -> float:
    """Central differences of ``value_fn`` at ``theta`` against an analytic
    gradient; max relative error with denominator max(|a|, |n|, 1e-12)."""
    numeric = np.zeros_like(analytic)
    for i in range(theta.size):
        bump = np.zeros_like(theta)
        bump[i] = epsilon
        numeric[i] = (value_fn(theta + bump) - value_fn(theta - bump)) / (2.0 * epsilon)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric) / denom))


def finite_diff_check(batch: TrainingBatch, params: ToyParams, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients
    of the total loss over every parameter."""
    report = total_loss(batch, params, want_grads=True)

    def value_fn(theta: np.ndarray) -> float:
        return total_loss(batch, params.from_vector(theta), want_grads=False).total

    return central_diff_max_rel_err(
        value_fn, report.grads.to_vector(), params.to_vector(), epsilon
    )


@dataclass
class TrainConfig:
    steps: int = 500
    lr: float = 0.5
    d: int = 64
    seed: int = 0
    clip_norm: float = 1.0
    l_max: int = 8
    log_every: int = 10


def train_toy(
    corpus: Corpus,
    segmented: list[SegmentedDocument],
    config: TrainConfig,
    params: Optional[ToyParams] = None,
    metrics_path: Optional[str | Path] = None,
) -> tuple[ToyParams, list[dict]]:
    """Full-batch gradient descent; aborts on non-finite loss, returning the
    last finite-loss parameters."""
    if params is None:
        params = ToyParams.seeded(len(corpus.vocabulary), d=config.d, seed=config.seed)
    batch = TrainingBatch(corpus=corpus, segmented=segmented, l_max=config.l_max)
    metrics: list[dict] = []
    last_good = params
    for step in range(config.steps):
        report = total_loss(batch, params, want_grads=True)
        if not np.isfinite(report.total):
            params = last_good
            break
        last_good = params
        if step % config.log_every == 0 or step == config.steps - 1:
            metrics.append(
                {
                    "step": step,
                    "L": float(report.total),
                    "L_p": float(report.phrase_loss),
                    "L_t": float(report.token_loss),
                    "acc": float(report.accuracy),
                }
            )
        gnorm = report.grads.norm()
        if gnorm > config.clip_norm:
            report.grads.scale(config.clip_norm / gnorm)
        vec = params.to_vector() - config.lr * report.grads.to_vector()
        params = params.from_vector(vec)
    if metrics_path is not None:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            for row in metrics:
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    return params, metrics


def next_phrase_accuracy(
    corpus: Corpus, segmented: list[SegmentedDocument], params: ToyParams, l_max: int = 8
) -> float:
    """Top-1 accuracy of the positive over its own candidate set."""
    batch = TrainingBatch(corpus=corpus, segmented=segmented, l_max=l_max)
    return total_loss(batch, params, want_grads=False).accuracy
