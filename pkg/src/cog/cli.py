"""Command-line surface: ingest -> segment -> build-index -> train-toy ->
generate -> eval -> bench, plus a config-driven pipeline runner.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import statistics
import sys
import time
from pathlib import Path

from .corpus import Corpus, CorpusError, detokenize, ingest_corpus_file
from .decoder import DecodeError, GenerationConfig, generate, step_stats
from .encoder import EncoderError, ToyBackend, ToyParams
from .index import PhraseIndexError, SearchConfig, build_index, load_index, save_index
from .metrics import evaluate, tokens_from_text_file, tokens_from_trace_file
from .segmenter import SegmenterConfig, Segmenter, read_segments, write_segments
from .sidecar import SidecarBackend
from .training import TrainConfig, TrainingError, train_toy

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class PipelineError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; 2 is reserved for data errors here
        raise UsageError(message)


def _backend_for(args, vocab) -> ToyBackend | SidecarBackend:
    if getattr(args, "backend", "toy") == "sidecar":
        if not getattr(args, "sidecar_url", None):
            raise UsageError("--backend sidecar requires --sidecar-url")
        return SidecarBackend(args.sidecar_url, vocab)
    if getattr(args, "params", None):
        return ToyBackend(ToyParams.from_bytes(Path(args.params).read_bytes()))
    return ToyBackend(ToyParams.seeded(len(vocab), d=args.d, seed=args.seed))


def cmd_ingest(args) -> int:
    vocab = None
    if args.vocab_from:
        vocab = Corpus.load(args.vocab_from).vocabulary
    corpus = ingest_corpus_file(args.input, vocab=vocab)
    corpus.save(args.out)
    print(f"ingested {len(corpus)} documents, |V|={len(corpus.vocabulary)} -> {args.out}")
    return EXIT_OK


def cmd_segment(args) -> int:
    corpus = Corpus.load(args.corpus)
    backend = _backend_for(args, corpus.vocabulary)
    cfg = SegmenterConfig(l_min=args.lmin, l_max=args.lmax, k_neighbors=args.k)
    seg = Segmenter(corpus, backend, cfg)
    segmented = [seg.segment_document(d.id) for d in corpus.documents]
    write_segments(args.out, segmented)
    n_phrase = sum(1 for sd in segmented for s in sd.segments if s.kind == "phrase")
    n_tok = sum(1 for sd in segmented for s in sd.segments if s.kind == "token")
    print(f"segmented {len(segmented)} docs: {n_phrase} phrase / {n_tok} token segments -> {args.out}")
    return EXIT_OK


def cmd_build_index(args) -> int:
    corpus = Corpus.load(args.corpus)
    backend = _backend_for(args, corpus.vocabulary)
    index = build_index(corpus, backend, l_max=args.lmax)
    save_index(index, args.out)
    print(
        f"indexed {index.n_docs} docs, |V|={index.vocab_size}, d={index.d} -> {args.out}"
    )
    return EXIT_OK


def cmd_train_toy(args) -> int:
    corpus = Corpus.load(args.corpus)
    segmented = read_segments(args.segments)
    cfg = TrainConfig(
        steps=args.steps, lr=args.lr, d=args.d, seed=args.seed, l_max=args.lmax,
        log_every=args.log_every,
    )
    params, metrics = train_toy(corpus, segmented, cfg, metrics_path=args.metrics_out)
    Path(args.out).write_bytes(params.to_bytes())
    last = metrics[-1] if metrics else {}
    print(f"trained {args.steps} steps -> {args.out} (final: {json.dumps(last)})")
    return EXIT_OK


def _read_prefixes(path: str) -> list[str]:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    prefixes = [ln for ln in lines if ln]
    if not prefixes:
        raise CorpusError(f"no prefixes in {path}")
    return prefixes


def _generation_config(args) -> GenerationConfig:
    return GenerationConfig(
        mode=args.mode,
        p=args.p,
        max_new_tokens=args.max_new_tokens,
        prefix_tokens=args.prefix_tokens,
        seed=args.seed,
        search=SearchConfig(
            k_docs=args.k_docs,
            include_tokens=not args.no_tokens,
            tokens_only=args.tokens_only,
        ),
        coarse_refresh=args.coarse_refresh,
    )


def _load_index_with_backend(args):
    index = load_index(args.index)
    if getattr(args, "backend", "toy") == "sidecar":
        if not args.sidecar_url:
            raise UsageError("--backend sidecar requires --sidecar-url")
        index.backend = SidecarBackend(args.sidecar_url, index.vocabulary())
    if index.backend is None:
        raise PhraseIndexError(
            "index carries no embedded parameters; pass --backend sidecar --sidecar-url"
        )
    return index, index.backend


def cmd_generate(args) -> int:
    index, backend = _load_index_with_backend(args)
    config = _generation_config(args)
    prefixes = _read_prefixes(args.prefix_file)
    trace_out = Path(args.trace_out)
    for i, prefix in enumerate(prefixes):
        text, trace = generate(index, backend, prefix, config)
        if len(prefixes) == 1:
            path = trace_out
        else:
            path = trace_out.with_name(f"{trace_out.stem}.{i}{trace_out.suffix}")
        trace.save(path)
        print(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    samples = []
    for pattern, loader in ((args.traces, tokens_from_trace_file), (args.tokens, tokens_from_text_file)):
        if pattern:
            for path in sorted(globmod.glob(pattern)):
                samples.append(loader(path))
    if not samples:
        raise CorpusError("no samples matched --traces/--tokens")
    report = evaluate(samples)
    report.save(args.out)
    print(
        f"{report.n_samples} samples: rep2={report.rep_2:.2f} rep3={report.rep_3:.2f} "
        f"rep4={report.rep_4:.2f} diversity={report.diversity:.2f} -> {args.out}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    index, backend = _load_index_with_backend(args)
    prefixes = _read_prefixes(args.prefix_file)
    report = {}
    for mode_name, tokens_only in (("phrase", False), ("tokens_only", True)):
        walls, steps, tps = [], [], []
        for run in range(args.runs):
            prefix = prefixes[run % len(prefixes)]
            config = GenerationConfig(
                mode="greedy",
                max_new_tokens=args.max_new_tokens,
                prefix_tokens=args.prefix_tokens,
                seed=args.seed,
                search=SearchConfig(k_docs=args.k_docs, tokens_only=tokens_only),
            )
            t0 = time.perf_counter()
            _, trace = generate(index, backend, prefix, config)
            walls.append(time.perf_counter() - t0)
            stats = step_stats(trace)
            steps.append(stats["steps"])
            tps.append(stats["tokens"] / stats["steps"] if stats["steps"] else 0.0)
        report[mode_name] = {
            "wall_clock_median_s": statistics.median(walls),
            "steps_median": statistics.median(steps),
            "tokens_per_step_median": statistics.median(tps),
            "runs": args.runs,
        }
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2), encoding="utf-8")
    print(json.dumps(report, indent=2))
    return EXIT_OK


def run_pipeline(config_path: str) -> dict:
    """Execute the configured stages in order; artifacts land in the workdir.

    Re-running with the same config reproduces identical corpora, segments,
    parameters, indexes, and greedy generations.
    """
    cfg = json.loads(Path(config_path).read_text(encoding="utf-8"))
    workdir = Path(cfg.get("workdir", "runs/pipeline"))
    workdir.mkdir(parents=True, exist_ok=True)
    seed = int(cfg.get("seed", 0))
    d = int(cfg.get("d", 64))
    stages = cfg.get("stages", [])
    paths = {
        "corpus": workdir / "corpus.json",
        "index_corpus": workdir / "index_corpus.json",
        "segments": workdir / "segments.jsonl",
        "params": workdir / "params.bin",
        "index": workdir / "index.cog",
        "traces": workdir / "traces",
        "report": workdir / "report.json",
    }

    def _index_side_corpus() -> Corpus:
        # the indexed collection may differ from the training corpus
        # (domain swap / enlarged collection); it shares the frozen vocabulary
        if cfg.get("index_corpus"):
            return Corpus.load(paths["index_corpus"])
        return Corpus.load(paths["corpus"])

    produced: dict = {"workdir": str(workdir)}
    for stage in stages:
        t0 = time.perf_counter()
        try:
            if stage == "ingest":
                corpus = ingest_corpus_file(cfg["corpus"])
                corpus.save(paths["corpus"])
                if cfg.get("index_corpus"):
                    swap = ingest_corpus_file(
                        cfg["index_corpus"], vocab=corpus.vocabulary.freeze()
                    )
                    swap.save(paths["index_corpus"])
            elif stage == "segment":
                corpus = Corpus.load(paths["corpus"])
                scf = cfg.get("segment", {})
                backend = ToyBackend(ToyParams.seeded(len(corpus.vocabulary), d=d, seed=seed))
                seg = Segmenter(
                    corpus,
                    backend,
                    SegmenterConfig(
                        l_min=scf.get("lmin", 2),
                        l_max=scf.get("lmax", 8),
                        k_neighbors=scf.get("k", 16),
                    ),
                )
                write_segments(
                    paths["segments"], [seg.segment_document(x.id) for x in corpus.documents]
                )
            elif stage == "train-toy":
                corpus = Corpus.load(paths["corpus"])
                tcf = cfg.get("train", {})
                params, _ = train_toy(
                    corpus,
                    read_segments(paths["segments"]),
                    TrainConfig(
                        steps=tcf.get("steps", 300),
                        lr=tcf.get("lr", 1.0),
                        d=d,
                        seed=seed,
                        l_max=cfg.get("segment", {}).get("lmax", 8),
                    ),
                    metrics_path=workdir / "train_metrics.jsonl",
                )
                Path(paths["params"]).write_bytes(params.to_bytes())
            elif stage == "build-index":
                corpus = _index_side_corpus()
                if paths["params"].exists():
                    backend = ToyBackend(ToyParams.from_bytes(paths["params"].read_bytes()))
                else:
                    backend = ToyBackend(ToyParams.seeded(len(corpus.vocabulary), d=d, seed=seed))
                save_index(
                    build_index(corpus, backend, l_max=cfg.get("segment", {}).get("lmax", 8)),
                    paths["index"],
                )
            elif stage == "generate":
                corpus = _index_side_corpus()
                index = load_index(paths["index"])
                gcf = cfg.get("generate", {})
                paths["traces"].mkdir(exist_ok=True)
                n = min(gcf.get("n_prefixes", 10), len(corpus))
                config = GenerationConfig(
                    mode=gcf.get("mode", "greedy"),
                    p=gcf.get("p", 0.95),
                    max_new_tokens=gcf.get("max_new_tokens", 128),
                    prefix_tokens=gcf.get("prefix_tokens", 32),
                    seed=seed,
                    search=SearchConfig(k_docs=gcf.get("k_docs", 16)),
                )
                for i in range(n):
                    prefix = detokenize(
                        corpus.doc(i).tokens[: config.prefix_tokens], corpus.vocabulary
                    )
                    _, trace = generate(index, index.backend, prefix, config)
                    trace.save(paths["traces"] / f"{i:04d}.jsonl")
            elif stage == "eval":
                samples = [
                    tokens_from_trace_file(p) for p in sorted(paths["traces"].glob("*.jsonl"))
                ]
                evaluate(samples).save(paths["report"])
            else:
                raise UsageError(f"unknown pipeline stage {stage!r}")
        except Exception as exc:
            raise PipelineError(f"pipeline stage {stage!r} failed: {exc}") from exc
        produced[stage] = {"seconds": round(time.perf_counter() - t0, 3)}
    return produced


def cmd_run_pipeline(args) -> int:
    produced = run_pipeline(args.config)
    print(json.dumps(produced, indent=2))
    return EXIT_OK


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=["toy", "sidecar"], default="toy")
    p.add_argument("--sidecar-url", default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="cog", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="tokenize a JSONL document stream into a corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-from", default=None, help="reuse (frozen) vocabulary of another corpus")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("segment", help="split documents into phrase/token segments")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--lmin", type=int, default=2)
    p.add_argument("--lmax", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", default=None, help="encoder parameter dump to rank neighbors with")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("build-index", help="encode all documents into a phrase index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lmax", type=int, default=8)
    p.add_argument("--params", default=None, help="trained encoder parameter dump")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("train-toy", help="train the toy encoder on a segmented corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--segments", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--lmax", type=int, default=8)
    p.add_argument("--log-every", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics-out", default=None)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("generate", help="generate continuations for prefixes")
    p.add_argument("--index", required=True)
    p.add_argument("--prefix-file", required=True, help="one prefix per line")
    p.add_argument("--mode", choices=["greedy", "nucleus"], default="greedy")
    p.add_argument("--p", type=float, default=0.95)
    p.add_argument("--max-new-tokens", type=int, default=128)
    p.add_argument("--prefix-tokens", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-docs", type=int, default=1024)
    p.add_argument("--coarse-refresh", type=int, default=1)
    p.add_argument("--tokens-only", action="store_true")
    p.add_argument("--no-tokens", action="store_true", help="drop vocabulary candidates")
    p.add_argument("--trace-out", required=True)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="repetition/diversity report over traces")
    p.add_argument("--traces", default=None, help="glob of trace files")
    p.add_argument("--tokens", default=None, help="glob of plain-text token files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="compare phrase mode against tokens-only decoding")
    p.add_argument("--index", required=True)
    p.add_argument("--prefix-file", required=True)
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--max-new-tokens", type=int, default=128)
    p.add_argument("--prefix-tokens", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-docs", type=int, default=16)
    p.add_argument("--out", default=None)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("run-pipeline", help="run configured stages end to end")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        CorpusError,
        PhraseIndexError,
        EncoderError,
        DecodeError,
        TrainingError,
        PipelineError,
        FileNotFoundError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
