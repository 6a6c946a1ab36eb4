import json

import pytest

from cog.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, run_pipeline


@pytest.fixture
def workspace(tmp_path):
    raw = tmp_path / "raw.jsonl"
    texts = [
        "the river bends north past the old mill",
        "north past the old mill the road turns",
        "the road turns and the river bends north",
        "old songs carry far over quiet water",
        "quiet water hides the old mill wheel",
    ]
    raw.write_text("\n".join(json.dumps({"id": i, "text": t}) for i, t in enumerate(texts)))
    return tmp_path, raw


def _run_stagewise(tmp_path, raw):
    corpus = tmp_path / "corpus.json"
    segs = tmp_path / "segs.jsonl"
    params = tmp_path / "params.bin"
    index = tmp_path / "index.cog"
    assert main(["ingest", "--input", str(raw), "--out", str(corpus)]) == EXIT_OK
    assert main([
        "segment", "--corpus", str(corpus), "--k", "4", "--lmin", "2", "--lmax", "6",
        "--out", str(segs), "--d", "16", "--seed", "0",
    ]) == EXIT_OK
    assert main([
        "train-toy", "--corpus", str(corpus), "--segments", str(segs), "--steps", "20",
        "--lr", "0.5", "--seed", "0", "--d", "16", "--out", str(params),
    ]) == EXIT_OK
    assert main([
        "build-index", "--corpus", str(corpus), "--out", str(index),
        "--params", str(params), "--lmax", "6",
    ]) == EXIT_OK
    return corpus, segs, params, index


class TestStagewiseCli:
    def test_full_pipeline(self, workspace, capsys):
        tmp_path, raw = workspace
        corpus, segs, params, index = _run_stagewise(tmp_path, raw)
        prefixes = tmp_path / "prefixes.txt"
        prefixes.write_text("the river bends\n")
        trace = tmp_path / "trace.jsonl"
        assert main([
            "generate", "--index", str(index), "--prefix-file", str(prefixes),
            "--mode", "greedy", "--max-new-tokens", "12", "--seed", "1",
            "--k-docs", "5", "--trace-out", str(trace),
        ]) == EXIT_OK
        assert trace.exists()
        report = tmp_path / "report.json"
        assert main(["eval", "--traces", str(trace), "--out", str(report)]) == EXIT_OK
        data = json.loads(report.read_text())
        assert data["n_samples"] == 1

    def test_generate_deterministic(self, workspace):
        tmp_path, raw = workspace
        _, _, _, index = _run_stagewise(tmp_path, raw)
        prefixes = tmp_path / "p.txt"
        prefixes.write_text("quiet water\n")
        t1, t2 = tmp_path / "t1.jsonl", tmp_path / "t2.jsonl"
        for out in (t1, t2):
            assert main([
                "generate", "--index", str(index), "--prefix-file", str(prefixes),
                "--max-new-tokens", "10", "--seed", "7", "--trace-out", str(out),
            ]) == EXIT_OK
        assert t1.read_bytes() == t2.read_bytes()

    def test_bench_step_counts(self, workspace, capsys):
        tmp_path, raw = workspace
        _, _, _, index = _run_stagewise(tmp_path, raw)
        prefixes = tmp_path / "p.txt"
        prefixes.write_text("the road turns\n")
        out = tmp_path / "bench.json"
        assert main([
            "bench", "--index", str(index), "--prefix-file", str(prefixes),
            "--runs", "3", "--max-new-tokens", "8", "--k-docs", "5", "--out", str(out),
        ]) == EXIT_OK
        report = json.loads(out.read_text())
        assert report["tokens_only"]["steps_median"] == 8
        assert report["phrase"]["steps_median"] <= report["tokens_only"]["steps_median"]
        assert report["phrase"]["tokens_per_step_median"] >= 1.0

    def test_vocab_from_freezes_unknowns(self, workspace):
        tmp_path, raw = workspace
        base = tmp_path / "base.json"
        assert main(["ingest", "--input", str(raw), "--out", str(base)]) == EXIT_OK
        other_raw = tmp_path / "other.jsonl"
        other_raw.write_text(json.dumps({"id": 0, "text": "the zzzz mill"}) + "\n")
        other = tmp_path / "other.json"
        assert main([
            "ingest", "--input", str(other_raw), "--out", str(other), "--vocab-from", str(base),
        ]) == EXIT_OK
        from cog.corpus import Corpus

        loaded = Corpus.load(other)
        assert loaded.doc(0).tokens[1] == 0  # zzzz -> UNK


class TestExitCodes:
    def test_usage_error_is_1(self):
        assert main(["segment", "--corpus"]) == EXIT_USAGE
        assert main(["no-such-command"]) == EXIT_USAGE

    def test_missing_file_is_2(self, tmp_path):
        assert main(["ingest", "--input", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")]) == EXIT_DATA

    def test_malformed_corpus_is_2(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": 0}\n')
        assert main(["ingest", "--input", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA

    def test_corrupt_index_is_2(self, tmp_path):
        bad = tmp_path / "bad.cog"
        bad.write_bytes(b"NOPE" + b"\x00" * 64)
        prefixes = tmp_path / "p.txt"
        prefixes.write_text("a\n")
        assert main([
            "generate", "--index", str(bad), "--prefix-file", str(prefixes),
            "--trace-out", str(tmp_path / "t.jsonl"),
        ]) == EXIT_DATA


class TestPipeline:
    def test_empty_stages_is_noop(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"workdir": str(tmp_path / "run"), "stages": []}))
        produced = run_pipeline(str(config))
        assert set(produced) == {"workdir"}

    def test_pipeline_reproducible(self, workspace):
        tmp_path, raw = workspace
        results = []
        for name in ("r1", "r2"):
            config = tmp_path / f"{name}.json"
            config.write_text(
                json.dumps(
                    {
                        "workdir": str(tmp_path / name),
                        "corpus": str(raw),
                        "seed": 3,
                        "d": 16,
                        "stages": ["ingest", "segment", "train-toy", "build-index", "generate", "eval"],
                        "segment": {"k": 4, "lmin": 2, "lmax": 6},
                        "train": {"steps": 10, "lr": 0.5},
                        "generate": {"max_new_tokens": 10, "prefix_tokens": 4, "k_docs": 5, "n_prefixes": 2},
                    }
                )
            )
            assert main(["run-pipeline", "--config", str(config)]) == EXIT_OK
            results.append(tmp_path / name)
        for rel in ("index.cog", "params.bin", "traces/0000.jsonl", "report.json"):
            assert (results[0] / rel).read_bytes() == (results[1] / rel).read_bytes()

    def test_failing_stage_named(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(
            json.dumps({"workdir": str(tmp_path / "run"), "corpus": "missing.jsonl", "stages": ["ingest"]})
        )
        with pytest.raises(Exception, match="ingest"):
            run_pipeline(str(config))
