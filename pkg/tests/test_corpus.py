import json

import numpy as np
import pytest

from cog.corpus import (
    UNK_ID,
    Corpus,
    CorpusError,
    Vocabulary,
    detokenize,
    ingest_corpus,
    tokenize,
    tokenize_surfaces,
)


class TestTokenize:
    def test_whitespace_and_trailing_punct(self):
        assert tokenize_surfaces("The cat sat.") == ["The", "cat", "sat", "."]

    def test_empty(self):
        assert tokenize_surfaces("") == []

    def test_interior_punct_splits(self):
        # hand application of the punctuation rule
        assert tokenize_surfaces("a,b") == ["a", ",", "b"]

    def test_multiple_punct_runs(self):
        assert tokenize_surfaces("wait...") == ["wait", ".", ".", "."]
        assert tokenize_surfaces("(a)") == ["(", "a", ")"]

    def test_unicode_whitespace(self):
        assert tokenize_surfaces("a b\tc\nd") == ["a", "b", "c", "d"]

    def test_pure_function(self):
        for _ in range(3):
            assert tokenize_surfaces("x; y-z") == ["x", ";", "y", "-", "z"]

    def test_grows_mutable_vocab(self):
        vocab = Vocabulary()
        ids = tokenize("a b a", vocab)
        assert ids == [1, 2, 1]
        assert len(vocab) == 3  # UNK + a + b

    def test_frozen_vocab_maps_to_unk(self):
        vocab = Vocabulary()
        tokenize("a b", vocab)
        vocab.freeze()
        assert tokenize("a c b", vocab) == [1, UNK_ID, 2]


class TestDetokenize:
    def test_join(self):
        vocab = Vocabulary()
        ids = tokenize("a b", vocab)
        assert detokenize(ids, vocab) == "a b"

    def test_empty(self):
        assert detokenize([], Vocabulary()) == ""

    def test_punct_not_reattached(self):
        vocab = Vocabulary()
        ids = tokenize("a,b", vocab)
        assert detokenize(ids, vocab) == "a , b"

    def test_unknown_id_errors(self):
        with pytest.raises(CorpusError):
            detokenize([99], Vocabulary())

    def test_token_level_round_trip(self):
        # detokenize . tokenize is the identity on token sequences
        rng = np.random.default_rng(7)
        alphabet = ["ab", "c", ",", ".", "d-e", "fff", "(", ")"]
        for _ in range(50):
            text = " ".join(rng.choice(alphabet, size=rng.integers(0, 20)))
            vocab = Vocabulary()
            ids = tokenize(text, vocab)
            assert tokenize(detokenize(ids, vocab), vocab) == ids


class TestIngest:
    def test_empty_stream(self):
        corpus = ingest_corpus([])
        assert len(corpus) == 0
        assert len(corpus.vocabulary) == 1  # UNK only

    def test_two_records_counts(self):
        lines = [json.dumps({"id": 0, "text": "a b"}), json.dumps({"id": 1, "text": "b c"})]
        corpus = ingest_corpus(lines)
        assert len(corpus) == 2
        assert len(corpus.vocabulary) == 4  # UNK, a, b, c

    def test_duplicate_id_rejected(self):
        lines = [json.dumps({"id": 3, "text": "a"}), json.dumps({"id": 3, "text": "b"})]
        with pytest.raises(CorpusError, match="line 2"):
            ingest_corpus(lines)

    def test_dense_ids_in_stream_order(self):
        lines = [json.dumps({"id": 10, "text": "a"}), json.dumps({"id": 5, "text": "b"})]
        corpus = ingest_corpus(lines)
        assert [d.id for d in corpus.documents] == [0, 1]

    def test_malformed_json_names_line(self):
        with pytest.raises(CorpusError, match="line 2"):
            ingest_corpus(['{"id": 0, "text": "a"}', "{oops"])

    def test_missing_field_rejected(self):
        with pytest.raises(CorpusError, match="line 1"):
            ingest_corpus(['{"id": 0}'])

    def test_non_integer_id_rejected(self):
        with pytest.raises(CorpusError, match="integer"):
            ingest_corpus(['{"id": "x", "text": "a"}'])

    def test_idempotent(self):
        lines = [json.dumps({"id": 0, "text": "a b , c"})]
        assert ingest_corpus(lines).to_dict() == ingest_corpus(lines).to_dict()

    def test_tokens_match_tokenizer_output(self, tiny_corpus):
        for doc in tiny_corpus.documents:
            assert doc.tokens == tokenize(doc.text, tiny_corpus.vocabulary)

    def test_frozen_vocab_ingest(self):
        base = ingest_corpus([json.dumps({"id": 0, "text": "a b"})])
        base.vocabulary.freeze()
        other = ingest_corpus([json.dumps({"id": 0, "text": "a zzz"})], vocab=base.vocabulary)
        assert other.doc(0).tokens[1] == UNK_ID
        assert len(other.vocabulary) == 3


class TestCorpusPersistence:
    def test_save_load_round_trip(self, tiny_corpus, tmp_path):
        path = tmp_path / "c.json"
        tiny_corpus.save(path)
        loaded = Corpus.load(path)
        assert loaded.to_dict() == tiny_corpus.to_dict()
        assert loaded.vocabulary.frozen

    def test_doc_lookup_errors(self, tiny_corpus):
        with pytest.raises(CorpusError):
            tiny_corpus.doc(99)
