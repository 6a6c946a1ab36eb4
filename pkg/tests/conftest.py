import json
from pathlib import Path

import numpy as np
import pytest

from cog.corpus import Corpus, Document, Vocabulary, ingest_corpus
from cog.encoder import ToyBackend, ToyParams

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def tiny_corpus() -> Corpus:
    lines = [
        json.dumps({"id": 0, "text": "the cat sat on the mat"}),
        json.dumps({"id": 1, "text": "the cat ran"}),
        json.dumps({"id": 2, "text": "on the mat he sat"}),
    ]
    return ingest_corpus(lines)


@pytest.fixture
def tiny_backend(tiny_corpus) -> ToyBackend:
    return ToyBackend(ToyParams.seeded(len(tiny_corpus.vocabulary), d=8, seed=1))


def make_random_corpus(
    rng: np.random.Generator,
    n_docs: int,
    max_tokens: int = 40,
    vocab_size: int = 12,
    min_tokens: int = 1,
) -> Corpus:
    """Random corpus built directly from token ids (surfaces w1..wk; id 0 is UNK
    and never drawn)."""
    vocab = Vocabulary(["<unk>"] + [f"w{i}" for i in range(1, vocab_size)])
    vocab.freeze()
    docs = []
    for i in range(n_docs):
        n = int(rng.integers(min_tokens, max_tokens + 1))
        ids = rng.integers(1, vocab_size, n).tolist()
        text = " ".join(vocab.surface(t) for t in ids)
        docs.append(Document(id=i, text=text, tokens=[int(t) for t in ids]))
    return Corpus(documents=docs, vocabulary=vocab)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR
