"""Copy-generation engine: text generation by retrieving variable-length
phrases from an indexed document collection, with a token-vocabulary
fallback."""

from .corpus import Corpus, Document, Vocabulary, detokenize, ingest_corpus, tokenize
from .decoder import GenerationConfig, GenerationTrace, generate, step_stats
from .encoder import DocumentReps, PrefixState, ToyBackend, ToyParams, phrase_repr
from .index import PhraseIndex, SearchConfig, build_index, load_index, save_index
from .metrics import EvalReport, diversity, evaluate, rep_n
from .segmenter import Segment, SegmentedDocument, Segmenter, SegmenterConfig
from .training import TrainConfig, TrainingBatch, finite_diff_check, total_loss, train_toy

__all__ = [
    "Corpus",
    "Document",
    "DocumentReps",
    "EvalReport",
    "GenerationConfig",
    "GenerationTrace",
    "PhraseIndex",
    "PrefixState",
    "SearchConfig",
    "Segment",
    "SegmentedDocument",
    "Segmenter",
    "SegmenterConfig",
    "ToyBackend",
    "ToyParams",
    "TrainConfig",
    "TrainingBatch",
    "Vocabulary",
    "build_index",
    "detokenize",
    "diversity",
    "evaluate",
    "finite_diff_check",
    "generate",
    "ingest_corpus",
    "load_index",
    "phrase_repr",
    "rep_n",
    "save_index",
    "step_stats",
    "tokenize",
    "total_loss",
    "train_toy",
]

__version__ = "0.1.0"
