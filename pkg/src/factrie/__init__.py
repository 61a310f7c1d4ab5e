"""Knowledge-base-constrained decoding over a disk-backed tokenized fact trie."""

__version__ = "0.1.0"

from .engine import BeamState, ConstraintEngine, DecodingSession, SessionReport
from .store import IndexBuilder, IndexConfig, IndexReader, build_index
from .tokenizer import ByteTokenizer, VocabTokenizer, load_tokenizer, save_tokenizer
from .trie import ConsumedOverlay, FactTree, NodeView, consume_fact

__all__ = [
    "__version__",
    "BeamState",
    "ConstraintEngine",
    "DecodingSession",
    "SessionReport",
    "IndexBuilder",
    "IndexConfig",
    "IndexReader",
    "build_index",
    "ByteTokenizer",
    "VocabTokenizer",
    "load_tokenizer",
    "save_tokenizer",
    "ConsumedOverlay",
    "FactTree",
    "NodeView",
    "consume_fact",
]
