"""Logits-processor bridge into a host model's sampling loop.

The host calls the processor once per decoding step with the committed
token ids and the next-token scores, exactly the LogitsProcessor shape
used by common generation stacks. The adapter feeds newly committed
tokens to a decoding session and, while the session is inside a fact,
replaces forbidden entries with negative infinity; in normal mode the
scores pass through untouched. The adapter never inspects or selects
tokens, so the host's sampling policy is left alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from factrie.engine import ConstraintEngine, DecodingSession, Mode, SessionReport
from factrie.errors import EngineError, TokenizerMismatch
from factrie.store import IndexReader
from factrie.tokenizer import Tokenizer, load_tokenizer


@dataclass(frozen=True)
class AdapterConfig:
    trigger: str = "Fact:"
    preamble: str = ""
    max_new_tokens: int = 100_000


class AdapterHandle:
    """One engine binding: index reader, tokenizer, and session factory.

    Construction fails with TokenizerMismatch unless the tokenizer
    fingerprint equals the index's.
    """

    def __init__(self, index, tokenizer: Tokenizer, cfg: AdapterConfig = AdapterConfig()):
        if index.tokenizer_fingerprint != tokenizer.fingerprint:
            raise TokenizerMismatch(
                f"index fingerprint {index.tokenizer_fingerprint} != "
                f"tokenizer fingerprint {tokenizer.fingerprint}"
            )
        self.engine = ConstraintEngine(
            index, tokenizer, trigger=cfg.trigger, preamble=cfg.preamble
        )
        self.cfg = cfg
        self.vocab_size = tokenizer.vocab_size
        self.tokenizer_fingerprint = tokenizer.fingerprint

    def new_session(self) -> DecodingSession:
        return self.engine.create_session(self.cfg.max_new_tokens)

    @classmethod
    def open(
        cls,
        index_path: str | Path,
        tokenizer_path: Optional[str | Path] = None,
        cfg: AdapterConfig = AdapterConfig(),
    ) -> "AdapterHandle":
        index = IndexReader(index_path)
        tok_path = tokenizer_path or (str(index_path) + ".tokenizer.json")
        tokenizer = load_tokenizer(tok_path)
        return cls(index, tokenizer, cfg)


def _as_row(ids) -> list[int]:
    arr = np.asarray(ids)
    if arr.ndim == 2:
        if arr.shape[0] != 1:
            raise EngineError("single-sequence processor got a batch; use attach_beams")
        arr = arr[0]
    return [int(t) for t in arr.tolist()]


class MaskProcessor:
    """Single-sequence processor: ``processor(input_ids, scores) -> scores``.

    ``input_ids`` must extend the ids seen on the previous call (the host
    appends committed tokens); the delta is replayed into the session
    before masking.
    """

    def __init__(self, handle: AdapterHandle):
        self.handle = handle
        self.session = handle.new_session()
        self._seen: list[int] = []

    def _advance(self, ids: list[int]) -> None:
        if ids[: len(self._seen)] != self._seen:
            raise EngineError(
                "input_ids do not extend the previously seen sequence"
            )
        for tok in ids[len(self._seen) :]:
            self.handle.engine.step(self.session, tok)
        self._seen = ids

    def __call__(self, input_ids, scores: np.ndarray) -> np.ndarray:
        ids = _as_row(input_ids)
        self._advance(ids)
        scores_arr = np.asarray(scores)
        squeeze = scores_arr.ndim == 2
        row = scores_arr[0] if squeeze else scores_arr
        if row.shape[-1] != self.handle.vocab_size:
            raise EngineError(
                f"scores length {row.shape[-1]} != vocabulary size "
                f"{self.handle.vocab_size}"
            )
        if self.session.mode is Mode.CONSTRAINED:
            row = self.handle.engine.mask_logits(self.session, row)
        out = row[np.newaxis, :] if squeeze else row
        return out

    def report(self) -> SessionReport:
        return self.handle.engine.session_report(self.session)


def make_processor(
    index_path: str | Path,
    tokenizer_path: Optional[str | Path] = None,
    cfg: AdapterConfig = AdapterConfig(),
) -> MaskProcessor:
    """Open an index and return a ready-to-attach processor callable."""
    return MaskProcessor(AdapterHandle.open(index_path, tokenizer_path, cfg))
