"""Constrained-generation engine: masks next-token scores so that, once
triggered, the model can only spell out facts that exist in the index.

The engine never picks tokens. It narrows the candidate set by writing
negative infinity over forbidden vocabulary entries and leaves every
allowed entry bit-identical, so the host's selection policy (greedy,
beam scoring, whatever) stays in charge. A session is a small state
machine: Normal mode watches the decoded text for the trigger string;
Constrained mode walks the fact tree one token at a time, and completing
a leaf consumes that fact for the session and switches back to Normal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .errors import (
    EngineError,
    ExhaustedBranch,
    IllegalToken,
    TokenizerMismatch,
)
from .tokenizer import Tokenizer
from .trie import ConsumedOverlay, consume_fact, next_tokens

NEG_INF = float("-inf")


class Mode(enum.Enum):
    NORMAL = "normal"
    CONSTRAINED = "constrained"


@dataclass
class FactEvent:
    """One completed constrained emission: the fact line and the positions
    (in generated-token coordinates) of its token span."""

    text: str
    start: int
    end: int


@dataclass
class DecodingSession:
    mode: Mode = Mode.NORMAL
    cursor: List[int] = field(default_factory=list)
    overlay: ConsumedOverlay = field(default_factory=ConsumedOverlay)
    text_tail: bytes = b""
    budget: int = 0
    pending_preamble: List[int] = field(default_factory=list)
    fact_start: int = 0
    tokens_generated: int = 0
    facts: List[FactEvent] = field(default_factory=list)
    to_constrained: int = 0
    to_normal: int = 0
    exhaustion_events: int = 0

    def clone(self) -> "DecodingSession":
        return DecodingSession(
            mode=self.mode,
            cursor=list(self.cursor),
            overlay=self.overlay.fork(),
            text_tail=self.text_tail,
            budget=self.budget,
            pending_preamble=list(self.pending_preamble),
            fact_start=self.fact_start,
            tokens_generated=self.tokens_generated,
            facts=list(self.facts),
            to_constrained=self.to_constrained,
            to_normal=self.to_normal,
            exhaustion_events=self.exhaustion_events,
        )


@dataclass
class SessionReport:
    facts: List[FactEvent]
    tokens_generated: int
    to_constrained: int
    to_normal: int
    exhaustion_events: int

    def to_dict(self) -> dict:
        return {
            "facts": [
                {"text": f.text, "start": f.start, "end": f.end} for f in self.facts
            ],
            "tokens_generated": self.tokens_generated,
            "to_constrained": self.to_constrained,
            "to_normal": self.to_normal,
            "exhaustion_events": self.exhaustion_events,
        }


@dataclass
class BeamState:
    """Per-beam session clones. Beams share the index and tokenizer but
    nothing mutable: overlays fork on creation, so a fact consumed on one
    beam stays available to its siblings."""

    sessions: List[DecodingSession]

    @property
    def beam_count(self) -> int:
        return len(self.sessions)

    def __getitem__(self, i: int) -> DecodingSession:
        return self.sessions[i]

    def reorder(self, new_to_old: List[int]) -> None:
        """Apply a host beam-reordering event: after the call, slot ``i``
        continues the hypothesis previously at ``new_to_old[i]``."""
        picked = [self.sessions[j] for j in new_to_old]
        # A source hypothesis can be kept in several slots; clone the extras.
        seen: set[int] = set()
        out: List[DecodingSession] = []
        for j, s in zip(new_to_old, picked):
            out.append(s.clone() if j in seen else s)
            seen.add(j)
        self.sessions = out


class ConstraintEngine:
    """Binds an index (in-memory tree or disk reader) and a tokenizer.

    The host drives it with ``mask_logits`` (before selecting a token,
    while constrained) and ``step`` (after every committed token, in any
    mode). Stateless across sessions; any number of sessions may share
    one engine.
    """

    def __init__(
        self,
        index,
        tokenizer: Tokenizer,
        trigger: str = "Fact:",
        preamble: str = "",
    ):
        if index.tokenizer_fingerprint != tokenizer.fingerprint:
            raise TokenizerMismatch(
                f"index fingerprint {index.tokenizer_fingerprint} != "
                f"tokenizer fingerprint {tokenizer.fingerprint}"
            )
        self.index = index
        self.tokenizer = tokenizer
        self.trigger = trigger
        self._trigger_bytes = trigger.encode("utf-8")
        self._preamble_ids = tokenizer.encode(preamble) if preamble else []
        self._tail_window = max(64, len(self._trigger_bytes) * 2)

    def create_session(self, max_new_tokens: int = 1000) -> DecodingSession:
        if max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        return DecodingSession(budget=max_new_tokens)

    # -- queries ---------------------------------------------------------------

    def allowed(self, session: DecodingSession) -> Dict[int, int]:
        """Allowed next tokens with remaining-leaf counts for a constrained
        session; raises ExhaustedBranch when nothing remains."""
        if session.mode is not Mode.CONSTRAINED:
            raise EngineError("allowed-token query outside constrained mode")
        if session.pending_preamble:
            root = self.index.node(())
            remaining = root.num_leaves - session.overlay.consumed(())
            return {session.pending_preamble[0]: remaining}
        out = next_tokens(self.index, tuple(session.cursor), session.overlay)
        if not out:
            raise ExhaustedBranch(
                f"no remaining facts under cursor of length {len(session.cursor)}"
            )
        return out

    def mask_logits(self, session: DecodingSession, logits: np.ndarray) -> np.ndarray:
        """Negative-infinity mask over forbidden tokens. Allowed entries are
        copied bit-for-bit; the input array is never touched."""
        if session.mode is not Mode.CONSTRAINED:
            raise EngineError("mask_logits called outside constrained mode")
        if logits.shape[-1] != self.tokenizer.vocab_size:
            raise EngineError(
                f"logits length {logits.shape[-1]} != vocabulary "
                f"size {self.tokenizer.vocab_size}"
            )
        allowed = self.allowed(session)
        out = np.full_like(logits, NEG_INF)
        idx = np.fromiter(allowed.keys(), dtype=np.int64, count=len(allowed))
        out[..., idx] = logits[..., idx]
        return out

    # -- transitions ----------------------------------------------------------

    def step(self, session: DecodingSession, token: int) -> None:
        """Commit one token chosen by the host and advance the state
        machine. In Normal mode this only tracks text for trigger
        detection; in Constrained mode it moves the tree cursor and, on
        completing a fact, consumes it and switches back to Normal."""
        if not 0 <= token < self.tokenizer.vocab_size:
            raise IllegalToken(
                f"token {token} outside vocabulary of {self.tokenizer.vocab_size}"
            )
        if session.mode is Mode.CONSTRAINED:
            self._step_constrained(session, token)
        else:
            self._step_normal(session, token)
        session.tokens_generated += 1
        if session.budget > 0:
            session.budget -= 1

    def _append_text(self, session: DecodingSession, token: int) -> None:
        session.text_tail = (session.text_tail + self.tokenizer.piece(token))[
            -self._tail_window :
        ]

    def _step_normal(self, session: DecodingSession, token: int) -> None:
        self._append_text(session, token)
        if not session.text_tail.endswith(self._trigger_bytes):
            return
        root = self.index.node(())
        if root.num_leaves - session.overlay.consumed(()) <= 0:
            # Every fact is spent for this session: stay in normal mode and
            # record the event instead of entering a dead branch.
            session.exhaustion_events += 1
            return
        session.mode = Mode.CONSTRAINED
        session.cursor = []
        session.pending_preamble = list(self._preamble_ids)
        session.to_constrained += 1

    def _step_constrained(self, session: DecodingSession, token: int) -> None:
        allowed = self.allowed(session)
        if token not in allowed:
            raise IllegalToken(
                f"token {token} not in the allowed set of {len(allowed)} entries"
            )
        if session.pending_preamble:
            session.pending_preamble.pop(0)
            self._append_text(session, token)
            return
        if not session.cursor:
            session.fact_start = session.tokens_generated
        session.cursor.append(token)
        self._append_text(session, token)
        view = self.index.node(tuple(session.cursor))
        if view.is_leaf:
            seq = tuple(session.cursor)
            consume_fact(self.index, session.overlay, seq)
            text = self.tokenizer.decode(seq)
            # Facts are indexed under one leading space; the fact line
            # itself starts after it.
            fact_text = text[1:] if text.startswith(" ") else text
            session.facts.append(
                FactEvent(
                    text=fact_text,
                    start=session.fact_start,
                    end=session.tokens_generated + 1,
                )
            )
            session.mode = Mode.NORMAL
            session.cursor = []
            session.to_normal += 1

    def fork_beams(self, session: DecodingSession, k: int) -> BeamState:
        """k independent clones; consumption on one never shows on another."""
        if k < 1:
            raise ValueError("beam count must be >= 1")
        return BeamState(sessions=[session.clone() for _ in range(k)])

    def session_report(self, session: DecodingSession) -> SessionReport:
        return SessionReport(
            facts=list(session.facts),
            tokens_generated=session.tokens_generated,
            to_constrained=session.to_constrained,
            to_normal=session.to_normal,
            exhaustion_events=session.exhaustion_events,
        )
