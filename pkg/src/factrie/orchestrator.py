"""End-to-end question answering on top of the constraint engine.

The orchestrator renders the instruction prompt (system text plus two
worked examples), runs beam-search decoding with the trigger-driven mode
switch, and captures a transcript: generated text, every fact emitted
under constraint, and how the run terminated. A deterministic
:class:`ScriptedModel` stands in for a real language model so the whole
loop is testable at desk scale.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .engine import ConstraintEngine, DecodingSession, FactEvent, Mode
from .errors import InputError, TokenizerMismatch
from .tokenizer import Tokenizer

DEFAULT_TRIGGER = "Fact:"

DEFAULT_SYSTEM_PROMPT = """\
You are a question-answering assistant that only trusts the knowledge base.

To answer a question:
- Work out, step by step, what you need to look up.
- Decide what form the answer takes: yes/no, a single entity, or a list of
  entities. For list answers, gather every member before concluding.
- Retrieve evidence with the "Fact:" command; each retrieved fact is a proof
  you may rely on. Keep explaining your reasoning between retrievals.
- Descriptions and short descriptions are often useful lookups.
- Finish with a line starting "Answer:" followed by the concise answer.
- The answer must rest on the proofs you retrieved with "Fact:".

If no retrieved proof supports an answer, reply exactly: I don't know.
If the question asks whether an event happened and no proof of it exists,
treat the event as not having happened.
If you are taking too long (for example, ten facts retrieved without
getting closer), stop and answer from the proofs you already have.
Follow these instructions exactly.
"""

DEFAULT_FEW_SHOT = (
    """\
Question: Which currency is used in Slovakia?
I need the currency whose country includes Slovakia.
Fact: <Euro> <country> <Slovakia> .
The Euro is used in Slovakia.
Answer: Euro""",
    """\
Question: Who directed Trainspotting?
I look up the director of Trainspotting.
Fact: <Trainspotting> <director> <Danny Boyle> .
The proof names Danny Boyle.
Answer: Danny Boyle""",
)

RELATION_INDEPENDENCE_NOTE = (
    "Treat every relation independently: do not assume one relation implies "
    "another."
)

IDK_LITERAL = "I don't know."
ANSWER_PREFIX = "Answer:"


@dataclass(frozen=True)
class PromptConfig:
    """Decoding-run configuration; defaults follow the evaluation setup:
    two worked examples, three beams, sampling off, 1000 new tokens."""

    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    few_shot: Tuple[str, ...] = DEFAULT_FEW_SHOT
    trigger: str = DEFAULT_TRIGGER
    max_new_tokens: int = 1000
    beams: int = 3
    sampling: bool = False
    relation_independence: bool = False

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.beams < 1:
            raise ValueError("beams must be >= 1")
        if self.sampling:
            raise ValueError("sampling is not supported; decoding is deterministic")

    def render(self, question: str) -> str:
        parts = [self.system_prompt]
        if self.relation_independence:
            parts.append(RELATION_INDEPENDENCE_NOTE)
        parts.extend(self.few_shot)
        parts.append(f"Question: {question}\n")
        return "\n\n".join(parts)


class Terminal(enum.Enum):
    ANSWERED = "answered"
    IDONTKNOW = "idontknow"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class Transcript:
    question: str
    text: str
    fact_events: List[FactEvent]
    terminal: Terminal
    tokens_generated: int
    exhaustion_events: int = 0
    question_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "id": self.question_id,
            "question": self.question,
            "text": self.text,
            "fact_events": [
                {"text": f.text, "start": f.start, "end": f.end}
                for f in self.fact_events
            ],
            "terminal": self.terminal.value,
            "tokens_generated": self.tokens_generated,
            "exhaustion_events": self.exhaustion_events,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transcript":
        return cls(
            question=d["question"],
            text=d["text"],
            fact_events=[
                FactEvent(e["text"], e["start"], e["end"]) for e in d["fact_events"]
            ],
            terminal=Terminal(d["terminal"]),
            tokens_generated=d["tokens_generated"],
            exhaustion_events=d.get("exhaustion_events", 0),
            question_id=d.get("id"),
        )


# ---------------------------------------------------------------------------
# scripted model


@dataclass(frozen=True)
class ScriptRule:
    """When the decoded context ends (somewhere) with ``when`` and ``then``
    has only partially appeared after it, the model pushes toward the rest
    of ``then``. ``options`` lets one rule rank several continuations
    (scores strictly decreasing in list order); ``stop`` prefers EOS after
    the continuation completes."""

    when: str
    then: str = ""
    stop: bool = False
    options: Tuple[str, ...] = ()

    def continuations(self) -> Tuple[str, ...]:
        return self.options if self.options else (self.then,)


class ScriptedModel:
    """Deterministic stand-in for an autoregressive model.

    ``logits(context)`` is a pure function of the decoded context string:
    the rule making the most progress through the context sets the
    preferred next tokens (strictly decreasing scores), everything else
    sits at a flat floor. Matching on decoded text keeps scripts
    tokenizer-portable.
    """

    HIGH = 12.0
    STEP = 0.5
    FLOOR = 0.0

    def __init__(self, tokenizer: Tokenizer, rules: Sequence[ScriptRule]):
        self.tokenizer = tokenizer
        self.rules = list(rules)

    @property
    def fingerprint(self) -> str:
        return self.tokenizer.fingerprint

    @property
    def vocab_size(self) -> int:
        return self.tokenizer.vocab_size

    def _candidates(self, context: str):
        """(progress, rule_idx, option_idx, remaining_text, stop) for every
        rule option active in this context."""
        out = []
        for ridx, rule in enumerate(self.rules):
            p = context.rfind(rule.when)
            if p < 0:
                continue
            anchor = p + len(rule.when)
            tail = context[anchor:]
            for oidx, cont in enumerate(rule.continuations()):
                if cont.startswith(tail):
                    remaining = cont[len(tail) :]
                    if not remaining and not rule.stop:
                        continue  # finished and nothing more to prefer
                    out.append((anchor + len(tail), ridx, oidx, remaining, rule.stop))
        return out

    def logits(self, context: str) -> np.ndarray:
        scores = np.full(self.tokenizer.vocab_size, self.FLOOR, dtype=np.float64)
        cands = self._candidates(context)
        if not cands:
            return scores
        best_progress = max(c[0] for c in cands)
        ranked = sorted(
            (c for c in cands if c[0] == best_progress), key=lambda c: (c[1], c[2])
        )
        value = self.HIGH
        for _, _, _, remaining, stop in ranked:
            if remaining:
                tok = self.tokenizer.encode(remaining)[0]
            elif stop:
                tok = self.tokenizer.eos_id
            else:
                continue
            if scores[tok] == self.FLOOR:
                scores[tok] = value
                value -= self.STEP
        return scores

    def to_dict(self) -> dict:
        return {
            "rules": [
                {
                    "when": r.when,
                    "then": r.then,
                    "stop": r.stop,
                    "options": list(r.options),
                }
                for r in self.rules
            ]
        }

    @classmethod
    def from_dict(cls, tokenizer: Tokenizer, d: dict) -> "ScriptedModel":
        rules = [
            ScriptRule(
                when=r["when"],
                then=r.get("then", ""),
                stop=r.get("stop", False),
                options=tuple(r.get("options", ())),
            )
            for r in d["rules"]
        ]
        return cls(tokenizer, rules)


# ---------------------------------------------------------------------------
# decoding loop


@dataclass
class _Beam:
    session: DecodingSession
    generated: bytes  # raw piece bytes; decoded lazily so split multi-byte
    score: float      # characters survive until the sequence is complete
    finished: bool = False

    def text(self) -> str:
        return self.generated.decode("utf-8", errors="replace")


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max()
    return shifted - math.log(np.exp(shifted).sum())


def run_question(
    question: str,
    model: ScriptedModel,
    index,
    cfg: PromptConfig = PromptConfig(),
    question_id: Optional[str] = None,
) -> Transcript:
    """Decode one question with beam search and the trigger-driven fact
    state machine; returns the best hypothesis as a transcript."""
    if model.fingerprint != index.tokenizer_fingerprint:
        raise TokenizerMismatch(
            f"model fingerprint {model.fingerprint} != index "
            f"fingerprint {index.tokenizer_fingerprint}"
        )
    engine = ConstraintEngine(index, model.tokenizer, trigger=cfg.trigger)
    prompt = cfg.render(question)
    eos = model.tokenizer.eos_id

    beams = [
        _Beam(
            session=engine.create_session(cfg.max_new_tokens),
            generated=b"",
            score=0.0,
        )
    ]
    finished: List[_Beam] = []

    for _ in range(cfg.max_new_tokens):
        live = [b for b in beams if not b.finished]
        if not live or len(finished) >= cfg.beams:
            break
        candidates: List[Tuple[float, int, int, _Beam]] = []
        for bidx, beam in enumerate(live):
            raw = model.logits(prompt + beam.text())
            logprobs = _log_softmax(raw)
            if beam.session.mode is Mode.CONSTRAINED:
                logprobs = engine.mask_logits(beam.session, logprobs)
            k = min(cfg.beams, len(logprobs))
            # Stable order: among equal scores the smallest token id wins,
            # matching plain argmax when beams == 1.
            top = np.argsort(-logprobs, kind="stable")[:k]
            for tok in top:
                lp = logprobs[int(tok)]
                if lp == float("-inf"):
                    continue
                candidates.append((beam.score + lp, bidx, int(tok), beam))
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        chosen = candidates[: cfg.beams]
        # Snapshot each parent before any of its candidates advances it:
        # the first continuation keeps the parent session, later ones get
        # clones of the pristine state.
        used: set[int] = set()
        sessions: List[DecodingSession] = []
        for _, bidx, _, beam in chosen:
            sessions.append(beam.session.clone() if bidx in used else beam.session)
            used.add(bidx)
        next_beams: List[_Beam] = []
        for (score, bidx, tok, beam), session in zip(chosen, sessions):
            engine.step(session, tok)
            new_beam = _Beam(
                session=session,
                generated=beam.generated
                + (model.tokenizer.piece(tok) if tok != eos else b""),
                score=score,
                finished=tok == eos,
            )
            if new_beam.finished:
                finished.append(new_beam)
            else:
                next_beams.append(new_beam)
        beams = next_beams

    pool = finished if finished else beams
    winner = max(pool, key=lambda b: b.score)
    report = engine.session_report(winner.session)
    text = winner.text()
    terminal = _terminal_state(
        text,
        budget_hit=report.tokens_generated >= cfg.max_new_tokens and not winner.finished,
    )
    return Transcript(
        question=question,
        text=text,
        fact_events=report.facts,
        terminal=terminal,
        tokens_generated=report.tokens_generated,
        exhaustion_events=report.exhaustion_events,
        question_id=question_id,
    )


def _terminal_state(text: str, budget_hit: bool) -> Terminal:
    has_answer = any(line.startswith(ANSWER_PREFIX) for line in text.splitlines())
    if budget_hit and not has_answer:
        return Terminal.BUDGET_EXHAUSTED
    if not has_answer and IDK_LITERAL in text:
        return Terminal.IDONTKNOW
    return Terminal.ANSWERED


# ---------------------------------------------------------------------------
# answer extraction


class AnswerKind(enum.Enum):
    ANSWER = "answer"
    IDONTKNOW = "idontknow"
    NOTGIVEN = "notgiven"


@dataclass(frozen=True)
class ParsedAnswer:
    kind: AnswerKind
    text: Optional[str] = None


def parse_answer(transcript: Transcript) -> ParsedAnswer:
    """Final-answer extraction: the last "Answer:" line wins; the literal
    refusal maps to IDONTKNOW; anything else (including running out of
    budget) is NOTGIVEN."""
    answer = None
    for line in transcript.text.splitlines():
        if line.startswith(ANSWER_PREFIX):
            answer = line[len(ANSWER_PREFIX) :].strip()
    if answer is not None:
        return ParsedAnswer(AnswerKind.ANSWER, answer)
    if IDK_LITERAL in transcript.text:
        return ParsedAnswer(AnswerKind.IDONTKNOW)
    return ParsedAnswer(AnswerKind.NOTGIVEN)


# ---------------------------------------------------------------------------
# dataset and script files


@dataclass(frozen=True)
class GoldRecord:
    question_id: str
    question: str
    gold: Tuple[str, ...]
    answer_type: str = "generic"  # generic | yesno | enumeration
    question_type: str = "generic"


def read_dataset(path: str | Path) -> List[GoldRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                gold = d["gold"]
                if isinstance(gold, str):
                    gold = [gold]
                records.append(
                    GoldRecord(
                        question_id=str(d["id"]),
                        question=d["question"],
                        gold=tuple(gold),
                        answer_type=d.get("answer_type", "generic"),
                        question_type=d.get("question_type", "generic"),
                    )
                )
            except (KeyError, json.JSONDecodeError) as exc:
                raise InputError(f"{path}:{lineno}: bad dataset record: {exc}") from exc
    return records


def read_scripts(path: str | Path, tokenizer: Tokenizer) -> Dict[str, ScriptedModel]:
    """JSONL of {"id": ..., "rules": [...]}; id "default" is the fallback."""
    scripts: Dict[str, ScriptedModel] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                scripts[str(d["id"])] = ScriptedModel.from_dict(tokenizer, d)
            except (KeyError, json.JSONDecodeError) as exc:
                raise InputError(f"{path}:{lineno}: bad script record: {exc}") from exc
    return scripts


def write_transcripts(path: str | Path, transcripts: Iterable[Transcript]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in transcripts:
            f.write(json.dumps(t.to_dict(), ensure_ascii=False) + "\n")
