"""Exact-match accuracy and precision over transcript sets.

Accuracy divides correct answers by all questions; precision divides by
the answers actually given, excluding refusals and budget-truncated runs,
so it reads as "how often is the system right when it commits". Matching
is case-insensitive string equality after trimming and collapsing
whitespace; enumeration answers compare as order-insensitive item sets by
default, with a strict whole-string mode available since ordered
comparison is exactly what makes exact match pessimistic there.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

from .errors import MissingGold
from .orchestrator import AnswerKind, GoldRecord, ParsedAnswer, Transcript, parse_answer

_WS = re.compile(r"\s+")


def normalize(text: str) -> str:
    return _WS.sub(" ", text.strip()).casefold()


def exact_match(
    pred: str,
    gold: Iterable[str],
    answer_type: str = "generic",
    enum_delimiter: str = ",",
    strict_enum: bool = False,
) -> bool:
    """True iff ``pred`` equals any gold form case-insensitively. For
    enumeration answers the default comparison splits both sides on the
    delimiter and compares normalized item sets."""
    if answer_type == "enumeration" and not strict_enum:
        pred_items = frozenset(
            normalize(p) for p in pred.split(enum_delimiter) if p.strip()
        )
        for g in gold:
            gold_items = frozenset(
                normalize(p) for p in g.split(enum_delimiter) if p.strip()
            )
            if pred_items == gold_items:
                return True
        return False
    pred_norm = normalize(pred)
    return any(pred_norm == normalize(g) for g in gold)


@dataclass
class Bucket:
    questions: int = 0
    given: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.questions if self.questions else 0.0

    @property
    def precision(self) -> Optional[float]:
        # Undefined with nothing given; reported as null, never 0 or 1.
        return self.correct / self.given if self.given else None

    def to_dict(self) -> dict:
        return {
            "questions": self.questions,
            "given": self.given,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "precision": self.precision,
        }


@dataclass
class EvalResult:
    overall: Bucket = field(default_factory=Bucket)
    by_answer_type: Dict[str, Bucket] = field(default_factory=dict)
    by_question_type: Dict[str, Bucket] = field(default_factory=dict)

    @property
    def questions(self) -> int:
        return self.overall.questions

    @property
    def given(self) -> int:
        return self.overall.given

    @property
    def correct(self) -> int:
        return self.overall.correct

    @property
    def accuracy(self) -> float:
        return self.overall.accuracy

    @property
    def precision(self) -> Optional[float]:
        return self.overall.precision

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.to_dict(),
            "by_answer_type": {
                k: v.to_dict() for k, v in sorted(self.by_answer_type.items())
            },
            "by_question_type": {
                k: v.to_dict() for k, v in sorted(self.by_question_type.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary_text(self) -> str:
        lines = [
            f"questions: {self.questions}",
            f"given:     {self.given}",
            f"correct:   {self.correct}",
            f"accuracy:  {self.accuracy:.4f}",
            "precision: "
            + (f"{self.precision:.4f}" if self.precision is not None else "n/a"),
        ]
        for name, table in (
            ("answer type", self.by_answer_type),
            ("question type", self.by_question_type),
        ):
            if table:
                lines.append(f"by {name}:")
                for key, b in sorted(table.items()):
                    prec = f"{b.precision:.4f}" if b.precision is not None else "n/a"
                    lines.append(
                        f"  {key}: questions={b.questions} given={b.given} "
                        f"correct={b.correct} accuracy={b.accuracy:.4f} precision={prec}"
                    )
        return "\n".join(lines)


def score_one(
    parsed: ParsedAnswer,
    gold: GoldRecord,
    enum_delimiter: str = ",",
    strict_enum: bool = False,
) -> Tuple[bool, bool]:
    """(given, correct) for one answered question."""
    if parsed.kind is not AnswerKind.ANSWER:
        return False, False
    correct = exact_match(
        parsed.text or "",
        gold.gold,
        answer_type=gold.answer_type,
        enum_delimiter=enum_delimiter,
        strict_enum=strict_enum,
    )
    return True, correct


def aggregate(
    transcripts: Sequence[Transcript],
    gold: Mapping[str, GoldRecord],
    enum_delimiter: str = ",",
    strict_enum: bool = False,
) -> EvalResult:
    """Fold transcripts into overall and per-type counters. Every
    transcript needs a gold record (MissingGold otherwise); refusals and
    not-given answers count toward accuracy's denominator only."""
    result = EvalResult()
    for t in transcripts:
        key = t.question_id if t.question_id is not None else t.question
        record = gold.get(key)
        if record is None:
            raise MissingGold(f"no gold record for transcript {key!r}")
        given, correct = score_one(
            parse_answer(t), record, enum_delimiter, strict_enum
        )
        buckets = [
            result.overall,
            result.by_answer_type.setdefault(record.answer_type, Bucket()),
            result.by_question_type.setdefault(record.question_type, Bucket()),
        ]
        for b in buckets:
            b.questions += 1
            if given:
                b.given += 1
                if correct:
                    b.correct += 1
    return result


def gold_by_id(records: Iterable[GoldRecord]) -> Dict[str, GoldRecord]:
    return {r.question_id: r for r in records}
