"""Turning raw knowledge-graph triples into delimited textual facts.

A fact is a single line ``<subject> <predicate> <object> .`` whose three
spans are label text with the angle-bracket delimiters reserved: any
``<``/``>`` inside a label is swapped for its full-width lookalike at
render time, so the grammar stays unambiguous and facts always parse
back into exactly three spans.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, Iterator, Optional, Tuple

from .errors import MissingLabel, TripleFormatError, UnresolvableLabel

logger = logging.getLogger(__name__)

OBJECT_KINDS = ("entity", "string", "number", "date")

_FACT_RE = re.compile(r"^<([^<>]*)> <([^<>]*)> <([^<>]*)> \.$")
_NUMBER_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class RawTriple:
    """One statement from the dump: ids for subject and predicate, and an
    object that is either another entity or a typed literal."""

    subject_id: str
    predicate_id: str
    object_kind: str  # one of OBJECT_KINDS
    object_value: str  # entity id, or literal text
    object_lang: str = ""  # language tag for string literals, "" if none

    def validate(self) -> None:
        if not self.subject_id or any(c.isspace() for c in self.subject_id):
            raise TripleFormatError(f"bad subject id {self.subject_id!r}")
        if not self.predicate_id or any(c.isspace() for c in self.predicate_id):
            raise TripleFormatError(f"bad predicate id {self.predicate_id!r}")
        if self.object_kind not in OBJECT_KINDS:
            raise TripleFormatError(f"bad object kind {self.object_kind!r}")
        if self.object_kind == "entity" and not self.object_value:
            raise TripleFormatError("entity object with empty id")
        if self.object_kind == "date":
            try:
                date.fromisoformat(self.object_value)
            except ValueError as exc:
                raise TripleFormatError(
                    f"date literal {self.object_value!r} does not parse"
                ) from exc
        if self.object_kind == "number" and not _NUMBER_RE.match(self.object_value):
            raise TripleFormatError(f"number literal {self.object_value!r} does not parse")


@dataclass(frozen=True)
class EntityLabel:
    entity_id: str
    display: str
    source: str  # "canonical_title" | "label_with_description"


@dataclass(frozen=True)
class Fact:
    """Rendered fact line plus the character spans of its three parts."""

    text: str
    subject_span: Tuple[int, int]
    predicate_span: Tuple[int, int]
    object_span: Tuple[int, int]

    @property
    def subject(self) -> str:
        return self.text[self.subject_span[0] : self.subject_span[1]]

    @property
    def predicate(self) -> str:
        return self.text[self.predicate_span[0] : self.predicate_span[1]]

    @property
    def object(self) -> str:
        return self.text[self.object_span[0] : self.object_span[1]]


def filter_triple(t: RawTriple) -> bool:
    """Keep a triple iff its subject and predicate carry KB identifiers and
    the object is an identified entity or an English/untagged/number/date
    literal. Pure predicate, never raises on structurally valid input."""
    if not t.subject_id or not t.predicate_id:
        return False
    if t.object_kind == "entity":
        return bool(t.object_value)
    if t.object_kind in ("number", "date"):
        return True
    lang = t.object_lang.lower()
    return lang == "" or lang == "en" or lang.startswith("en-")


def label_entity(
    entity_id: str, title: Optional[str], label: str, description: str
) -> EntityLabel:
    """Display form of an entity: its canonical encyclopedia title when one
    exists, otherwise ``label (description)`` since labels alone are not
    unique. An entity with no title and no usable label/description pair
    cannot be rendered informatively and raises MissingLabel."""
    if title:
        return EntityLabel(entity_id, title, "canonical_title")
    if not label:
        raise MissingLabel(f"{entity_id}: no canonical title and empty label")
    if not description:
        raise MissingLabel(f"{entity_id}: no canonical title and empty description")
    return EntityLabel(entity_id, f"{label} ({description})", "label_with_description")


def sanitize_label(text: str) -> str:
    """Make a label safe to embed between fact delimiters."""
    return text.replace("<", "＜").replace(">", "＞")


class LabelTable:
    """Entity-id to display-label resolver, loaded once and then read-only.

    Predicates resolve to their bare label (titles never exist for them
    and the parenthesized description is an entity-disambiguation device).
    """

    def __init__(self):
        self._rows: Dict[str, Tuple[Optional[str], str, str]] = {}
        self._entity_cache: Dict[str, EntityLabel] = {}

    @classmethod
    def load(cls, path: str | Path) -> "LabelTable":
        table = cls()
        displays: Dict[str, str] = {}
        collisions = 0
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise TripleFormatError(
                        f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}"
                    )
                entity_id, title, label, description = parts
                if not entity_id:
                    raise TripleFormatError(f"{path}:{lineno}: empty entity id")
                table._rows[entity_id] = (title or None, label, description)
                display = title or (f"{label} ({description})" if label else "")
                if display:
                    prev = displays.get(display)
                    if prev is not None and prev != entity_id:
                        collisions += 1
                        if collisions <= 5:
                            logger.warning(
                                "label collision: %r used by %s and %s",
                                display,
                                prev,
                                entity_id,
                            )
                    else:
                        displays[display] = entity_id
        if collisions:
            logger.warning("label table has %d colliding display labels", collisions)
        return table

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self._rows

    def __len__(self) -> int:
        return len(self._rows)

    def add(
        self, entity_id: str, title: Optional[str], label: str, description: str
    ) -> None:
        self._rows[entity_id] = (title, label, description)

    def resolve_entity(self, entity_id: str) -> EntityLabel:
        cached = self._entity_cache.get(entity_id)
        if cached is not None:
            return cached
        row = self._rows.get(entity_id)
        if row is None:
            raise UnresolvableLabel(f"no label row for entity {entity_id}")
        result = label_entity(entity_id, *row)
        self._entity_cache[entity_id] = result
        return result

    def resolve_predicate(self, predicate_id: str) -> str:
        row = self._rows.get(predicate_id)
        if row is None:
            raise UnresolvableLabel(f"no label row for predicate {predicate_id}")
        title, label, _ = row
        display = title or label
        if not display:
            raise MissingLabel(f"{predicate_id}: predicate has no label")
        return display


def _render_object(t: RawTriple, labels: LabelTable) -> str:
    if t.object_kind == "entity":
        return labels.resolve_entity(t.object_value).display
    # Literals pass through verbatim; dates are already ISO-8601 by
    # validation and numbers keep their original spelling.
    return t.object_value


def _assemble(subject: str, predicate: str, obj: str) -> Fact:
    s = sanitize_label(subject)
    p = sanitize_label(predicate)
    o = sanitize_label(obj)
    text = f"<{s}> <{p}> <{o}> ."
    s_start = 1
    p_start = s_start + len(s) + 3
    o_start = p_start + len(p) + 3
    return Fact(
        text=text,
        subject_span=(s_start, s_start + len(s)),
        predicate_span=(p_start, p_start + len(p)),
        object_span=(o_start, o_start + len(o)),
    )


def verbalize(t: RawTriple, labels: LabelTable) -> Fact:
    """Render one kept triple as a fact line. Deterministic for fixed
    inputs; raises UnresolvableLabel / MissingLabel when a needed label
    cannot be produced."""
    subject = labels.resolve_entity(t.subject_id).display
    predicate = labels.resolve_predicate(t.predicate_id)
    obj = _render_object(t, labels)
    return _assemble(subject, predicate, obj)


def invert_fact(fact: Fact, inverse_predicate_name: str) -> Fact:
    """Swap subject and object under the named inverse predicate, so
    tail-to-head lookups can start from either end."""
    return _assemble(fact.object, inverse_predicate_name, fact.subject)


def parse_fact(text: str) -> Fact:
    """Parse a fact line back into its three spans; raises ValueError when
    the line does not match the grammar."""
    m = _FACT_RE.match(text)
    if not m:
        raise ValueError(f"not a fact line: {text!r}")
    return Fact(
        text=text,
        subject_span=m.span(1),
        predicate_span=m.span(2),
        object_span=m.span(3),
    )


# ---------------------------------------------------------------------------
# line-oriented input formats


def parse_triple_line(line: str, where: str = "<input>") -> RawTriple:
    """``subject_id <TAB> predicate_id <TAB> object_spec`` with object_spec
    ``E:<id>`` or ``L:<kind>:<lang?>:<text>``."""
    parts = line.split("\t")
    if len(parts) != 3:
        raise TripleFormatError(f"{where}: expected 3 tab-separated fields")
    subject_id, predicate_id, spec = parts
    if spec.startswith("E:"):
        triple = RawTriple(subject_id, predicate_id, "entity", spec[2:])
    elif spec.startswith("L:"):
        pieces = spec.split(":", 3)
        if len(pieces) != 4:
            raise TripleFormatError(f"{where}: bad literal spec {spec!r}")
        _, kind, lang, text = pieces
        triple = RawTriple(subject_id, predicate_id, kind, text, lang)
    else:
        raise TripleFormatError(f"{where}: object spec must start with E: or L:")
    try:
        triple.validate()
    except TripleFormatError as exc:
        raise TripleFormatError(f"{where}: {exc}") from exc
    return triple


def read_triples(path: str | Path) -> Iterator[RawTriple]:
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            yield parse_triple_line(line, where=f"{path}:{lineno}")


def load_inverses(path: str | Path) -> Dict[str, str]:
    """``predicate_id <TAB> inverse display name`` per line."""
    out: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise TripleFormatError(f"{path}:{lineno}: expected 'id<TAB>name'")
            out[parts[0]] = parts[1]
    return out


def facts_from_triples(
    triples: Iterable[RawTriple],
    labels: LabelTable,
    inverses: Optional[Dict[str, str]] = None,
    skip_unresolvable: bool = False,
) -> Iterator[Fact]:
    """Filter, verbalize, and (when an inverse name is mapped for the
    predicate and the object is an entity) also emit the swapped fact."""
    for t in triples:
        if not filter_triple(t):
            continue
        try:
            fact = verbalize(t, labels)
        except (UnresolvableLabel, MissingLabel):
            if skip_unresolvable:
                continue
            raise
        yield fact
        if inverses and t.object_kind == "entity":
            inverse_name = inverses.get(t.predicate_id)
            if inverse_name:
                yield invert_fact(fact, inverse_name)
