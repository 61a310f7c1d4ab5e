"""Seeded synthetic knowledge bases for tests, demos, and benchmarks.

Entity labels are short pronounceable-ish strings; most subjects carry a
single statement while a small set of hub entities fan out widely, which
roughly mimics real dumps (and gives single-leaf compaction something to
chew on: unique subjects become one-row suffix chains).
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List

from .verbalize import LabelTable, RawTriple

_ID_ALPHABET = string.ascii_lowercase + string.digits

PREDICATES = [
    ("P1", "owner of"),
    ("P2", "located in"),
    ("P3", "member of"),
    ("P4", "founded by"),
    ("P5", "controls"),
    ("P6", "date of birth"),
    ("P7", "population"),
    ("P8", "语言"),  # exercise non-ASCII labels end to end
    ("P9", "regulated by"),
]

INVERSE_NAMES = {
    "P1": "owned by",
    "P4": "founder of",
    "P5": "controlled by",
}


@dataclass
class SyntheticKB:
    triples: List[RawTriple]
    labels: LabelTable
    label_lines: List[str]
    triple_lines: List[str]

    def write(self, triples_path: str | Path, labels_path: str | Path) -> None:
        Path(triples_path).write_text(
            "".join(line + "\n" for line in self.triple_lines), encoding="utf-8"
        )
        Path(labels_path).write_text(
            "".join(line + "\n" for line in self.label_lines), encoding="utf-8"
        )


def _entity_label(rng: random.Random, length: int) -> str:
    return "".join(rng.choice(_ID_ALPHABET) for _ in range(length))


def generate_kb(
    n_facts: int,
    seed: int,
    hub_fraction: float = 0.1,
    n_hubs: int = 20,
    literal_fraction: float = 0.15,
    label_length: int = 8,
) -> SyntheticKB:
    """Build ``n_facts`` distinct statements. ``hub_fraction`` of them hang
    off a few hub subjects; a slice of objects are literals (numbers,
    dates, strings, plus some non-English strings that filtering drops)."""
    rng = random.Random(seed)
    labels = LabelTable()
    label_lines: List[str] = []

    def add_entity(entity_id: str, label: str, description: str, title: str = ""):
        labels.add(entity_id, title or None, label, description)
        label_lines.append(f"{entity_id}\t{title}\t{label}\t{description}")

    for pid, name in PREDICATES:
        add_entity(pid, name, "relation")

    hub_ids = []
    for i in range(n_hubs):
        eid = f"H{i}"
        add_entity(eid, f"hub{_entity_label(rng, 4)}", "hub entity")
        hub_ids.append(eid)

    triples: List[RawTriple] = []
    triple_lines: List[str] = []
    seen_keys: set = set()
    seen_labels: set = set()
    next_entity = 0

    def fresh_entity() -> str:
        nonlocal next_entity
        eid = f"E{next_entity}"
        next_entity += 1
        while True:
            label = _entity_label(rng, label_length)
            if label not in seen_labels:
                seen_labels.add(label)
                break
        # Half get a canonical title, half fall back to label (description).
        if rng.random() < 0.5:
            add_entity(eid, label, "", title=label)
        else:
            add_entity(eid, label, f"thing {next_entity % 97}")
        return eid

    pred_ids = [p for p, _ in PREDICATES]
    while len(triples) < n_facts:
        if hub_ids and rng.random() < hub_fraction:
            subject = rng.choice(hub_ids)
        else:
            subject = fresh_entity()
        predicate = rng.choice(pred_ids)
        roll = rng.random()
        if roll < literal_fraction / 3:
            obj_spec = ("number", str(rng.randrange(-1000, 100000)), "")
        elif roll < 2 * literal_fraction / 3:
            obj_spec = (
                "date",
                f"{rng.randrange(1800, 2025):04d}-{rng.randrange(1, 13):02d}-"
                f"{rng.randrange(1, 29):02d}",
                "",
            )
        elif roll < literal_fraction:
            obj_spec = ("string", _entity_label(rng, 6), rng.choice(["", "en"]))
        else:
            obj_spec = ("entity", fresh_entity(), "")
        kind, value, lang = obj_spec
        key = (subject, predicate, kind, value, lang)
        if key in seen_keys:
            continue
        seen_keys.add(key)
        triples.append(RawTriple(subject, predicate, kind, value, lang))
        if kind == "entity":
            triple_lines.append(f"{subject}\t{predicate}\tE:{value}")
        else:
            triple_lines.append(f"{subject}\t{predicate}\tL:{kind}:{lang}:{value}")

    # A few filtered-out statements so ingestion fixtures exercise the filter.
    n_noise = max(1, n_facts // 50)
    for i in range(n_noise):
        subject = rng.choice(hub_ids) if hub_ids else fresh_entity()
        triple_lines.append(f"{subject}\tP2\tL:string:fr:exclu{i}")

    order = list(range(len(triple_lines)))
    rng.shuffle(order)
    triple_lines = [triple_lines[i] for i in order]
    return SyntheticKB(
        triples=triples,
        labels=labels,
        label_lines=label_lines,
        triple_lines=triple_lines,
    )


def iter_fact_texts(kb: SyntheticKB) -> Iterator[str]:
    from .verbalize import facts_from_triples

    for fact in facts_from_triples(kb.triples, kb.labels):
        yield fact.text


def iter_synthetic_fact_texts(
    n_facts: int,
    seed: int,
    hub_fraction: float = 0.1,
    n_hubs: int = 20,
) -> Iterator[str]:
    """Stream ``n_facts`` distinct fact lines without building triples or a
    label table; meant for million-scale index fixtures where only the line
    shape matters. Mostly single-statement subjects plus a few wide hubs,
    like :func:`generate_kb` at a fraction of the memory."""
    rng = random.Random(seed)
    preds = [name for _, name in PREDICATES]
    hubs = ["hub" + _entity_label(rng, 5) for _ in range(n_hubs)]
    seen = set()
    produced = 0
    while produced < n_facts:
        if rng.random() < hub_fraction:
            subject = rng.choice(hubs)
        else:
            subject = _entity_label(rng, 8)
        fact = f"<{subject}> <{rng.choice(preds)}> <{_entity_label(rng, 6)}> ."
        if fact in seen:
            continue
        seen.add(fact)
        produced += 1
        yield fact
