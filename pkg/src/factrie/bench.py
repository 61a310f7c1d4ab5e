"""Generation-time overhead measurement.

Runs the scripted model for a fixed number of tokens twice — plain
decoding, then trigger-driven constrained decoding against an index —
timing every token. An optional artificial forward delay stands in for a
real model's step cost so the constrained bookkeeping shows up as a
relative overhead, the way it would next to a GPU forward pass. Index
lookup time inside constrained steps is sampled separately so tail
latency can be reported on its own.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import List

import numpy as np

from .engine import ConstraintEngine, Mode
from .orchestrator import ScriptedModel, ScriptRule


@dataclass
class BenchResult:
    unconstrained_times: List[float]
    constrained_times: List[float]
    lookup_times: List[float]
    facts_emitted: int

    @property
    def unconstrained_total(self) -> float:
        return sum(self.unconstrained_times)

    @property
    def constrained_total(self) -> float:
        return sum(self.constrained_times)

    @property
    def overhead_ratio(self) -> float:
        if not self.unconstrained_total:
            return 0.0
        return self.constrained_total / self.unconstrained_total

    def lookup_percentile(self, q: float) -> float:
        if not self.lookup_times:
            return 0.0
        vals = sorted(self.lookup_times)
        return vals[min(len(vals) - 1, int(round(q * (len(vals) - 1))))]

    def to_dict(self) -> dict:
        return {
            "tokens": len(self.constrained_times),
            "unconstrained_total_s": self.unconstrained_total,
            "constrained_total_s": self.constrained_total,
            "overhead_ratio": self.overhead_ratio,
            "facts_emitted": self.facts_emitted,
            "lookup_p50_s": self.lookup_percentile(0.50),
            "lookup_p99_s": self.lookup_percentile(0.99),
        }


class _TimingIndex:
    """Index proxy that records how long each tree query takes."""

    def __init__(self, index):
        self._index = index
        self.tokenizer_fingerprint = index.tokenizer_fingerprint
        self.samples: List[float] = []

    def node(self, prefix):
        t0 = time.perf_counter()
        out = self._index.node(prefix)
        self.samples.append(time.perf_counter() - t0)
        return out


def _bench_model(tokenizer) -> ScriptedModel:
    # After every completed fact the model calls for the next one, so a
    # constrained run spends nearly all its tokens inside the tree.
    return ScriptedModel(tokenizer, [ScriptRule(when=" .", then="\nFact:")])


def run_bench(
    index,
    tokenizer,
    token_count: int,
    forward_delay_s: float = 0.0,
    trigger: str = "Fact:",
) -> BenchResult:
    """Time ``token_count`` decoding steps in both modes with the same
    scripted model and greedy selection."""
    if token_count <= 0:
        return BenchResult([], [], [], 0)
    model = _bench_model(tokenizer)
    seed_text = "Fact:"

    # Plain decoding: model forward + argmax + text bookkeeping.
    times_u: List[float] = []
    context = seed_text
    for _ in range(token_count):
        t0 = time.perf_counter()
        if forward_delay_s:
            time.sleep(forward_delay_s)
        logits = model.logits(context)
        tok = int(np.argmax(logits))
        context += tokenizer.piece_repr(tok)
        times_u.append(time.perf_counter() - t0)

    # Constrained decoding: identical loop plus mask + state machine.
    timing_index = _TimingIndex(index)
    engine = ConstraintEngine(timing_index, tokenizer, trigger=trigger)
    session = engine.create_session(max_new_tokens=token_count)
    times_c: List[float] = []
    context = seed_text
    # Prime trigger detection with the seed text before timing starts.
    for tok in tokenizer.encode(seed_text):
        engine.step(session, tok)
    session.tokens_generated = 0
    for _ in range(token_count):
        t0 = time.perf_counter()
        if forward_delay_s:
            time.sleep(forward_delay_s)
        logits = model.logits(context)
        if session.mode is Mode.CONSTRAINED:
            logits = engine.mask_logits(session, logits)
        tok = int(np.argmax(logits))
        engine.step(session, tok)
        context += tokenizer.piece_repr(tok)
        times_c.append(time.perf_counter() - t0)

    report = engine.session_report(session)
    return BenchResult(
        unconstrained_times=times_u,
        constrained_times=times_c,
        lookup_times=timing_index.samples,
        facts_emitted=len(report.facts),
    )
