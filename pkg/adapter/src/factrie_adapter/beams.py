"""Beam-indexed routing of mask/step calls onto forked sessions.

Hosts running beam search call the processor with one row per beam. Rows
get matched to sessions by token history, so when the host reorders or
duplicates beams between steps (standard beam-search bookkeeping) the
adapter follows along: each row is routed to the session whose history is
the longest prefix of that row's ids, and a session claimed by several
rows is cloned for the extras, overlays and all. An explicit
``reorder(new_to_old)`` is also provided for hosts that surface the
permutation directly.
"""

from __future__ import annotations

from typing import List

import numpy as np

from factrie.engine import DecodingSession, Mode, SessionReport
from factrie.errors import EngineError

from .processor import AdapterHandle


class BeamIndexOutOfRange(EngineError):
    pass


class _BeamSlot:
    __slots__ = ("session", "seen")

    def __init__(self, session: DecodingSession, seen: List[int]):
        self.session = session
        self.seen = seen


class BeamMaskProcessor:
    """``processor(input_ids, scores)`` over ``[beams, seq]`` ids and
    ``[beams, vocab]`` scores."""

    def __init__(self, handle: AdapterHandle, beam_count: int):
        if beam_count < 1:
            raise BeamIndexOutOfRange("beam count must be >= 1")
        self.handle = handle
        self.beam_count = beam_count
        base = handle.new_session()
        beams = handle.engine.fork_beams(base, beam_count)
        self._slots = [_BeamSlot(s, []) for s in beams.sessions]

    def reorder(self, new_to_old: List[int]) -> None:
        """Slot ``i`` continues the hypothesis previously at
        ``new_to_old[i]``; duplicated sources are cloned."""
        for j in new_to_old:
            if not 0 <= j < self.beam_count:
                raise BeamIndexOutOfRange(f"beam index {j} out of range")
        used: set[int] = set()
        slots: List[_BeamSlot] = []
        for j in new_to_old:
            src = self._slots[j]
            if j in used:
                slots.append(_BeamSlot(src.session.clone(), list(src.seen)))
            else:
                slots.append(src)
                used.add(j)
        self._slots = slots
        self.beam_count = len(slots)

    def _match_rows(self, rows: List[List[int]]) -> List[_BeamSlot]:
        """Assign each row the slot whose history is the longest prefix of
        the row, cloning slots claimed more than once (clones are taken
        before any row advances, so every copy starts from the matched
        state)."""
        picked: List[_BeamSlot] = []
        claimed: dict[int, int] = {}
        for r, row in enumerate(rows):
            best, best_len = None, -1
            for idx, slot in enumerate(self._slots):
                if len(slot.seen) > best_len and row[: len(slot.seen)] == slot.seen:
                    best, best_len = idx, len(slot.seen)
            if best is None:
                raise EngineError(f"beam row {r} does not extend any known hypothesis")
            claimed[best] = claimed.get(best, 0) + 1
            if claimed[best] > 1:
                src = self._slots[best]
                picked.append(_BeamSlot(src.session.clone(), list(src.seen)))
            else:
                picked.append(self._slots[best])
        return picked

    def __call__(self, input_ids, scores: np.ndarray) -> np.ndarray:
        ids = np.asarray(input_ids)
        if ids.ndim != 2:
            raise EngineError("beam processor expects [beams, seq] input ids")
        if ids.shape[0] != self.beam_count:
            raise BeamIndexOutOfRange(
                f"got {ids.shape[0]} rows for {self.beam_count} beams"
            )
        rows = [[int(t) for t in row] for row in ids.tolist()]
        slots = self._match_rows(rows)
        scores_arr = np.asarray(scores)
        if scores_arr.shape[0] != self.beam_count:
            raise BeamIndexOutOfRange("scores rows do not match beam count")
        out = np.array(scores_arr, copy=True)
        for r, (row, slot) in enumerate(zip(rows, slots)):
            for tok in row[len(slot.seen) :]:
                self.handle.engine.step(slot.session, tok)
            slot.seen = row
            if slot.session.mode is Mode.CONSTRAINED:
                out[r] = self.handle.engine.mask_logits(slot.session, scores_arr[r])
        self._slots = slots
        return out

    def reports(self) -> List[SessionReport]:
        return [self.handle.engine.session_report(s.session) for s in self._slots]


def attach_beams(handle: AdapterHandle, beam_count: int) -> BeamMaskProcessor:
    """Per-beam routing of mask/step calls; ``beam_count == 1`` behaves
    like the single-sequence processor."""
    return BeamMaskProcessor(handle, beam_count)
