"""In-memory tokenized prefix tree with reachable-leaf counts.

Every root-to-leaf path is one tokenized fact; each node knows how many
complete facts are reachable below it. Generation-time bookkeeping (which
facts a session has already emitted) lives in a :class:`ConsumedOverlay`
so the tree itself stays immutable and shareable.

Both this class and the disk-backed reader expose the same two queries —
``node(prefix)`` and ``next_tokens(prefix, overlay)`` — so the decoding
engine does not care where the tree lives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Optional, Tuple

from .errors import AlreadyConsumed, PrefixConflict, UnknownPrefix

TokenSeq = Tuple[int, ...]


class TrieNode:
    __slots__ = ("children", "num_leaves")

    def __init__(self):
        self.children: Dict[int, "TrieNode"] = {}
        self.num_leaves = 0


@dataclass(frozen=True)
class NodeView:
    """Canonical read-model of one tree position.

    ``children`` maps each allowed next token to the number of facts
    reachable through it. ``suffix`` is set only when exactly one fact
    remains below the node: the unique remaining token chain (empty at a
    leaf). It is a convenience and excluded from equality so in-memory and
    disk-backed answers compare canonically.
    """

    num_leaves: int
    children: Dict[int, int]
    suffix: Optional[TokenSeq] = field(default=None, compare=False)

    @property
    def is_leaf(self) -> bool:
        return not self.children


class ConsumedOverlay:
    """Session-local record of consumed leaves, keyed by token prefix.

    The shared tree is never mutated; remaining leaves at a node are its
    base count minus this overlay's count for the same prefix.
    """

    __slots__ = ("_counts",)

    def __init__(self, counts: Optional[Dict[TokenSeq, int]] = None):
        self._counts: Dict[TokenSeq, int] = counts or {}

    def consumed(self, prefix: TokenSeq) -> int:
        return self._counts.get(prefix, 0)

    def record_fact(self, seq: TokenSeq) -> None:
        """Decrement remaining-leaf counts along every node of the path."""
        counts = self._counts
        for i in range(len(seq) + 1):
            key = seq[:i]
            counts[key] = counts.get(key, 0) + 1

    def fork(self) -> "ConsumedOverlay":
        """Independent copy; consumption on one side never shows on the other."""
        return ConsumedOverlay(dict(self._counts))

    def __len__(self) -> int:
        return self._counts.get((), 0)


class FactTree:
    """Prefix tree over tokenized facts with per-node reachable-leaf counts."""

    def __init__(self, tokenizer_fingerprint: str):
        self.root = TrieNode()
        self.tokenizer_fingerprint = tokenizer_fingerprint

    @property
    def fact_count(self) -> int:
        return self.root.num_leaves

    def insert(self, seq: Iterable[int]) -> bool:
        """Add one tokenized fact. Duplicate inserts are a no-op (set
        semantics). Returns True when the path is new.

        Raises PrefixConflict when ``seq`` is a strict prefix of an existing
        path or extends past an existing leaf; terminator-delimited facts
        never trigger this by construction.
        """
        seq = tuple(seq)
        if not seq:
            raise ValueError("cannot insert an empty sequence")
        # Walk without mutating so duplicates and conflicts leave no trace.
        node = self.root
        depth = 0
        for tok in seq:
            child = node.children.get(tok)
            if child is None:
                break
            node = child
            depth += 1
            if not node.children and depth < len(seq):
                raise PrefixConflict(
                    f"existing fact is a strict prefix of the new one at depth {depth}"
                )
        if depth == len(seq):
            if node.children:
                raise PrefixConflict("new fact is a strict prefix of an existing one")
            return False  # duplicate
        # Commit: create the new suffix and bump counts along the full path.
        node = self.root
        node.num_leaves += 1
        for tok in seq:
            child = node.children.get(tok)
            if child is None:
                child = TrieNode()
                node.children[tok] = child
            child.num_leaves += 1
            node = child
        return True

    def insert_sorted(self, seqs: Iterable[TokenSeq]) -> int:
        """Bulk insert of sequences already sorted and de-duplicated.

        Equivalent to calling :meth:`insert` per sequence (asserted in
        tests) but reuses the shared-prefix node stack between neighbours,
        which matters when building million-fact batches.
        """
        prev: TokenSeq = ()
        stack = [self.root]
        inserted = 0
        for seq in seqs:
            if not seq:
                raise ValueError("cannot insert an empty sequence")
            k = 0
            limit = min(len(prev), len(seq))
            while k < limit and prev[k] == seq[k]:
                k += 1
            if k == len(seq):
                if seq == prev:
                    continue  # duplicate neighbour
                raise PrefixConflict("new fact is a strict prefix of an existing one")
            if k == len(prev) and prev:
                raise PrefixConflict(
                    f"existing fact is a strict prefix of the new one at depth {k}"
                )
            del stack[k + 1 :]
            node = stack[k]
            for tok in seq[k:]:
                child = TrieNode()
                node.children[tok] = child
                stack.append(child)
                node = child
            for n in stack:
                n.num_leaves += 1
            prev = seq
            inserted += 1
        return inserted

    def _walk(self, prefix: TokenSeq) -> TrieNode:
        node = self.root
        for i, tok in enumerate(prefix):
            child = node.children.get(tok)
            if child is None:
                raise UnknownPrefix(f"no path for token {tok} at depth {i}")
            node = child
        return node

    def node(self, prefix: TokenSeq) -> NodeView:
        """Canonical view of the node reached by ``prefix`` (root if empty)."""
        node = self._walk(tuple(prefix))
        children = {t: c.num_leaves for t, c in node.children.items()}
        suffix: Optional[TokenSeq] = None
        if node.num_leaves == 1:
            chain = []
            cur = node
            while cur.children:
                ((tok, nxt),) = cur.children.items()
                chain.append(tok)
                cur = nxt
            suffix = tuple(chain)
        return NodeView(num_leaves=node.num_leaves, children=children, suffix=suffix)

    def next_tokens(
        self, prefix: TokenSeq, overlay: Optional[ConsumedOverlay] = None
    ) -> Dict[int, int]:
        """Allowed next tokens after ``prefix`` with remaining-leaf counts;
        tokens whose remaining count is zero are omitted."""
        return next_tokens(self, tuple(prefix), overlay)

    def iter_fact_paths(self) -> Iterator[TokenSeq]:
        """All root-to-leaf token paths, in key order."""
        stack: list[tuple[TrieNode, TokenSeq]] = [(self.root, ())]
        while stack:
            node, path = stack.pop()
            if not node.children:
                if path:
                    yield path
                continue
            for tok in sorted(node.children, reverse=True):
                stack.append((node.children[tok], path + (tok,)))


def next_tokens(index, prefix: TokenSeq, overlay: Optional[ConsumedOverlay] = None):
    """Overlay-adjusted allowed-token map for any index exposing node()."""
    view = index.node(prefix)
    if overlay is None:
        return dict(view.children)
    out: Dict[int, int] = {}
    for tok, count in view.children.items():
        remaining = count - overlay.consumed(prefix + (tok,))
        if remaining > 0:
            out[tok] = remaining
    return out


def remaining_leaves(index, prefix: TokenSeq, overlay: Optional[ConsumedOverlay]) -> int:
    base = index.node(prefix).num_leaves
    if overlay is None:
        return base
    return base - overlay.consumed(prefix)


def consume_fact(index, overlay: ConsumedOverlay, seq: TokenSeq) -> None:
    """Mark one complete fact as emitted for this session.

    ``seq`` must be a root-to-leaf path with at least one remaining leaf
    under the overlay; raises AlreadyConsumed otherwise.
    """
    seq = tuple(seq)
    view = index.node(seq)
    if not view.is_leaf:
        raise UnknownPrefix("sequence does not end at a fact leaf")
    if view.num_leaves - overlay.consumed(seq) < 1:
        raise AlreadyConsumed("fact already consumed in this session")
    overlay.record_fact(seq)
