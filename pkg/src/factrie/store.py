"""Disk-backed persistence of a fact tree as prefix-keyed records.

Layout of an index file::

    magic "FTRX" | u16 format version | u8 fp_len | fingerprint (ascii)
    u32 cutoff_depth | u32 batch_count | u64 fact_count | u64 record_count
    u64 records_offset | u64 offsets_offset
    <records, sorted by key; duplicates from different batches adjacent>
    <offsets table: record_count x u64 absolute record offsets>

Record keys are the prefix token ids packed as fixed-width big-endian
u32, so lexicographic byte order equals token-sequence order and any
ordered backend can range-scan them. Each record is::

    u16 key_len_bytes | key | u8 flags | payload

with three payload shapes:

* standard (flags 0): varint num_leaves, varint n, n x varint token,
  n x varint per-child leaf count. Describes one internal node.
* single-leaf compacted (flags 1): varint suffix_len, suffix tokens.
  One remaining fact below this prefix; the suffix spells the rest of
  the path, so none of the chain's deeper nodes need rows.
* blob-bearing (flags 2): the standard fields followed by a versioned
  serialized subtree. Written exactly at the cutoff depth; everything
  deeper is resolved by walking the decoded subtree in memory.

Ingestion is batched: each batch becomes its own limited-size tree whose
records are appended as a sorted run, and runs are merge-sorted at
finalize. Prefixes touched by several batches therefore appear as
several rows, which the reader merges on lookup (tokens unioned, leaf
counts summed, subtrees tree-unioned). The number of duplicates per key
is bounded by the batch count. Merging by summation is only correct if
every fact is inserted exactly once globally, so the builder
de-duplicates across batches before inserting.
"""

from __future__ import annotations

import hashlib
import heapq
import mmap
import os
import struct
import tempfile
import threading
from collections import Counter, OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

from .errors import (
    BackendRead,
    BackendWrite,
    CorruptRecord,
    NotFound,
    SerializationFailure,
    UnknownPrefix,
    UnsupportedVersion,
)
from .trie import ConsumedOverlay, FactTree, NodeView, TokenSeq, TrieNode, next_tokens

MAGIC = b"FTRX"
FORMAT_VERSION = 1
SUBTREE_VERSION = 1

FLAG_STANDARD = 0
FLAG_COMPACT = 1
FLAG_BLOB = 2

_HEADER = struct.Struct(">4sH B16s I I Q Q Q Q")  # fingerprint fixed at 16 ascii chars

CACHE_BYTES_ENV = "FACTRIE_CACHE_BYTES"
DEFAULT_CACHE_BYTES = 256 * 1024 * 1024
VIEW_CACHE_ENTRIES = 200_000


@dataclass(frozen=True)
class IndexConfig:
    """Build-time knobs. ``cutoff_depth`` is the prefix length at which
    subtrees are serialized whole instead of one row per node;
    ``batch_size`` bounds builder memory (facts per in-memory tree)."""

    tokenizer_fingerprint: str
    cutoff_depth: int = 7
    batch_size: int = 5_000_000
    compaction: bool = True

    def __post_init__(self):
        if self.cutoff_depth < 2:
            raise ValueError("cutoff_depth must be >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(self.tokenizer_fingerprint) != 16:
            raise ValueError("tokenizer fingerprint must be 16 hex chars")


@dataclass(frozen=True)
class NodeRecord:
    """One persisted row, as stored (pre-merge)."""

    prefix: TokenSeq
    flags: int
    num_leaves: int
    next_tokens: TokenSeq = ()
    child_leaves: TokenSeq = ()
    suffix: Optional[TokenSeq] = None
    blob: Optional[bytes] = None


# ---------------------------------------------------------------------------
# key and varint codecs


def encode_key(prefix: TokenSeq) -> bytes:
    return struct.pack(f">{len(prefix)}I", *prefix) if prefix else b""


def decode_key(data: bytes) -> TokenSeq:
    if len(data) % 4:
        raise CorruptRecord("key length not a multiple of 4")
    return struct.unpack(f">{len(data) // 4}I", data) if data else ()


def _write_varint(buf: bytearray, value: int) -> None:
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            buf.append(b | 0x80)
        else:
            buf.append(b)
            return


def _read_varint(data, pos: int) -> Tuple[int, int]:
    result = 0
    shift = 0
    while True:
        try:
            b = data[pos]
        except IndexError as exc:
            raise CorruptRecord("truncated varint") from exc
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise CorruptRecord("varint too long")


# ---------------------------------------------------------------------------
# subtree blob codec


def encode_subtree(node: TrieNode) -> bytes:
    """Preorder, children in ascending token order; leaf counts are implied
    by structure (a node with no children is one fact)."""
    buf = bytearray([SUBTREE_VERSION])
    stack = [node]
    while stack:
        cur = stack.pop()
        toks = sorted(cur.children)
        _write_varint(buf, len(toks))
        for tok in toks:
            _write_varint(buf, tok)
        for tok in reversed(toks):
            stack.append(cur.children[tok])
    return bytes(buf)


def decode_subtree(blob: bytes) -> TrieNode:
    if not blob:
        raise CorruptRecord("empty subtree blob")
    if blob[0] != SUBTREE_VERSION:
        raise UnsupportedVersion(f"subtree format {blob[0]} not supported")
    pos = 1
    root = TrieNode()
    # Fill-stack of nodes whose subtrees are still being read, preorder.
    pending: List[TrieNode] = [root]
    order: List[TrieNode] = []
    while pending:
        cur = pending.pop()
        order.append(cur)
        n, pos = _read_varint(blob, pos)
        toks = []
        for _ in range(n):
            tok, pos = _read_varint(blob, pos)
            toks.append(tok)
        for tok in toks:
            cur.children[tok] = TrieNode()
        for tok in reversed(toks):
            pending.append(cur.children[tok])
    if pos != len(blob):
        raise CorruptRecord("trailing bytes after subtree")
    # Leaf counts, children before parents.
    for cur in reversed(order):
        cur.num_leaves = (
            sum(c.num_leaves for c in cur.children.values()) if cur.children else 1
        )
    return root


def _merge_subtrees(dst: TrieNode, src: TrieNode) -> None:
    """Union ``src`` into ``dst`` in place, re-summing leaf counts."""
    stack = [(dst, src)]
    while stack:
        d, s = stack.pop()
        for tok, s_child in s.children.items():
            d_child = d.children.get(tok)
            if d_child is None:
                d.children[tok] = s_child
            else:
                stack.append((d_child, s_child))
    _recount(dst)


def _recount(node: TrieNode) -> None:
    order: List[TrieNode] = []
    stack = [node]
    while stack:
        cur = stack.pop()
        order.append(cur)
        stack.extend(cur.children.values())
    for cur in reversed(order):
        cur.num_leaves = (
            sum(c.num_leaves for c in cur.children.values()) if cur.children else 1
        )


# ---------------------------------------------------------------------------
# record codec


def encode_record(rec: NodeRecord) -> bytes:
    key = encode_key(rec.prefix)
    buf = bytearray()
    buf += struct.pack(">H", len(key))
    buf += key
    buf.append(rec.flags)
    if rec.flags == FLAG_COMPACT:
        assert rec.suffix is not None
        _write_varint(buf, len(rec.suffix))
        for tok in rec.suffix:
            _write_varint(buf, tok)
    elif rec.flags in (FLAG_STANDARD, FLAG_BLOB):
        _write_varint(buf, rec.num_leaves)
        _write_varint(buf, len(rec.next_tokens))
        for tok in rec.next_tokens:
            _write_varint(buf, tok)
        for n in rec.child_leaves:
            _write_varint(buf, n)
        if rec.flags == FLAG_BLOB:
            assert rec.blob is not None
            _write_varint(buf, len(rec.blob))
            buf += rec.blob
    else:
        raise SerializationFailure(f"unknown record flags {rec.flags}")
    return bytes(buf)


def decode_record(data, pos: int = 0) -> Tuple[NodeRecord, int]:
    try:
        (key_len,) = struct.unpack_from(">H", data, pos)
    except struct.error as exc:
        raise CorruptRecord("truncated record header") from exc
    pos += 2
    prefix = decode_key(bytes(data[pos : pos + key_len]))
    pos += key_len
    flags = data[pos]
    pos += 1
    if flags == FLAG_COMPACT:
        n, pos = _read_varint(data, pos)
        suffix = []
        for _ in range(n):
            tok, pos = _read_varint(data, pos)
            suffix.append(tok)
        return (
            NodeRecord(prefix=prefix, flags=flags, num_leaves=1, suffix=tuple(suffix)),
            pos,
        )
    if flags in (FLAG_STANDARD, FLAG_BLOB):
        num_leaves, pos = _read_varint(data, pos)
        n, pos = _read_varint(data, pos)
        toks = []
        for _ in range(n):
            tok, pos = _read_varint(data, pos)
            toks.append(tok)
        counts = []
        for _ in range(n):
            c, pos = _read_varint(data, pos)
            counts.append(c)
        blob = None
        if flags == FLAG_BLOB:
            blob_len, pos = _read_varint(data, pos)
            blob = bytes(data[pos : pos + blob_len])
            if len(blob) != blob_len:
                raise CorruptRecord("truncated subtree blob")
            pos += blob_len
        return (
            NodeRecord(
                prefix=prefix,
                flags=flags,
                num_leaves=num_leaves,
                next_tokens=tuple(toks),
                child_leaves=tuple(counts),
                blob=blob,
            ),
            pos,
        )
    raise CorruptRecord(f"unknown record flags {flags}")


# ---------------------------------------------------------------------------
# batch persistence


def iter_batch_records(
    tree: FactTree, cfg: IndexConfig
) -> Iterator[NodeRecord]:
    """Records for one batch tree, in key order.

    Single-leaf compaction replaces a whole one-fact chain (including a
    chain starting at the root when the batch holds one fact) with a
    single suffix-carrying row; at the cutoff depth the remaining subtree
    is serialized whole.
    """
    if tree.fact_count == 0:
        return
    stack: List[Tuple[TrieNode, TokenSeq]] = [(tree.root, ())]
    while stack:
        node, prefix = stack.pop()
        if cfg.compaction and node.num_leaves == 1:
            chain = []
            cur = node
            while cur.children:
                ((tok, nxt),) = cur.children.items()
                chain.append(tok)
                cur = nxt
            yield NodeRecord(
                prefix=prefix, flags=FLAG_COMPACT, num_leaves=1, suffix=tuple(chain)
            )
            continue
        toks = sorted(node.children)
        counts = tuple(node.children[t].num_leaves for t in toks)
        if len(prefix) == cfg.cutoff_depth:
            yield NodeRecord(
                prefix=prefix,
                flags=FLAG_BLOB,
                num_leaves=node.num_leaves,
                next_tokens=tuple(toks),
                child_leaves=counts,
                blob=encode_subtree(node),
            )
            continue
        yield NodeRecord(
            prefix=prefix,
            flags=FLAG_STANDARD,
            num_leaves=node.num_leaves,
            next_tokens=tuple(toks),
            child_leaves=counts,
        )
        for tok in reversed(toks):
            stack.append((node.children[tok], prefix + (tok,)))


def persist_batch(tree: FactTree, cfg: IndexConfig, sink) -> int:
    """Write one batch tree's records to ``sink`` (a binary file object),
    framed as u32 length + record bytes. Returns the record count."""
    count = 0
    try:
        for rec in iter_batch_records(tree, cfg):
            data = encode_record(rec)
            sink.write(struct.pack(">I", len(data)))
            sink.write(data)
            count += 1
    except OSError as exc:
        raise BackendWrite(str(exc)) from exc
    return count


def _iter_run(path: Path) -> Iterator[bytes]:
    with open(path, "rb") as f:
        while True:
            head = f.read(4)
            if not head:
                return
            (length,) = struct.unpack(">I", head)
            data = f.read(length)
            if len(data) != length:
                raise CorruptRecord(f"truncated run file {path}")
            yield data


def _record_key(data: bytes) -> bytes:
    (key_len,) = struct.unpack_from(">H", data, 0)
    return bytes(data[2 : 2 + key_len])


class IndexBuilder:
    """Batched index construction: each ``add_batch`` builds a limited-size
    tree and spills its records as a sorted run; ``finalize`` merge-sorts
    the runs into the final file.

    Facts already seen in earlier batches are dropped (merge-by-summation
    on read is only correct when each fact is counted once globally).
    """

    def __init__(self, path: str | Path, cfg: IndexConfig):
        self.path = Path(path)
        self.cfg = cfg
        self._tmp = tempfile.TemporaryDirectory(
            prefix=".factrie-build-", dir=str(self.path.parent)
        )
        self._runs: List[Path] = []
        self._seen: set[bytes] = set()
        self._fact_count = 0
        self._finalized = False

    def add_batch(self, seqs: Iterable[TokenSeq]) -> int:
        """Ingest one batch of tokenized facts; returns how many were new."""
        if self._finalized:
            raise BackendWrite("builder already finalized")
        fresh: List[TokenSeq] = []
        seen = self._seen
        for seq in seqs:
            seq = tuple(seq)
            digest = hashlib.blake2b(encode_key(seq), digest_size=16).digest()
            if digest in seen:
                continue
            seen.add(digest)
            fresh.append(seq)
        if not fresh:
            return 0
        fresh.sort()
        tree = FactTree(self.cfg.tokenizer_fingerprint)
        tree.insert_sorted(fresh)
        run = Path(self._tmp.name) / f"run-{len(self._runs):05d}.rec"
        with open(run, "wb") as f:
            persist_batch(tree, self.cfg, f)
        self._runs.append(run)
        self._fact_count += len(fresh)
        return len(fresh)

    def add_facts(self, seqs: Iterable[TokenSeq]) -> int:
        """Ingest facts in batches of ``cfg.batch_size`` in input order."""
        total = 0
        batch: List[TokenSeq] = []
        for seq in seqs:
            batch.append(tuple(seq))
            if len(batch) >= self.cfg.batch_size:
                total += self.add_batch(batch)
                batch = []
        if batch:
            total += self.add_batch(batch)
        return total

    def finalize(self) -> "IndexStats":
        if self._finalized:
            raise BackendWrite("builder already finalized")
        self._finalized = True
        runs = [_iter_run(p) for p in self._runs]
        merged = heapq.merge(
            *(
                ((_record_key(rec), run_idx, rec) for rec in run)
                for run_idx, run in enumerate(runs)
            )
        )
        offsets: List[int] = []
        try:
            with open(self.path, "wb") as out:
                out.write(b"\x00" * _HEADER.size)
                pos = _HEADER.size
                for _key, _run_idx, rec in merged:
                    offsets.append(pos)
                    out.write(struct.pack(">I", len(rec)))
                    out.write(rec)
                    pos += 4 + len(rec)
                offsets_offset = pos
                for off in offsets:
                    out.write(struct.pack(">Q", off))
                out.seek(0)
                out.write(
                    _HEADER.pack(
                        MAGIC,
                        FORMAT_VERSION,
                        16,
                        self.cfg.tokenizer_fingerprint.encode("ascii"),
                        self.cfg.cutoff_depth,
                        len(self._runs),
                        self._fact_count,
                        len(offsets),
                        _HEADER.size,
                        offsets_offset,
                    )
                )
        except OSError as exc:
            raise BackendWrite(str(exc)) from exc
        finally:
            self._tmp.cleanup()
        return read_stats(self.path)


def build_index(
    path: str | Path, seqs: Iterable[TokenSeq], cfg: IndexConfig
) -> "IndexStats":
    """One-shot build: chunk ``seqs`` into batches and finalize."""
    builder = IndexBuilder(path, cfg)
    builder.add_facts(seqs)
    return builder.finalize()


# ---------------------------------------------------------------------------
# reader


class _LruBytes:
    """Tiny LRU keyed cache bounded by the byte weight of its values."""

    def __init__(self, max_bytes: int):
        self.max_bytes = max_bytes
        self._items: OrderedDict = OrderedDict()
        self._weight = 0

    def get(self, key):
        item = self._items.get(key)
        if item is None:
            return None
        self._items.move_to_end(key)
        return item[0]

    def put(self, key, value, weight: int) -> None:
        if key in self._items:
            return
        self._items[key] = (value, weight)
        self._weight += weight
        while self._weight > self.max_bytes and len(self._items) > 1:
            _, (_, w) = self._items.popitem(last=False)
            self._weight -= w


class IndexReader:
    """Read side of a finalized index: point lookups with merge-on-read.

    Exposes the same ``node`` / ``next_tokens`` queries as the in-memory
    tree, so decoding sessions can run against either interchangeably.
    Safe for concurrent readers; merged views and decoded subtrees are
    cached for the life of the reader (subtree cache bounded by the
    FACTRIE_CACHE_BYTES environment variable).
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self._file = open(self.path, "rb")
            self._mm = mmap.mmap(self._file.fileno(), 0, access=mmap.ACCESS_READ)
        except OSError as exc:
            raise BackendRead(str(exc)) from exc
        if len(self._mm) < _HEADER.size:
            raise CorruptRecord("file shorter than header")
        (
            magic,
            version,
            fp_len,
            fp,
            self.cutoff_depth,
            self.batch_count,
            self.fact_count,
            self.record_count,
            self._records_offset,
            self._offsets_offset,
        ) = _HEADER.unpack_from(self._mm, 0)
        if magic != MAGIC:
            raise CorruptRecord("bad magic; not an index file")
        if version != FORMAT_VERSION:
            raise UnsupportedVersion(f"index format {version} not supported")
        self.tokenizer_fingerprint = fp[:fp_len].decode("ascii")
        end = self._offsets_offset + 8 * self.record_count
        if end > len(self._mm):
            raise CorruptRecord("offsets table extends past end of file")
        self._offsets = struct.unpack(
            f">{self.record_count}Q",
            self._mm[self._offsets_offset : end],
        )
        cache_bytes = int(os.environ.get(CACHE_BYTES_ENV, DEFAULT_CACHE_BYTES))
        self._subtrees = _LruBytes(cache_bytes)
        self._views: OrderedDict = OrderedDict()
        self._records_cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self._blob_lock = threading.Lock()

    def close(self) -> None:
        self._mm.close()
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- raw record access ---------------------------------------------------

    def _key_at(self, i: int) -> bytes:
        off = self._offsets[i]
        (rec_len,) = struct.unpack_from(">I", self._mm, off)
        (key_len,) = struct.unpack_from(">H", self._mm, off + 4)
        return self._mm[off + 6 : off + 6 + key_len]

    def _record_at(self, i: int) -> NodeRecord:
        off = self._offsets[i]
        (rec_len,) = struct.unpack_from(">I", self._mm, off)
        view = memoryview(self._mm)[off + 4 : off + 4 + rec_len]
        rec, _ = decode_record(view)
        return rec

    def records_for(self, prefix: TokenSeq) -> List[NodeRecord]:
        """All rows stored for a prefix (one per batch that touched it)."""
        key = encode_key(tuple(prefix))
        lo, hi = 0, self.record_count
        while lo < hi:
            mid = (lo + hi) // 2
            if self._key_at(mid) < key:
                lo = mid + 1
            else:
                hi = mid
        out = []
        i = lo
        while i < self.record_count and self._key_at(i) == key:
            out.append(self._record_at(i))
            i += 1
        return out

    def iter_records(self) -> Iterator[NodeRecord]:
        for i in range(self.record_count):
            yield self._record_at(i)

    # -- merged lookups --------------------------------------------------------

    def _records_cached(self, prefix: TokenSeq) -> List[NodeRecord]:
        """records_for with an LRU over keys; resolving every prefix of a
        fact re-reads the same ancestor rows, so this saves most searches."""
        with self._lock:
            cached = self._records_cache.get(prefix)
            if cached is not None:
                self._records_cache.move_to_end(prefix)
                return cached
        recs = self.records_for(prefix)
        with self._lock:
            self._records_cache[prefix] = recs
            if len(self._records_cache) > VIEW_CACHE_ENTRIES:
                self._records_cache.popitem(last=False)
        return recs

    def _blob_subtree(self, prefix: TokenSeq, ordinal: int, rec: NodeRecord) -> TrieNode:
        key = (prefix, ordinal)
        # Decode under the lock: concurrent readers get single-flight
        # population instead of duplicating a potentially large decode.
        with self._blob_lock:
            cached = self._subtrees.get(key)
            if cached is not None:
                return cached
            tree = decode_subtree(rec.blob)
            self._subtrees.put(key, tree, len(rec.blob))
            return tree

    def lookup(self, prefix: TokenSeq) -> NodeView:
        """Merged view of a prefix; NotFound when no row or chain covers it."""
        try:
            return self.node(tuple(prefix))
        except UnknownPrefix as exc:
            raise NotFound(str(exc)) from exc

    def node(self, prefix: TokenSeq) -> NodeView:
        prefix = tuple(prefix)
        with self._lock:
            view = self._views.get(prefix)
            if view is not None:
                self._views.move_to_end(prefix)
                return view
        view = self._resolve(prefix)
        with self._lock:
            self._views[prefix] = view
            if len(self._views) > VIEW_CACHE_ENTRIES:
                self._views.popitem(last=False)
        return view

    def _resolve(self, prefix: TokenSeq) -> NodeView:
        """Collect every row that contributes to this position and merge.

        Contributions come from rows keyed exactly at ``prefix`` and, for
        batches whose tree went single-leaf (or hit the cutoff) above it,
        from suffix chains and serialized subtrees keyed at an ancestor.
        """
        num_leaves = 0
        children: Counter = Counter()
        suffix: Optional[TokenSeq] = None
        contributions = 0
        top = min(len(prefix), self.cutoff_depth)
        for j in range(top + 1):
            recs = self._records_cached(prefix[:j])
            rest = prefix[j:]
            for ordinal, rec in enumerate(recs):
                if not rest:
                    contributions += 1
                    num_leaves += rec.num_leaves
                    if rec.flags == FLAG_COMPACT:
                        suffix = rec.suffix
                        if rec.suffix:
                            children[rec.suffix[0]] += 1
                    else:
                        for tok, cnt in zip(rec.next_tokens, rec.child_leaves):
                            children[tok] += cnt
                elif rec.flags == FLAG_COMPACT:
                    k = len(rest)
                    if rec.suffix is not None and rec.suffix[:k] == rest:
                        contributions += 1
                        num_leaves += 1
                        tail = rec.suffix[k:]
                        suffix = tail
                        if tail:
                            children[tail[0]] += 1
                elif rec.flags == FLAG_BLOB:
                    sub = self._blob_subtree(prefix[:j], ordinal, rec)
                    node = sub
                    ok = True
                    for tok in rest:
                        node = node.children.get(tok)
                        if node is None:
                            ok = False
                            break
                    if not ok:
                        continue
                    contributions += 1
                    num_leaves += node.num_leaves
                    for tok, child in node.children.items():
                        children[tok] += child.num_leaves
                    if node.num_leaves == 1:
                        chain = []
                        cur = node
                        while cur.children:
                            ((tok, nxt),) = cur.children.items()
                            chain.append(tok)
                            cur = nxt
                        suffix = tuple(chain)
        if not contributions:
            raise UnknownPrefix(f"prefix of length {len(prefix)} not in index")
        if num_leaves != 1:
            suffix = None
        return NodeView(num_leaves=num_leaves, children=dict(children), suffix=suffix)

    def next_tokens(
        self, prefix: TokenSeq, overlay: Optional[ConsumedOverlay] = None
    ) -> Dict[int, int]:
        return next_tokens(self, tuple(prefix), overlay)

    def iter_fact_paths(self) -> Iterator[TokenSeq]:
        """Every indexed fact as a token path, in key order (merged view)."""
        stack: List[TokenSeq] = [()]
        while stack:
            prefix = stack.pop()
            view = self.node(prefix)
            if view.is_leaf:
                yield prefix
                continue
            if view.suffix is not None:
                yield prefix + view.suffix
                continue
            for tok in sorted(view.children, reverse=True):
                stack.append(prefix + (tok,))


# ---------------------------------------------------------------------------
# stats and offline compaction


@dataclass
class IndexStats:
    fact_count: int
    record_count: int
    batch_count: int
    cutoff_depth: int
    tokenizer_fingerprint: str
    total_bytes: int
    records_by_kind: Dict[str, int]
    duplicate_key_histogram: Dict[int, int]
    blob_size_percentiles: Dict[str, int]
    blob_count: int
    distinct_keys: int

    def to_dict(self) -> dict:
        return {
            "fact_count": self.fact_count,
            "record_count": self.record_count,
            "batch_count": self.batch_count,
            "cutoff_depth": self.cutoff_depth,
            "tokenizer_fingerprint": self.tokenizer_fingerprint,
            "total_bytes": self.total_bytes,
            "records_by_kind": self.records_by_kind,
            "duplicate_key_histogram": {
                str(k): v for k, v in sorted(self.duplicate_key_histogram.items())
            },
            "blob_size_percentiles": self.blob_size_percentiles,
            "blob_count": self.blob_count,
            "distinct_keys": self.distinct_keys,
        }


def _percentile(sorted_vals: List[int], q: float) -> int:
    if not sorted_vals:
        return 0
    idx = min(len(sorted_vals) - 1, int(round(q * (len(sorted_vals) - 1))))
    return sorted_vals[idx]


def read_stats(path: str | Path) -> IndexStats:
    reader = IndexReader(path)
    try:
        kinds = Counter()
        dup_hist: Counter = Counter()
        blob_sizes: List[int] = []
        prev_key: Optional[bytes] = None
        run = 0
        distinct = 0
        for i in range(reader.record_count):
            key = bytes(reader._key_at(i))
            rec = reader._record_at(i)
            kinds[
                {FLAG_STANDARD: "standard", FLAG_COMPACT: "compacted", FLAG_BLOB: "blob"}[
                    rec.flags
                ]
            ] += 1
            if rec.blob is not None:
                blob_sizes.append(len(rec.blob))
            if key == prev_key:
                run += 1
            else:
                if prev_key is not None:
                    dup_hist[run] += 1
                    distinct += 1
                prev_key = key
                run = 1
        if prev_key is not None:
            dup_hist[run] += 1
            distinct += 1
        blob_sizes.sort()
        percentiles = {
            "p50": _percentile(blob_sizes, 0.50),
            "p90": _percentile(blob_sizes, 0.90),
            "p99": _percentile(blob_sizes, 0.99),
            "max": blob_sizes[-1] if blob_sizes else 0,
        }
        return IndexStats(
            fact_count=reader.fact_count,
            record_count=reader.record_count,
            batch_count=reader.batch_count,
            cutoff_depth=reader.cutoff_depth,
            tokenizer_fingerprint=reader.tokenizer_fingerprint,
            total_bytes=reader.path.stat().st_size,
            records_by_kind=dict(kinds),
            duplicate_key_histogram=dict(dup_hist),
            blob_size_percentiles=percentiles,
            blob_count=len(blob_sizes),
            distinct_keys=distinct,
        )
    finally:
        reader.close()


def compact_index(src: str | Path, dst: str | Path) -> IndexStats:
    """Offline merge: rebuild as a single batch so every prefix has one row.

    Not required for correctness (the reader merges duplicates on the fly);
    useful to shed per-batch row duplication after a many-batch ingestion.
    """
    reader = IndexReader(src)
    try:
        cfg = IndexConfig(
            tokenizer_fingerprint=reader.tokenizer_fingerprint,
            cutoff_depth=reader.cutoff_depth,
            batch_size=max(reader.fact_count, 1),
        )
        builder = IndexBuilder(dst, cfg)
        builder.add_batch(reader.iter_fact_paths())
        return builder.finalize()
    finally:
        reader.close()
