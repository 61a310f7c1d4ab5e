import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_tree, next_token_oracle, random_fact_texts
from factrie.errors import CorruptRecord, NotFound, UnknownPrefix, UnsupportedVersion
from factrie.store import (
    FLAG_BLOB,
    FLAG_COMPACT,
    FLAG_STANDARD,
    IndexBuilder,
    IndexConfig,
    IndexReader,
    NodeRecord,
    build_index,
    compact_index,
    decode_key,
    decode_record,
    decode_subtree,
    encode_key,
    encode_record,
    encode_subtree,
    iter_batch_records,
    read_stats,
)
from factrie.tokenizer import ByteTokenizer
from factrie.trie import FactTree


def cfg_for(tok, **kw):
    kw.setdefault("cutoff_depth", 7)
    kw.setdefault("batch_size", 1000)
    return IndexConfig(tokenizer_fingerprint=tok.fingerprint, **kw)


def tree_of(seqs):
    tree = FactTree("x" * 16)
    for s in sorted(seqs):
        tree.insert(s)
    return tree


class TestKeyCodec:
    def test_empty_key(self):
        assert encode_key(()) == b""
        assert decode_key(b"") == ()

    def test_round_trip(self):
        assert decode_key(encode_key((1, 70000, 0))) == (1, 70000, 0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.integers(min_value=0, max_value=2**32 - 1), max_size=8),
        st.lists(st.integers(min_value=0, max_value=2**32 - 1), max_size=8),
    )
    def test_byte_order_equals_sequence_order(self, a, b):
        a, b = tuple(a), tuple(b)
        assert (encode_key(a) < encode_key(b)) == (a < b)
        assert (encode_key(a) == encode_key(b)) == (a == b)


class TestSubtreeCodec:
    def test_round_trip_structural(self):
        tree = tree_of([(1, 2, 3), (1, 2, 4), (1, 5), (9,)])
        blob = encode_subtree(tree.root)
        back = decode_subtree(blob)
        assert back.num_leaves == 4
        stack = [(tree.root, back)]
        while stack:
            a, b = stack.pop()
            assert sorted(a.children) == sorted(b.children)
            assert a.num_leaves == b.num_leaves
            for tok in a.children:
                stack.append((a.children[tok], b.children[tok]))

    def test_version_header(self):
        blob = encode_subtree(tree_of([(1,)]).root)
        with pytest.raises(UnsupportedVersion):
            decode_subtree(bytes([99]) + blob[1:])

    def test_trailing_garbage_rejected(self):
        blob = encode_subtree(tree_of([(1,)]).root)
        with pytest.raises(CorruptRecord):
            decode_subtree(blob + b"\x00")

    @settings(max_examples=80, deadline=None)
    @given(
        st.sets(
            st.lists(
                st.integers(min_value=0, max_value=5), min_size=3, max_size=3
            ).map(tuple),
            min_size=1,
            max_size=25,
        )
    )
    def test_round_trip_random(self, seqs):
        root = tree_of(seqs).root
        back = decode_subtree(encode_subtree(root))
        assert back.num_leaves == root.num_leaves


class TestRecordCodec:
    @pytest.mark.parametrize(
        "rec",
        [
            NodeRecord((), FLAG_STANDARD, 5, (1, 2), (3, 2)),
            NodeRecord((694,), FLAG_COMPACT, 1, suffix=(29, 5, 662)),
            NodeRecord((3, 4), FLAG_COMPACT, 1, suffix=()),
            NodeRecord(
                (1, 2, 3),
                FLAG_BLOB,
                7,
                (21538, 4168),
                (4, 3),
                blob=encode_subtree(tree_of([(21538, 1), (21538, 2), (4168, 9)]).root),
            ),
        ],
    )
    def test_round_trip(self, rec):
        back, consumed = decode_record(encode_record(rec))
        assert back == rec
        assert consumed == len(encode_record(rec))


class TestBatchRecords:
    def test_single_fact_tree_compacts_to_one_record(self):
        tok = ByteTokenizer()
        tree = tree_of([(10, 11, 12, 13, 14)])
        recs = list(iter_batch_records(tree, cfg_for(tok)))
        assert len(recs) == 1
        assert recs[0].flags == FLAG_COMPACT
        assert recs[0].prefix == ()
        assert recs[0].suffix == (10, 11, 12, 13, 14)

    def test_unique_continuation_record_shape(self):
        # One branch has a single remaining fact: its record carries the
        # whole remaining suffix with empty child counts.
        tree = tree_of([(694, 29, 662), (5, 1, 2), (5, 1, 3)])
        recs = {r.prefix: r for r in iter_batch_records(tree, cfg_for(ByteTokenizer()))}
        rec = recs[(694,)]
        assert rec.flags == FLAG_COMPACT
        assert rec.num_leaves == 1
        assert rec.suffix == (29, 662)
        assert rec.child_leaves == ()

    def test_blob_written_at_cutoff(self):
        seqs = [(1, 2, 3, 4, 5, 6, 7, 8, 9), (1, 2, 3, 4, 5, 6, 7, 8, 10)]
        cfg = IndexConfig(tokenizer_fingerprint="x" * 16, cutoff_depth=7, batch_size=10)
        recs = list(iter_batch_records(tree_of(seqs), cfg))
        by_depth = {len(r.prefix): r for r in recs}
        assert by_depth[7].flags == FLAG_BLOB
        assert max(len(r.prefix) for r in recs) == 7

    def test_keys_emitted_sorted(self):
        rng = random.Random(3)
        tok = ByteTokenizer()
        facts = random_fact_texts(rng, 50)
        tree = build_tree(tok, facts)
        keys = [encode_key(r.prefix) for r in iter_batch_records(tree, cfg_for(tok))]
        assert keys == sorted(keys)

    def test_compaction_disabled_writes_per_node_rows(self):
        cfg_on = cfg_for(ByteTokenizer())
        cfg_off = cfg_for(ByteTokenizer(), compaction=False)
        tree = tree_of([(10, 11, 12, 13, 14)])
        on = list(iter_batch_records(tree, cfg_on))
        off = list(iter_batch_records(tree, cfg_off))
        assert len(on) == 1
        assert len(off) > len(on)


def build_reader(tmp_path, facts, tok, name="kb.ftrx", **cfg_kw):
    seqs = sorted({tuple(tok.encode_fact(f)) for f in facts})
    cfg = cfg_for(tok, **cfg_kw)
    path = tmp_path / name
    build_index(path, seqs, cfg)
    return IndexReader(path), seqs


class TestReadPath:
    def test_disk_equals_memory_for_every_prefix(self, tmp_path):
        rng = random.Random(7)
        tok = ByteTokenizer()
        facts = random_fact_texts(rng, 400)
        reader, seqs = build_reader(tmp_path, facts, tok, batch_size=37)
        oracle = next_token_oracle(seqs)
        for prefix, expected in oracle.items():
            assert reader.next_tokens(prefix) == expected

    def test_duplicate_rows_exist_before_merge(self, tmp_path):
        tok = ByteTokenizer()
        facts = [f"<s{i}> <p> <o{i}> ." for i in range(20)]
        reader, _ = build_reader(tmp_path, facts, tok, batch_size=5)
        assert reader.batch_count == 4
        roots = reader.records_for(())
        assert len(roots) == 4

    def test_merge_sums_counts(self, tmp_path):
        tok = ByteTokenizer()
        facts = [f"<s{i}> <p> <o{i}> ." for i in range(20)]
        reader, seqs = build_reader(tmp_path, facts, tok, batch_size=5)
        root = reader.node(())
        assert root.num_leaves == 20
        roots = reader.records_for(())
        assert sum(r.num_leaves for r in roots) == 20

    def test_not_found(self, tmp_path):
        tok = ByteTokenizer()
        reader, _ = build_reader(tmp_path, ["<a> <b> <c> ."], tok)
        with pytest.raises(NotFound):
            reader.lookup((9999,))
        with pytest.raises(UnknownPrefix):
            reader.next_tokens((9999,))

    def test_fingerprint_and_counts_in_header(self, tmp_path):
        tok = ByteTokenizer()
        reader, seqs = build_reader(tmp_path, ["<a> <b> <c> ."], tok)
        assert reader.tokenizer_fingerprint == tok.fingerprint
        assert reader.fact_count == len(seqs)

    def test_iter_fact_paths_round_trip(self, tmp_path):
        rng = random.Random(13)
        tok = ByteTokenizer()
        facts = random_fact_texts(rng, 60)
        reader, seqs = build_reader(tmp_path, facts, tok, batch_size=11)
        assert sorted(reader.iter_fact_paths()) == sorted(seqs)

    def test_deep_prefix_resolved_inside_blob(self, tmp_path):
        tok = ByteTokenizer()
        facts = [
            "<shared> <p> <alpha> .",
            "<shared> <p> <beta> .",
            "<shared> <q> <gamma> .",
        ]
        reader, seqs = build_reader(tmp_path, facts, tok, cutoff_depth=4)
        oracle = next_token_oracle(seqs)
        for prefix, expected in oracle.items():
            assert reader.next_tokens(prefix) == expected


class TestBatchPartitionEquivalence:
    def test_random_partitions_match_single_batch(self, tmp_path):
        rng = random.Random(23)
        tok = ByteTokenizer()
        facts = random_fact_texts(rng, 300)
        seqs = sorted({tuple(tok.encode_fact(f)) for f in facts})
        single_path = tmp_path / "single.ftrx"
        build_index(single_path, seqs, cfg_for(tok, batch_size=len(seqs)))
        single = IndexReader(single_path)
        shuffled = list(seqs)
        rng.shuffle(shuffled)
        builder = IndexBuilder(tmp_path / "multi.ftrx", cfg_for(tok, batch_size=len(seqs)))
        i = 0
        while i < len(shuffled):
            size = rng.randrange(1, 60)
            builder.add_batch(shuffled[i : i + size])
            i += size
        builder.finalize()
        multi = IndexReader(tmp_path / "multi.ftrx")
        oracle = next_token_oracle(seqs)
        for prefix in oracle:
            assert multi.node(prefix) == single.node(prefix)
        single.close()
        multi.close()

    def test_cross_batch_duplicates_dropped(self, tmp_path):
        tok = ByteTokenizer()
        seqs = [tuple(tok.encode_fact(f"<s{i}> <p> <o> .")) for i in range(10)]
        builder = IndexBuilder(tmp_path / "kb.ftrx", cfg_for(tok))
        assert builder.add_batch(seqs) == 10
        assert builder.add_batch(seqs) == 0
        builder.finalize()
        reader = IndexReader(tmp_path / "kb.ftrx")
        assert reader.node(()).num_leaves == 10
        reader.close()


class TestDeterminism:
    def test_rebuild_is_byte_identical(self, tmp_path):
        rng = random.Random(99)
        tok = ByteTokenizer()
        facts = random_fact_texts(rng, 120)
        seqs = sorted({tuple(tok.encode_fact(f)) for f in facts})
        a = tmp_path / "a.ftrx"
        b = tmp_path / "b.ftrx"
        build_index(a, seqs, cfg_for(tok, batch_size=17))
        build_index(b, seqs, cfg_for(tok, batch_size=17))
        assert a.read_bytes() == b.read_bytes()


class TestStatsAndCompact:
    def test_stats_fields(self, tmp_path):
        tok = ByteTokenizer()
        facts = [f"<s{i}> <p> <o{i}> ." for i in range(30)]
        seqs = sorted({tuple(tok.encode_fact(f)) for f in facts})
        path = tmp_path / "kb.ftrx"
        build_index(path, seqs, cfg_for(tok, batch_size=7))
        stats = read_stats(path)
        assert stats.fact_count == 30
        assert stats.record_count == sum(
            count * k for k, count in stats.duplicate_key_histogram.items()
        )
        assert stats.total_bytes == path.stat().st_size
        assert set(stats.blob_size_percentiles) == {"p50", "p90", "p99", "max"}

    def test_cache_bytes_env_bounds_subtree_cache(self, tmp_path, monkeypatch):
        from factrie.store import CACHE_BYTES_ENV

        tok = ByteTokenizer()
        facts = [f"<shared prefix here> <p{i}> <o{i}> ." for i in range(40)]
        monkeypatch.setenv(CACHE_BYTES_ENV, "64")
        reader, seqs = build_reader(tmp_path, facts, tok, cutoff_depth=4)
        for seq in seqs:
            for i in range(len(seq)):
                reader.node(seq[: i + 1])
        assert reader._subtrees._weight <= max(
            64, max(len(r.blob) for r in reader.iter_records() if r.blob)
        )
        reader.close()

    def test_concurrent_readers_agree(self, tmp_path):
        from concurrent.futures import ThreadPoolExecutor

        rng = random.Random(8)
        tok = ByteTokenizer()
        facts = random_fact_texts(rng, 200)
        reader, seqs = build_reader(tmp_path, facts, tok, batch_size=31, cutoff_depth=5)
        oracle = next_token_oracle(seqs)
        prefixes = list(oracle)

        def worker(offset):
            for prefix in prefixes[offset::4]:
                assert reader.next_tokens(prefix) == oracle[prefix]
            return True

        with ThreadPoolExecutor(max_workers=4) as pool:
            assert all(pool.map(worker, range(4)))
        reader.close()

    def test_compact_removes_duplicates_preserves_answers(self, tmp_path):
        rng = random.Random(31)
        tok = ByteTokenizer()
        facts = random_fact_texts(rng, 150)
        seqs = sorted({tuple(tok.encode_fact(f)) for f in facts})
        src = tmp_path / "src.ftrx"
        build_index(src, seqs, cfg_for(tok, batch_size=13))
        dst = tmp_path / "dst.ftrx"
        compact_index(src, dst)
        stats = read_stats(dst)
        assert stats.batch_count == 1
        assert set(stats.duplicate_key_histogram) == {1}
        with IndexReader(dst) as reader:
            oracle = next_token_oracle(seqs)
            for prefix, expected in oracle.items():
                assert reader.next_tokens(prefix) == expected
