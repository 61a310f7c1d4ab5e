import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_tree, euro_fact_list, next_token_oracle, random_fact_texts
from factrie.errors import AlreadyConsumed, PrefixConflict, UnknownPrefix
from factrie.tokenizer import ByteTokenizer
from factrie.trie import ConsumedOverlay, FactTree, consume_fact


def check_leaf_sums(node):
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur.children:
            assert cur.num_leaves == sum(c.num_leaves for c in cur.children.values())
            stack.extend(cur.children.values())
        else:
            assert cur.num_leaves == 1


class TestInsert:
    def test_single_path(self):
        tree = FactTree("x" * 16)
        assert tree.insert((1, 2, 3)) is True
        assert tree.root.num_leaves == 1

    def test_duplicate_is_noop(self):
        tree = FactTree("x" * 16)
        tree.insert((1, 2, 3))
        assert tree.insert((1, 2, 3)) is False
        assert tree.fact_count == 1
        check_leaf_sums(tree.root)

    def test_prefix_conflict_shorter_new(self):
        tree = FactTree("x" * 16)
        tree.insert((1, 2, 3))
        with pytest.raises(PrefixConflict):
            tree.insert((1, 2))

    def test_prefix_conflict_longer_new(self):
        tree = FactTree("x" * 16)
        tree.insert((1, 2))
        with pytest.raises(PrefixConflict):
            tree.insert((1, 2, 3))

    def test_conflict_leaves_tree_untouched(self):
        tree = FactTree("x" * 16)
        tree.insert((1, 2, 3))
        with pytest.raises(PrefixConflict):
            tree.insert((1, 2))
        assert tree.fact_count == 1
        check_leaf_sums(tree.root)

    def test_euro_fixture_counts(self, byte_tok, euro_tree):
        prefix = tuple(byte_tok.encode(" <Euro> <country> <"))
        assert euro_tree.node(prefix).num_leaves == 26
        assert euro_tree.fact_count == 26


class TestBulkInsert:
    def test_matches_individual_inserts(self):
        rng = random.Random(11)
        tok = ByteTokenizer()
        facts = random_fact_texts(rng, 300)
        seqs = sorted(tuple(tok.encode_fact(f)) for f in facts)
        bulk = FactTree(tok.fingerprint)
        bulk.insert_sorted(seqs)
        slow = FactTree(tok.fingerprint)
        shuffled = list(seqs)
        rng.shuffle(shuffled)
        for s in shuffled:
            slow.insert(s)
        oracle = next_token_oracle(seqs)
        for prefix in oracle:
            assert bulk.node(prefix) == slow.node(prefix)
        check_leaf_sums(bulk.root)

    def test_sorted_duplicates_skipped(self):
        tree = FactTree("x" * 16)
        assert tree.insert_sorted([(1, 2), (1, 2), (1, 3)]) == 2

    def test_unsorted_prefix_conflict_detected(self):
        tree = FactTree("x" * 16)
        with pytest.raises(PrefixConflict):
            tree.insert_sorted([(1, 2), (1, 2, 3)])


class TestNextTokens:
    def test_oracle_equivalence_small(self):
        rng = random.Random(5)
        tok = ByteTokenizer()
        facts = random_fact_texts(rng, 200)
        seqs = [tuple(tok.encode_fact(f)) for f in facts]
        tree = build_tree(tok, facts)
        oracle = next_token_oracle(seqs)
        for prefix, expected in oracle.items():
            assert tree.next_tokens(prefix) == expected

    def test_unknown_prefix(self, euro_tree):
        with pytest.raises(UnknownPrefix):
            euro_tree.next_tokens((9999,))

    def test_leaf_prefix_has_no_continuations(self, byte_tok, euro_tree):
        leaf = tuple(byte_tok.encode_fact("<Euro> <country> <Italy> ."))
        assert euro_tree.next_tokens(leaf) == {}

    def test_single_child_counts(self):
        tree = FactTree("x" * 16)
        tree.insert((1, 2, 3))
        assert tree.next_tokens((1, 2)) == {3: 1}


class TestOverlay:
    def test_consume_decrements_along_path(self, byte_tok, euro_tree):
        overlay = ConsumedOverlay()
        seq = tuple(byte_tok.encode_fact("<Euro> <country> <Slovakia> ."))
        s_prefix = tuple(byte_tok.encode(" <Euro> <country> <S"))
        assert euro_tree.next_tokens(s_prefix[:-1], overlay)[s_prefix[-1]] == 2
        consume_fact(euro_tree, overlay, seq)
        assert euro_tree.next_tokens(s_prefix[:-1], overlay)[s_prefix[-1]] == 1

    def test_branch_vanishes_when_spent(self, byte_tok, euro_tree):
        overlay = ConsumedOverlay()
        for name in ("Slovakia", "Slovenia"):
            consume_fact(
                euro_tree,
                overlay,
                tuple(byte_tok.encode_fact(f"<Euro> <country> <{name}> .")),
            )
        base = tuple(byte_tok.encode(" <Euro> <country> <"))
        allowed = euro_tree.next_tokens(base, overlay)
        assert ord("S") not in allowed
        assert ord("I") in allowed  # Italy and Ireland remain

    def test_double_consume_rejected(self, byte_tok, euro_tree):
        overlay = ConsumedOverlay()
        seq = tuple(byte_tok.encode_fact("<Euro> <country> <Malta> ."))
        consume_fact(euro_tree, overlay, seq)
        with pytest.raises(AlreadyConsumed):
            consume_fact(euro_tree, overlay, seq)

    def test_base_tree_never_mutated(self, byte_tok, euro_tree):
        overlay = ConsumedOverlay()
        seq = tuple(byte_tok.encode_fact("<Euro> <country> <Malta> ."))
        consume_fact(euro_tree, overlay, seq)
        assert euro_tree.node(()).num_leaves == 26
        assert euro_tree.next_tokens(seq[:-1]) != {}

    def test_exhaustion_empties_root(self, byte_tok, euro_tree):
        overlay = ConsumedOverlay()
        for fact in euro_fact_list():
            consume_fact(euro_tree, overlay, tuple(byte_tok.encode_fact(fact)))
        assert euro_tree.next_tokens((), overlay) == {}

    def test_fork_isolation(self, byte_tok, euro_tree):
        overlay = ConsumedOverlay()
        fork = overlay.fork()
        seq = tuple(byte_tok.encode_fact("<Euro> <country> <Malta> ."))
        consume_fact(euro_tree, fork, seq)
        assert overlay.consumed(seq) == 0
        assert fork.consumed(seq) == 1

    def test_consume_non_leaf_rejected(self, byte_tok, euro_tree):
        with pytest.raises(UnknownPrefix):
            consume_fact(
                euro_tree,
                ConsumedOverlay(),
                tuple(byte_tok.encode(" <Euro> <country> <S")),
            )


class TestNoRepeatCompleteness:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_any_policy_enumerates_each_fact_once(self, seed):
        rng = random.Random(seed)
        tok = ByteTokenizer()
        facts = random_fact_texts(rng, 40)
        tree = build_tree(tok, facts)
        overlay = ConsumedOverlay()
        emitted = []
        while True:
            allowed = tree.next_tokens((), overlay)
            if not allowed:
                break
            path = []
            while True:
                table = tree.next_tokens(tuple(path), overlay)
                if not table:
                    break
                path.append(rng.choice(sorted(table)))
            consume_fact(tree, overlay, tuple(path))
            emitted.append(tok.decode(tuple(path))[1:])
        assert sorted(emitted) == sorted(facts)


@settings(max_examples=60, deadline=None)
@given(
    st.sets(
        st.tuples(
            st.integers(min_value=0, max_value=7),
            st.integers(min_value=0, max_value=7),
            st.integers(min_value=0, max_value=7),
        ),
        min_size=1,
        max_size=40,
    )
)
def test_leaf_sum_invariant_random_trees(seqs):
    tree = FactTree("x" * 16)
    for seq in sorted(seqs):
        tree.insert(seq)
    check_leaf_sums(tree.root)
    oracle = next_token_oracle(list(seqs))
    for prefix, expected in oracle.items():
        assert tree.next_tokens(prefix) == expected
