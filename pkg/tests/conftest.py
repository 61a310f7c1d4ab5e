import random

import pytest

from factrie.store import IndexConfig, build_index
from factrie.tokenizer import ByteTokenizer, VocabTokenizer
from factrie.trie import FactTree


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        outcome = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {name}: {outcome}", flush=True)

# Exactly two countries start with "S" so consuming both makes the whole
# "S" branch vanish from the shared prefix.
EURO_COUNTRIES = [
    "Austria", "Belgium", "Croatia", "Cyprus", "Estonia", "Finland",
    "France", "Germany", "Greece", "Ireland", "Italy", "Latvia",
    "Lithuania", "Luxembourg", "Malta", "Netherlands", "Portugal",
    "Slovakia", "Slovenia", "Andorra", "Monaco", "Kosovo", "Montenegro",
    "Vatican City", "Martinique", "Guadeloupe",
]

MOVIE_FACTS = [
    "<Danny Boyle> <date of birth> <1956-10-20> .",
    "<Danny Boyle> <given name> <Danny> .",
    "<Slumdog Millionaire> <director> <Danny Boyle> .",
    "<Slumdog Millionaire> <publication date> <2008-08-27> .",
    "<Trainspotting> <director> <Danny Boyle> .",
]

MOVIE_QUESTIONS = [
    "When was Danny Boyle born?",
    "When was the director of Slumdog Millionaire born?",
    "Who directed Trainspotting?",
]


def euro_fact_list():
    return [f"<Euro> <country> <{c}> ." for c in EURO_COUNTRIES]


def build_tree(tokenizer, facts):
    tree = FactTree(tokenizer.fingerprint)
    for f in facts:
        tree.insert(tokenizer.encode_fact(f))
    return tree


def build_disk_index(path, tokenizer, facts, cutoff_depth=7, batch_size=None, compaction=True):
    seqs = sorted({tuple(tokenizer.encode_fact(f)) for f in facts})
    cfg = IndexConfig(
        tokenizer_fingerprint=tokenizer.fingerprint,
        cutoff_depth=cutoff_depth,
        batch_size=batch_size or max(len(seqs), 1),
        compaction=compaction,
    )
    build_index(path, seqs, cfg)
    return cfg


def random_fact_texts(rng: random.Random, count: int, n_entities=None, n_preds=6):
    """Small random KBs for oracle comparisons; labels are short so byte
    paths stay manageable."""
    n_entities = n_entities or max(4, count // 2)
    entities = [f"e{rng.randrange(10 ** 6):06d}" for _ in range(n_entities)]
    preds = [f"rel{p}" for p in range(n_preds)]
    facts = set()
    while len(facts) < count:
        s = rng.choice(entities)
        p = rng.choice(preds)
        o = rng.choice(entities)
        facts.add(f"<{s}> <{p}> <{o}> .")
    return sorted(facts)


def next_token_oracle(token_seqs):
    """Enumerate every fact's prefixes once and group the next tokens;
    independent of the trie and store code paths."""
    table = {}
    for seq in set(token_seqs):
        for i in range(len(seq)):
            bucket = table.setdefault(seq[:i], {})
            bucket[seq[i]] = bucket.get(seq[i], 0) + 1
        table.setdefault(seq, {})
    return table


@pytest.fixture(scope="session")
def byte_tok():
    return ByteTokenizer()


@pytest.fixture(scope="session")
def movie_tok():
    return VocabTokenizer.from_corpus(MOVIE_FACTS + MOVIE_QUESTIONS)


@pytest.fixture()
def euro_tree(byte_tok):
    return build_tree(byte_tok, euro_fact_list())


@pytest.fixture()
def movie_tree(movie_tok):
    return build_tree(movie_tok, MOVIE_FACTS)
