"""Golden-fixture parity: the adapter's masked logits must be element-wise
identical to what the engine produced when the fixtures were exported."""

import numpy as np
import pytest

from conftest import GOLDEN_COUNT
from factrie_adapter import make_processor

NEG_INF = float("-inf")


def expected_from(fixture):
    return np.array(
        [NEG_INF if v is None else v for v in fixture["masked"]], dtype=np.float64
    )


def test_parity_on_all_golden_fixtures(kb):
    fixtures = kb["fixtures"]
    assert len(fixtures) == GOLDEN_COUNT
    for i, fx in enumerate(fixtures):
        processor = make_processor(kb["index"])
        logits = np.array(fx["logits"], dtype=np.float64)
        out = processor(fx["input_ids"], logits)
        expected = expected_from(fx)
        assert out.tobytes() == expected.tobytes(), f"fixture {i} diverged"
        assert sorted(np.flatnonzero(out > NEG_INF).tolist()) == fx["allowed"]


def test_incremental_calls_match_single_shot(kb):
    fx = kb["fixtures"][0]
    ids = fx["input_ids"]
    logits = np.array(fx["logits"], dtype=np.float64)
    processor = make_processor(kb["index"])
    dummy = np.zeros_like(logits)
    for i in range(1, len(ids)):
        processor(ids[:i], dummy)
    out = processor(ids, logits)
    assert out.tobytes() == expected_from(fx).tobytes()


def test_normal_mode_is_identity(kb):
    processor = make_processor(kb["index"])
    logits = np.linspace(-3, 3, processor.handle.vocab_size)
    out = processor([65, 66, 67], logits)  # plain text, no trigger
    assert np.array_equal(out, logits)


def test_batched_row_shape_accepted(kb):
    fx = kb["fixtures"][1]
    processor = make_processor(kb["index"])
    logits = np.array([fx["logits"]], dtype=np.float64)
    ids = np.array([fx["input_ids"]])
    out = processor(ids, logits)
    assert out.shape == logits.shape
    assert out[0].tobytes() == expected_from(fx).tobytes()


def test_rejects_non_extending_ids(kb):
    from factrie.errors import EngineError

    processor = make_processor(kb["index"])
    dummy = np.zeros(processor.handle.vocab_size)
    processor([1, 2, 3], dummy)
    with pytest.raises(EngineError):
        processor([9, 9], dummy)


def test_host_loop_steered_to_existing_fact(tmp_path_factory):
    """A host greedy loop whose model insists on a nonexistent statement
    still lands on a fact from the KB, with only allowed branches taken."""
    from pathlib import Path

    from conftest import run_cli
    from factrie.tokenizer import load_tokenizer

    fixtures = Path(__file__).resolve().parents[2] / "fixtures"
    root = tmp_path_factory.mktemp("movies")
    index = root / "movies.ftrx"
    run_cli(
        "ingest",
        "--triples", fixtures / "movies.triples.tsv",
        "--labels", fixtures / "movies.labels.tsv",
        "--index", index,
        "--tokenizer", "vocab",
        "--vocab-extra", fixtures / "movies.questions.txt",
    )
    tok = load_tokenizer(str(index) + ".tokenizer.json")
    processor = make_processor(index)
    ids = tok.encode("The question asks for a birth date.\nFact:")
    scores = np.zeros(tok.vocab_size)
    # The model keeps pushing toward "<Danny Boyle> <born> ..." which is
    # not in the KB; "date of birth" is.
    preferred = "<Danny Boyle> <born> <1960-09-15> ."
    for _ in range(60):
        out = processor(ids, scores)
        if not np.isinf(out).any() and len(ids) > 45:
            break
        emitted = tok.decode(ids, errors="replace").split("Fact:")[-1]
        remaining = (" " + preferred)[len(emitted):]
        scores = np.zeros(tok.vocab_size)
        if remaining:
            scores[tok.encode(remaining)[0]] = 9.0
        ids = ids + [int(np.argmax(out))]
    report = processor.report()
    assert [f.text for f in report.facts] == [
        "<Danny Boyle> <date of birth> <1956-10-20> ."
    ]
