import json
import subprocess
import sys

import pytest

GOLDEN_COUNT = 1000


def run_cli(*argv):
    """Drive the primary component through its command-line interface."""
    proc = subprocess.run(
        [sys.executable, "-m", "factrie.cli", *map(str, argv)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


@pytest.fixture(scope="session")
def kb(tmp_path_factory):
    """Synthetic KB indexed by the primary CLI, plus its golden fixtures."""
    root = tmp_path_factory.mktemp("kb")
    triples, labels = root / "triples.tsv", root / "labels.tsv"
    index = root / "kb.ftrx"
    facts_out = root / "facts.txt"
    golden = root / "golden.jsonl"
    run_cli("synth", "--facts", 400, "--seed", 11, "--triples", triples, "--labels", labels)
    run_cli(
        "ingest",
        "--triples", triples,
        "--labels", labels,
        "--index", index,
        "--batch-size", 128,
        "--facts-out", facts_out,
    )
    run_cli(
        "export-golden",
        "--index", index,
        "--out", golden,
        "--count", GOLDEN_COUNT,
        "--seed", 7,
    )
    fact_set = set(facts_out.read_text(encoding="utf-8").splitlines())
    fixtures = [
        json.loads(line) for line in golden.read_text(encoding="utf-8").splitlines()
    ]
    return {"index": index, "facts": fact_set, "fixtures": fixtures}
