"""Operator command line.

Subcommands:

* ``ingest``        triples + labels -> finalized index file (+ stats)
* ``query``         allowed-token table for a text prefix
* ``decode``        run one question with a scripted model
* ``eval``          run a dataset, score it, write report + figure
* ``bench``         constrained vs unconstrained per-token timing + figure
* ``stats``         index statistics + figure
* ``compact``       offline single-batch rebuild of an index
* ``synth``         generate a seeded synthetic triple/label fixture
* ``export-golden`` golden (input_ids, logits) -> masked-logits fixtures

Exit codes: 0 success, 2 input error, 3 index corruption, 4 engine error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .bench import run_bench
from .engine import ConstraintEngine, Mode
from .errors import (
    CorruptRecord,
    EngineError,
    FactrieError,
    InputError,
    NotFound,
    StoreError,
    TrieError,
    UnknownPrefix,
    UnsupportedVersion,
)
from .manifest import RunManifest, manifest_path_for
from .metrics import aggregate, gold_by_id
from .orchestrator import (
    PromptConfig,
    Transcript,
    read_dataset,
    read_scripts,
    run_question,
    write_transcripts,
)
from .plotting import save_bench_figure, save_eval_figure, save_stats_figure
from .store import IndexConfig, IndexBuilder, IndexReader, compact_index, read_stats
from .synth import INVERSE_NAMES, generate_kb
from .tokenizer import (
    ByteTokenizer,
    Tokenizer,
    VocabTokenizer,
    load_tokenizer,
    save_tokenizer,
)
from .verbalize import LabelTable, facts_from_triples, load_inverses, read_triples

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CORRUPT = 3
EXIT_ENGINE = 4


def _tokenizer_sidecar(index_path: str | Path) -> Path:
    return Path(str(index_path) + ".tokenizer.json")


def _load_index(path: str) -> IndexReader:
    if not Path(path).exists():
        raise InputError(f"index file not found: {path}")
    return IndexReader(path)


def _load_bound_tokenizer(index_path: str, reader: IndexReader) -> Tokenizer:
    sidecar = _tokenizer_sidecar(index_path)
    if not sidecar.exists():
        raise InputError(f"tokenizer sidecar not found: {sidecar}")
    tok = load_tokenizer(sidecar)
    if tok.fingerprint != reader.tokenizer_fingerprint:
        raise InputError(
            f"tokenizer sidecar fingerprint {tok.fingerprint} does not match "
            f"index fingerprint {reader.tokenizer_fingerprint}"
        )
    return tok


def _build_tokenizer(
    kind: str, corpus_lines: List[str], extra_path: Optional[str] = None
) -> Tokenizer:
    if kind == "byte":
        return ByteTokenizer()
    if kind == "vocab":
        corpus = list(corpus_lines)
        if extra_path:
            corpus.extend(Path(extra_path).read_text(encoding="utf-8").splitlines())
        return VocabTokenizer.from_corpus(corpus)
    raise InputError(f"unknown tokenizer kind {kind!r} (expected byte|vocab)")


def _prompt_config(args) -> PromptConfig:
    overrides: dict = {}
    if getattr(args, "prompt_config", None):
        overrides = json.loads(Path(args.prompt_config).read_text(encoding="utf-8"))
        if "few_shot" in overrides:
            overrides["few_shot"] = tuple(overrides["few_shot"])
    if getattr(args, "beams", None) is not None:
        overrides["beams"] = args.beams
    if getattr(args, "max_new_tokens", None) is not None:
        overrides["max_new_tokens"] = args.max_new_tokens
    if getattr(args, "trigger", None) is not None:
        overrides["trigger"] = args.trigger
    return PromptConfig(**overrides)


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    manifest = RunManifest(
        "ingest",
        {
            "cutoff_depth": args.cutoff_depth,
            "batch_size": args.batch_size,
            "tokenizer": args.tokenizer,
            "compaction": not args.no_compaction,
        },
    )
    manifest.add_input(args.triples)
    manifest.add_input(args.labels)
    if args.inverses:
        manifest.add_input(args.inverses)

    labels = LabelTable.load(args.labels)
    inverses = load_inverses(args.inverses) if args.inverses else None

    fact_texts = sorted(
        {
            fact.text
            for fact in facts_from_triples(
                read_triples(args.triples), labels, inverses=inverses
            )
        }
    )
    if not fact_texts:
        raise InputError("no facts after filtering; refusing to write an empty index")
    tokenizer = _build_tokenizer(args.tokenizer, fact_texts, args.vocab_extra)
    if args.facts_out:
        Path(args.facts_out).write_text(
            "".join(t + "\n" for t in fact_texts), encoding="utf-8"
        )
        manifest.add_output(args.facts_out)

    cfg = IndexConfig(
        tokenizer_fingerprint=tokenizer.fingerprint,
        cutoff_depth=args.cutoff_depth,
        batch_size=args.batch_size,
        compaction=not args.no_compaction,
    )
    builder = IndexBuilder(args.index, cfg)
    builder.add_facts(tokenizer.encode_fact(t) for t in fact_texts)
    stats = builder.finalize()
    save_tokenizer(tokenizer, _tokenizer_sidecar(args.index))

    manifest.add_output(args.index)
    manifest.write(manifest_path_for(args.index))
    print(json.dumps(stats.to_dict(), indent=2))
    return EXIT_OK


def cmd_query(args) -> int:
    reader = _load_index(args.index)
    tokenizer = _load_bound_tokenizer(args.index, reader)
    prefix = tuple(tokenizer.encode(" " + args.prefix) if args.prefix else ())
    try:
        table = reader.next_tokens(prefix)
    except UnknownPrefix:
        valid: tuple = ()
        for i in range(len(prefix), 0, -1):
            try:
                reader.node(prefix[:i])
                valid = prefix[:i]
                break
            except UnknownPrefix:
                continue
        hint = tokenizer.decode(valid, errors="replace")
        print(
            f"prefix is not a path in the index; longest valid prefix: {hint!r}",
            file=sys.stderr,
        )
        return EXIT_INPUT
    rows = sorted(table.items(), key=lambda kv: (-kv[1], kv[0]))
    print(f"{'token':>8}  {'piece':<24} leaves")
    for tok, leaves in rows:
        print(f"{tok:>8}  {tokenizer.piece_repr(tok)!r:<24} {leaves}")
    return EXIT_OK


def cmd_decode(args) -> int:
    reader = _load_index(args.index)
    tokenizer = _load_bound_tokenizer(args.index, reader)
    cfg = _prompt_config(args)
    scripts = read_scripts(args.script, tokenizer)
    model = scripts.get(args.script_id or "default")
    if model is None:
        raise InputError(
            f"script id {args.script_id or 'default'!r} not found in {args.script}"
        )
    transcript = run_question(args.question, model, reader, cfg)
    payload = json.dumps(transcript.to_dict(), indent=2, ensure_ascii=False)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
        manifest = RunManifest("decode", {"question": args.question})
        manifest.add_input(args.index)
        manifest.add_input(args.script)
        manifest.add_output(args.out)
        manifest.write(manifest_path_for(args.out))
    else:
        print(payload)
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = RunManifest(
        "eval",
        {
            "jobs": args.jobs,
            "strict_enum_match": args.strict_enum_match,
            "seed": args.seed,
        },
    )
    for p in (args.index, args.dataset, args.scripts):
        manifest.add_input(p)
    reader = _load_index(args.index)
    tokenizer = _load_bound_tokenizer(args.index, reader)
    cfg = _prompt_config(args)
    dataset = read_dataset(args.dataset)
    scripts = read_scripts(args.scripts, tokenizer)
    default_model = scripts.get("default")

    def run_one(record) -> Transcript:
        model = scripts.get(record.question_id, default_model)
        if model is None:
            raise InputError(f"no script for question {record.question_id!r}")
        return run_question(
            record.question, model, reader, cfg, question_id=record.question_id
        )

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            transcripts = list(pool.map(run_one, dataset))
    else:
        transcripts = [run_one(r) for r in dataset]

    result = aggregate(
        transcripts, gold_by_id(dataset), strict_enum=args.strict_enum_match
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_transcripts(out_dir / "transcripts.jsonl", transcripts)
    (out_dir / "metrics.json").write_text(result.to_json() + "\n", encoding="utf-8")
    (out_dir / "metrics.txt").write_text(
        result.summary_text() + "\n", encoding="utf-8"
    )
    save_eval_figure(result.to_dict(), out_dir / "metrics.png")
    for name in ("transcripts.jsonl", "metrics.json", "metrics.txt", "metrics.png"):
        manifest.add_output(out_dir / name)
    manifest.write(out_dir / "run.manifest.json")
    print(result.summary_text())
    return EXIT_OK


def cmd_bench(args) -> int:
    manifest = RunManifest(
        "bench",
        {"tokens": args.tokens, "forward_delay_ms": args.forward_delay_ms},
    )
    manifest.add_input(args.index)
    reader = _load_index(args.index)
    tokenizer = _load_bound_tokenizer(args.index, reader)
    result = run_bench(
        reader,
        tokenizer,
        args.tokens,
        forward_delay_s=args.forward_delay_ms / 1000.0,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .plotting import moving_average

    ma_u = moving_average(result.unconstrained_times, 10)
    ma_c = moving_average(result.constrained_times, 10)
    with open(out_dir / "bench.tsv", "w", encoding="utf-8") as f:
        f.write("token\tunconstrained_s\tconstrained_s\tma10_unconstrained_s\tma10_constrained_s\n")
        for i, (u, c, mu, mc) in enumerate(
            zip(result.unconstrained_times, result.constrained_times, ma_u, ma_c), 1
        ):
            f.write(f"{i}\t{u:.9f}\t{c:.9f}\t{mu:.9f}\t{mc:.9f}\n")
    summary = result.to_dict()
    (out_dir / "bench.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    if result.constrained_times:
        save_bench_figure(
            result.unconstrained_times,
            result.constrained_times,
            out_dir / "bench.png",
            window=10,
        )
        manifest.add_output(out_dir / "bench.png")
    for name in ("bench.tsv", "bench.json"):
        manifest.add_output(out_dir / name)
    manifest.write(out_dir / "run.manifest.json")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_stats(args) -> int:
    stats = read_stats(args.index)
    payload = stats.to_dict()
    print(json.dumps(payload, indent=2))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "stats.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8"
        )
        save_stats_figure(payload, out_dir / "stats.png")
        manifest = RunManifest("stats", {})
        manifest.add_input(args.index)
        manifest.add_output(out_dir / "stats.json")
        manifest.add_output(out_dir / "stats.png")
        manifest.write(out_dir / "run.manifest.json")
    return EXIT_OK


def cmd_compact(args) -> int:
    stats = compact_index(args.index, args.out)
    sidecar = _tokenizer_sidecar(args.index)
    if sidecar.exists():
        Path(_tokenizer_sidecar(args.out)).write_text(
            sidecar.read_text(encoding="utf-8"), encoding="utf-8"
        )
    manifest = RunManifest("compact", {})
    manifest.add_input(args.index)
    manifest.add_output(args.out)
    manifest.write(manifest_path_for(args.out))
    print(json.dumps(stats.to_dict(), indent=2))
    return EXIT_OK


def cmd_synth(args) -> int:
    kb = generate_kb(args.facts, seed=args.seed)
    kb.write(args.triples, args.labels)
    if args.inverses:
        with open(args.inverses, "w", encoding="utf-8") as f:
            for pid, name in sorted(INVERSE_NAMES.items()):
                f.write(f"{pid}\t{name}\n")
    print(
        f"wrote {len(kb.triple_lines)} triple lines and "
        f"{len(kb.label_lines)} label rows (seed {args.seed})"
    )
    return EXIT_OK


def cmd_export_golden(args) -> int:
    reader = _load_index(args.index)
    if reader.fact_count == 0:
        raise InputError("cannot export golden fixtures from an empty index")
    tokenizer = _load_bound_tokenizer(args.index, reader)
    rng = np.random.default_rng(args.seed)
    engine = ConstraintEngine(reader, tokenizer, trigger=args.trigger)
    trigger_ids = tokenizer.encode("Context established.\n" + args.trigger)

    fixtures = []
    for _ in range(args.count):
        # Random walk from the root to somewhere strictly above a leaf.
        prefix: list[int] = []
        while True:
            table = reader.next_tokens(tuple(prefix))
            toks = sorted(table)
            prefix.append(toks[int(rng.integers(len(toks)))])
            view = reader.node(tuple(prefix))
            if view.is_leaf:
                prefix = prefix[: int(rng.integers(len(prefix)))]
                break
            if rng.random() < 0.25:
                break
        session = engine.create_session(max_new_tokens=10_000)
        for tok in trigger_ids + prefix:
            engine.step(session, tok)
        if session.mode is not Mode.CONSTRAINED or session.cursor != prefix:
            raise EngineError("golden-fixture session did not reach the prefix")
        logits = rng.standard_normal(tokenizer.vocab_size)
        masked = engine.mask_logits(session, logits)
        allowed = engine.allowed(session)
        fixtures.append(
            {
                "input_ids": trigger_ids + prefix,
                "prefix": prefix,
                "logits": logits.tolist(),
                "masked": [None if x == float("-inf") else x for x in masked.tolist()],
                "allowed": sorted(allowed),
            }
        )
    with open(args.out, "w", encoding="utf-8") as f:
        for fx in fixtures:
            f.write(json.dumps(fx) + "\n")
    manifest = RunManifest("export-golden", {"count": args.count, "seed": args.seed})
    manifest.add_input(args.index)
    manifest.add_output(args.out)
    manifest.write(manifest_path_for(args.out))
    print(f"wrote {len(fixtures)} golden fixtures to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factrie",
        description="Build and query constrained-decoding fact indexes.",
    )
    parser.add_argument("--version", action="version", version=f"factrie {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build an index from triples and labels")
    p.add_argument("--triples", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--cutoff-depth", type=int, default=7)
    p.add_argument("--batch-size", type=int, default=5_000_000)
    p.add_argument("--tokenizer", choices=("byte", "vocab"), default="byte")
    p.add_argument("--inverses", help="TSV predicate_id -> inverse name")
    p.add_argument("--facts-out", help="also write the verbalized fact lines")
    p.add_argument("--vocab-extra", help="extra corpus lines for the vocab tokenizer")
    p.add_argument("--no-compaction", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="allowed next tokens for a text prefix")
    p.add_argument("--index", required=True)
    p.add_argument("--prefix", default="")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("decode", help="run one question with a scripted model")
    p.add_argument("--index", required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--script-id", default=None)
    p.add_argument("--question", required=True)
    p.add_argument("--prompt-config")
    p.add_argument("--beams", type=int, default=None)
    p.add_argument("--max-new-tokens", type=int, default=None)
    p.add_argument("--trigger", default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="run and score a dataset")
    p.add_argument("--index", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--scripts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prompt-config")
    p.add_argument("--beams", type=int, default=None)
    p.add_argument("--max-new-tokens", type=int, default=None)
    p.add_argument("--trigger", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strict-enum-match", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="constrained vs unconstrained timing")
    p.add_argument("--index", required=True)
    p.add_argument("--tokens", type=int, default=4000)
    p.add_argument("--forward-delay-ms", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stats", help="index statistics")
    p.add_argument("--index", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("compact", help="offline single-batch rebuild")
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compact)

    p = sub.add_parser("synth", help="generate a synthetic KB fixture")
    p.add_argument("--facts", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--triples", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--inverses")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser(
        "export-golden", help="golden masked-logits fixtures for adapter parity"
    )
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trigger", default="Fact:")
    p.set_defaults(func=cmd_export_golden)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, TrieError, NotFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CorruptRecord, UnsupportedVersion, StoreError) as exc:
        print(f"index error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except EngineError as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except FactrieError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
