"""Command-line interface: `hotbias <group> <verb> ...`.

Every command prints JSON (or JSONL) to stdout. Failures print
`[stage] message` to stderr and exit with status 1; usage errors exit with
status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from itertools import islice
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import yaml

from hotbias.config import ORACLE_NAMES, RadaOptions, RunConfig
from hotbias.datasets import (
    TOY_SEED,
    DatasetBundle,
    read_jsonl,
    read_manifest,
    read_oracle_table,
    read_specs,
    read_vocab,
    toy_dataset,
    write_dataset,
    write_vocab,
)
from hotbias.embedder import DEFAULT_DIMENSION, NgramTextEncoder, embed_text
from hotbias.exceptions import HotbiasError
from hotbias.grpo import RewardWeights, check_gradients, score_rows
from hotbias.pipeline import Pipeline, make_oracle, run_full
from hotbias.rada import build_mixture, filter_vocabulary, generate_fuzzy_variants
from hotbias.retriever import build_index, load_index, query_topk, save_index
from hotbias.types import JsonObject

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace], int]


def _emit(payload: JsonObject) -> None:
    sys.stdout.write(json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n")


def _emit_lines(rows: Iterable[JsonObject]) -> None:
    for row in rows:
        _emit(row)


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        report_dir=getattr(args, "report_dir", None),
        k_values=getattr(args, "k", None),
        workers=getattr(args, "workers", None),
    )


def _cmd_index_build(args: argparse.Namespace) -> int:
    vocab = read_vocab(args.vocab)
    index = build_index(vocab, NgramTextEncoder(args.dim))
    save_index(index, args.out)
    _emit({"index": str(args.out), "entries": len(index), "dimension": args.dim})
    return 0


def _cmd_index_query(args: argparse.Namespace) -> int:
    encoder = NgramTextEncoder(args.dim)
    index = load_index(args.index, encoder=encoder)
    result = query_topk(index, embed_text(args.text, encoder), args.k)
    _emit_lines(
        {"id": c.hotword.id, "surface": c.hotword.surface, "score": c.score}
        for c in result.candidates
    )
    return 0


def _cmd_rada_filter(args: argparse.Namespace) -> int:
    vocab = read_vocab(args.vocab)
    specs = read_specs(args.specs, vocab)
    table = read_oracle_table(args.table) if args.table else {}
    cfg = RunConfig(
        rada=RadaOptions(
            enabled=True,
            oracle=args.oracle,
            min_correct_fraction=args.min_correct_fraction,
            dropout_rate=args.dropout_rate,
        )
    )
    bundle = DatasetBundle(vocab=vocab, manifests={}, oracle_table=table)
    oracle = make_oracle(cfg, bundle)
    result = filter_vocabulary(
        vocab,
        oracle,
        specs,
        min_correct_fraction=args.min_correct_fraction,
        workers=args.workers,
    )
    if args.out_dir:
        out = Path(args.out_dir)
        write_vocab(result.kept, out / "kept_vocab.tsv")
        write_vocab(result.removed, out / "removed_vocab.tsv")
    _emit(result.stats.to_dict())
    return 0


def _cmd_rada_variants(args: argparse.Namespace) -> int:
    for variant in generate_fuzzy_variants(args.word, args.count, args.seed):
        sys.stdout.write(variant + "\n")
    return 0


def _cmd_rada_mixture(args: argparse.Namespace) -> int:
    utterances = read_manifest(args.manifest)
    biased = [u for u in utterances if u.is_positive]
    if args.general:
        general = read_manifest(args.general)
    else:
        general = [u for u in utterances if not u.is_positive]
    stream = build_mixture(biased, general, args.seed)
    _emit_lines(sample.to_dict() for sample in islice(stream, args.count))
    return 0


def _cmd_eval_retrieval(args: argparse.Namespace) -> int:
    _emit(Pipeline(_load_config(args)).eval_retrieval().to_dict())
    return 0


def _cmd_eval_asr(args: argparse.Namespace) -> int:
    reports = Pipeline(_load_config(args)).eval_asr(args.set)
    _emit({name: report.to_dict() for name, report in reports.items()})
    return 0


def _cmd_decode(args: argparse.Namespace) -> int:
    cfg = _load_config(args).with_overrides(beam_width=args.beam, joint=args.joint)
    records = Pipeline(cfg).decode(args.set, args.depth)
    _emit_lines(record.to_dict() for record in records)
    return 0


def _cmd_grpo_score(args: argparse.Namespace) -> int:
    rows = list(read_jsonl(args.input))
    weights = RewardWeights(match=args.match_weight, wer=args.wer_weight)
    _emit_lines(score_rows(rows, weights))
    return 0


def _cmd_grpo_check_grad(args: argparse.Namespace) -> int:
    report = check_gradients(args.steps, seed=args.seed)
    _emit(report.to_dict())
    if not report.passed:
        sys.stderr.write(
            f"[grpo] gradient check failed: max relative error "
            f"{report.max_rel_error:.3e}\n"
        )
        return 1
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    result = run_full(cfg)
    _emit({"report_dir": str(result.report_dir)})
    return 0


def _cmd_data_generate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    paths = write_dataset(toy_dataset(args.seed), out)
    dataset = paths.to_dict()
    dataset["vocab"] = paths.vocab.name
    dataset["manifests"] = {name: p.name for name, p in paths.manifests.items()}
    for key in ("specs", "oracle_table", "confusions"):
        dataset[key] = Path(str(dataset[key])).name
    config = {"dataset": dataset, "rada": {"enabled": True}, "fuzzy": {"enabled": True}}
    (out / "run.yaml").write_text(
        yaml.safe_dump(config, sort_keys=True), encoding="utf-8"
    )
    _emit({"out": str(out), "config": str(out / "run.yaml")})
    return 0


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def _add_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="YAML run config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument(
        "--k", type=_positive_int, nargs="+", help="override k_values (increasing)"
    )
    parser.add_argument("--workers", type=_positive_int, help="thread count")


def build_parser() -> argparse.ArgumentParser:
    """Build the `hotbias` argument parser."""

    parser = argparse.ArgumentParser(
        prog="hotbias",
        description="Retrieval-based contextual biasing toolkit.",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging level (default: WARNING)",
    )
    parser.add_argument(
        "--load-dotenv",
        action="store_true",
        help="load a .env file first (requires hotbias[dotenv])",
    )
    groups = parser.add_subparsers(dest="group", required=True)

    index = groups.add_parser("index", help="build or query a hotword index")
    index_verbs = index.add_subparsers(dest="verb", required=True)
    p = index_verbs.add_parser("build", help="embed a vocabulary into an index file")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=_positive_int, default=DEFAULT_DIMENSION)
    p.set_defaults(handler=_cmd_index_build, stage="index")
    p = index_verbs.add_parser("query", help="top-k hotwords for a text query")
    p.add_argument("--index", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--k", type=_positive_int, default=10)
    p.add_argument("--dim", type=_positive_int, default=DEFAULT_DIMENSION)
    p.set_defaults(handler=_cmd_index_query, stage="index")

    rada = groups.add_parser("rada", help="vocabulary filtering and augmentation")
    rada_verbs = rada.add_subparsers(dest="verb", required=True)
    p = rada_verbs.add_parser("filter", help="drop hotwords the oracle recognizes")
    p.add_argument("--vocab", required=True)
    p.add_argument("--specs", required=True)
    p.add_argument("--oracle", choices=ORACLE_NAMES, default="lookup")
    p.add_argument("--table", help="oracle table for --oracle lookup")
    p.add_argument("--min-correct-fraction", type=float, default=1.0)
    p.add_argument("--dropout-rate", type=float, default=0.1)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out-dir")
    p.set_defaults(handler=_cmd_rada_filter, stage="rada")
    p = rada_verbs.add_parser("variants", help="fuzzy variants of one word")
    p.add_argument("--word", required=True)
    p.add_argument("--count", type=_positive_int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_rada_variants, stage="rada")
    p = rada_verbs.add_parser("mixture", help="sample the training mixture")
    p.add_argument("--manifest", required=True)
    p.add_argument(
        "--general",
        help="manifest of non-biased utterances; defaults to the keywordless "
        "utterances of --manifest",
    )
    p.add_argument("--count", type=_positive_int, default=90)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_rada_mixture, stage="rada")

    evaluate = groups.add_parser("eval", help="retrieval and ASR evaluation")
    eval_verbs = evaluate.add_subparsers(dest="verb", required=True)
    p = eval_verbs.add_parser("retrieval", help="recall@k table")
    _add_config(p)
    p.set_defaults(handler=_cmd_eval_retrieval, stage="retrieval")
    p = eval_verbs.add_parser("asr", help="KER / SACC per set and arm")
    _add_config(p)
    p.add_argument("--set", help="evaluate one set only")
    p.set_defaults(handler=_cmd_eval_asr, stage="asr")

    p = groups.add_parser("decode", help="decode a set at one retrieval depth")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=_positive_int)
    p.add_argument("--beam", type=_positive_int)
    p.add_argument(
        "--k",
        dest="depth",
        type=int,
        help="retrieval depth; 0 decodes without a bias prompt",
    )
    p.add_argument("--joint", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--set")
    p.set_defaults(handler=_cmd_decode, stage="decode")

    grpo = groups.add_parser("grpo", help="rewards and gradient check")
    grpo_verbs = grpo.add_subparsers(dest="verb", required=True)
    p = grpo_verbs.add_parser("score", help="score JSONL responses")
    p.add_argument("--input", required=True)
    p.add_argument("--match-weight", type=float, default=1.0)
    p.add_argument("--wer-weight", type=float, default=1.0)
    p.set_defaults(handler=_cmd_grpo_score, stage="grpo")
    p = grpo_verbs.add_parser("check-grad", help="analytic vs numeric gradient")
    p.add_argument("--steps", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_grpo_check_grad, stage="grpo")

    p = groups.add_parser("run", help="run every stage and write reports")
    _add_config(p)
    p.add_argument("--report-dir")
    p.set_defaults(handler=_cmd_run, stage="run")

    data = groups.add_parser("data", help="bundled toy dataset")
    data_verbs = data.add_subparsers(dest="verb", required=True)
    p = data_verbs.add_parser("generate", help="write the toy dataset as files")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=TOY_SEED)
    p.set_defaults(handler=_cmd_data_generate, stage="data")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return the exit status."""

    parser = build_parser()
    args = parser.parse_args(list(argv) if argv is not None else None)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.load_dotenv:
        try:
            from dotenv import load_dotenv
        except ImportError:  # pragma: no cover
            sys.stderr.write(
                "[cli] python-dotenv is not installed. Install with: "
                "pip install 'hotbias[dotenv]'\n"
            )
            return 1
        load_dotenv()

    handler: Handler = args.handler
    try:
        return handler(args)
    except HotbiasError as exc:
        sys.stderr.write(f"[{exc.stage or args.stage}] {exc.message}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"[{args.stage}] {exc.strerror or exc}: {exc.filename}\n")
        return 1

