"""Command-line entry point: augment, stage, ingest, and eval subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Any, Sequence

from .config import PipelineConfig, load_config
from .errors import (
    ConfigError,
    DocboostError,
    KeyMismatch,
    MissingInput,
    SchemaError,
    UsageError,
)
from .evalkit import rouge_l, rouge_n
from .files import atomic_write_text, dump_json
from .pipeline import ARTIFACTS, STAGE_NAMES, run_augment, run_single_stage

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_USAGE = 64
EXIT_FAILURE = 70

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so main() owns the exit code."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="docboost",
                     description="Augment API reference docs with summaries "
                                 "mined from posts and captions.")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--replay", metavar="DIR",
                        help="directory of replay fixtures (scorer.json, "
                             "embedder.json, llm.json); enables offline mode")
    parser.add_argument("--seed", type=int, help="PRNG seed override")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress to stderr")

    sub = parser.add_subparsers(dest="command", required=True)

    augment = sub.add_parser("augment", help="run the full pipeline for one API")
    augment.add_argument("corpus", help="corpus directory (api.json plus "
                                        "docs/ for offline fixtures)")
    augment.add_argument("--out", help="output directory override")
    _add_pipeline_flags(augment)

    stage = sub.add_parser("stage", help="run exactly one pipeline stage")
    stage.add_argument("name", choices=STAGE_NAMES)
    stage.add_argument("--corpus", required=True,
                       help="corpus directory (for api.json)")
    stage.add_argument("--in", dest="in_path",
                       help="input artifact (not used by the ingest stage)")
    stage.add_argument("--out", required=True, help="output artifact path")
    _add_pipeline_flags(stage)

    ingest = sub.add_parser("ingest", help="fetch or load a corpus and emit "
                                           "its docs as NDJSON")
    ingest.add_argument("corpus", help="corpus directory")
    ingest.add_argument("--out", help="output path "
                                      f"(default {ARTIFACTS['ingest']})")
    _add_pipeline_flags(ingest)

    evaluate = sub.add_parser("eval", help="score predictions against gold "
                                           "summaries")
    evaluate.add_argument("--pred", required=True, help="prediction NDJSON")
    evaluate.add_argument("--gold", required=True, help="gold NDJSON")
    evaluate.add_argument("--metric", default="rouge-1",
                          choices=("rouge-1", "rouge-2", "rouge-l"))
    evaluate.add_argument("--report", help="write the JSON report here")
    return parser


def _add_pipeline_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--phi", type=float, help="damping factor")
    parser.add_argument("--tol", type=float, help="convergence tolerance")
    parser.add_argument("--max-iter", type=int, help="power-iteration cap")
    parser.add_argument("--k", type=int, help="extractive sentence count "
                                              "(0 = twice the abstractive budget)")
    parser.add_argument("--algorithm", choices=("extup", "textrank", "lexrank"))
    parser.add_argument("--literal-out-degree", action="store_true", default=None,
                        help="divide incoming mass by the target's out-degree "
                             "instead of row-normalizing the transition matrix")
    parser.add_argument("--normalize-each-iter", action="store_true", default=None,
                        help="L1-normalize after every iteration instead of "
                             "once at the end")


def _config_overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    for flag, field in (("phi", "phi"), ("tol", "tol"), ("max_iter", "max_iter"),
                        ("k", "k"), ("algorithm", "algorithm"),
                        ("literal_out_degree", "literal_out_degree"),
                        ("normalize_each_iter", "normalize_each_iter"),
                        ("seed", "seed"), ("out", "output_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    return overrides


def _apply_replay_dir(overrides: dict[str, Any], replay_dir: str):
    if not os.path.isdir(replay_dir):
        raise ConfigError(f"replay directory not found: {replay_dir}")
    scorer = os.path.join(replay_dir, "scorer.json")
    if os.path.exists(scorer):
        overrides.update(scorer="replay", scorer_replay=scorer)
    embedder = os.path.join(replay_dir, "embedder.json")
    if os.path.exists(embedder):
        overrides.update(embedder="replay", embedder_replay=embedder)
    llm = os.path.join(replay_dir, "llm.json")
    if os.path.exists(llm):
        overrides["llm_replay"] = llm


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = _config_overrides(args)
    if args.replay:
        _apply_replay_dir(overrides, args.replay)
    return load_config(args.config, overrides=overrides)


def cmd_augment(args: argparse.Namespace) -> int:
    config = _load_config(args)
    artifacts = run_augment(args.corpus, config)
    written = artifacts.write(config.output_dir)
    for path in written:
        log.info("wrote %s", path)
    print(os.path.join(config.output_dir, "augmented.md"))
    return EXIT_OK


def cmd_stage(args: argparse.Namespace) -> int:
    config = _load_config(args)
    in_text = None
    if args.name != "ingest":
        if not args.in_path:
            raise UsageError(f"stage {args.name} needs --in")
        if not os.path.exists(args.in_path):
            raise MissingInput(f"input artifact not found: {args.in_path}")
        with open(args.in_path, encoding="utf-8") as fh:
            in_text = fh.read()
    out_text = run_single_stage(args.name, args.corpus, in_text, config,
                                in_path=args.in_path)
    atomic_write_text(args.out, out_text)
    print(args.out)
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out_path = args.out or ARTIFACTS["ingest"]
    out_text = run_single_stage("ingest", args.corpus, None, config)
    atomic_write_text(out_path, out_text)
    print(out_path)
    return EXIT_OK


def _load_eval_lines(path: str) -> dict[tuple[str, str], str]:
    if not os.path.exists(path):
        raise MissingInput(f"eval input not found: {path}")
    items: dict[tuple[str, str], str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {lineno} is not valid JSON: {exc}",
                                  path=path) from exc
            try:
                key = (str(raw["api"]), str(raw["section"]))
                text = str(raw["text"])
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"line {lineno} misses api/section/text",
                                  path=path) from exc
            if key in items:
                raise SchemaError(f"duplicate key {key} at line {lineno}", path=path)
            items[key] = text
    return items


def _metric_fn(metric: str):
    if metric == "rouge-l":
        return rouge_l
    n = int(metric.split("-")[1])
    return lambda candidate, reference: rouge_n(candidate, reference, n)


def cmd_eval(args: argparse.Namespace) -> int:
    predictions = _load_eval_lines(args.pred)
    golds = _load_eval_lines(args.gold)
    missing = sorted(set(golds) - set(predictions))
    extra = sorted(set(predictions) - set(golds))
    if missing or extra:
        raise KeyMismatch(missing=[f"{a}/{s}" for a, s in missing],
                          extra=[f"{a}/{s}" for a, s in extra])

    score = _metric_fn(args.metric)
    per_item = []
    for key in sorted(golds):
        result = score(predictions[key], golds[key])
        per_item.append({"api": key[0], "section": key[1],
                         "precision": result.precision,
                         "recall": result.recall,
                         "f1": result.f1})
    mean = sum(item["f1"] for item in per_item) / len(per_item) if per_item else 0.0
    report = {"metric": args.metric, "per_item": per_item, "mean": mean}

    print(_format_table(args.metric, per_item, mean))
    if args.report:
        atomic_write_text(args.report, dump_json(report))
    else:
        print(dump_json(report), end="")
    return EXIT_OK


def _format_table(metric: str, per_item: list[dict], mean: float) -> str:
    headers = ("api", "section", "precision", "recall", "f1")
    rows = [[item["api"], item["section"], f"{item['precision']:.4f}",
             f"{item['recall']:.4f}", f"{item['f1']:.4f}"] for item in per_item]
    rows.append(["mean", metric, "", "", f"{mean:.4f}"])
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    lines += ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
              for row in rows]
    return "\n".join(lines)


_COMMANDS = {
    "augment": cmd_augment,
    "stage": cmd_stage,
    "ingest": cmd_ingest,
    "eval": cmd_eval,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s")
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"docboost: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MissingInput as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"{stage} stage: " if stage else ""
        print(f"docboost: {prefix}{exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except DocboostError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"{stage} stage: " if stage else ""
        print(f"docboost: {prefix}{exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
