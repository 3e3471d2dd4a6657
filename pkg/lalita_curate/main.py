import argparse
import asyncio
import os
import sys
from pathlib import Path
from typing import List, Optional

from loguru import logger
from dotenv import load_dotenv

from lalita_curate.config import PipelineConfig, load_config
from lalita_curate.conllu_ingest import read_conllu
from lalita_curate.curation_sampler import (
    STANDARD_CONFIGURATION_SETS,
    configuration_name,
    enumerate_configurations,
)
from lalita_curate.demo import generate_demo
from lalita_curate.errors import ConfigError, CurationError
from lalita_curate.ngram_lm import load_model, sentence_perplexities, train_on_annotations
from lalita_curate.pipeline import STAGES, run_pipeline, score_external
from lalita_curate.lalita_score import score_rows
from lalita_curate.utils import canonical_json, format_number, setup_logging

# Load environment variables
load_dotenv()

# Subcommands that run the configured pipeline up to (and including) a stage.
PIPELINE_TARGETS = {
    "filter": "filter",
    "schema": "schema",
    "vectorize": "vectorize",
    "score-fit": "score_fit",
    "score": "score",
    "cluster": "cluster",
    "sample": "sample",
    "order": "order",
    "report": "report",
    "run": None,
}


class CliParser(argparse.ArgumentParser):
    """Usage errors raise ConfigError so they map onto exit code 1."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", default="config.yaml", help="YAML/JSON configuration file")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="Override a config field, e.g. --set cluster.k=3 (repeatable)",
    )


def build_parser() -> CliParser:
    parser = CliParser(prog="lalita-curate", description="Complexity-aware curation of parallel corpora")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("filter", "schema", "vectorize", "score-fit", "cluster", "report"):
        _add_config_args(sub.add_parser(name, help=f"Run the pipeline through '{name}'"))

    p = sub.add_parser("run", help="Run the full pipeline")
    _add_config_args(p)
    p.add_argument("--until", choices=STAGES, help="Stop after this stage")

    p = sub.add_parser("score", help="Score the filtered corpus, or an external CoNLL-U file with a fitted run")
    _add_config_args(p)
    p.add_argument("--input", type=Path, help="CoNLL-U file to score with the run's fitted models")
    p.add_argument("--sidecar", type=Path, action="append", default=[], help="Sidecar TSV for --input (repeatable)")
    p.add_argument("--output", type=Path, help="Score TSV for --input (stdout when omitted)")

    p = sub.add_parser("sample", help="Materialize curated corpora")
    _add_config_args(p)
    p.add_argument("--configuration", action="append", default=[], metavar="A_B_C_D",
                   help="Cluster mix to sample (repeatable); replaces the configured list")
    p.add_argument("--tds", type=int, action="append", default=[], help="Total dataset size (repeatable)")
    p.add_argument("--baseline", action="append", default=[], choices=["proportional", "random"])
    p.add_argument("--seed", type=int)
    p.add_argument("--no-augmentation", action="store_true", help="Never top up clusters with synthetic pairs")

    p = sub.add_parser("order", help="Write stepwise whole-corpus orders")
    _add_config_args(p)
    p.add_argument("--strategy", action="append", default=[], choices=["incpca", "decpca", "rs"])
    p.add_argument("--increment", type=int)

    p = sub.add_parser("lm-train", help="Train a Kneser-Ney n-gram model on a CoNLL-U file")
    p.add_argument("--conllu", type=Path, required=True)
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("lm-ppl", help="Per-sentence perplexity under a trained model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--conllu", type=Path, required=True)
    p.add_argument("--output", type=Path, help="TSV output (stdout when omitted)")

    p = sub.add_parser("enum-configs", help="List cluster-mix configurations")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--set", dest="multiset", metavar="A,B,C,D", help="Percent multiset to permute")
    group.add_argument("--all", action="store_true", help="All standard configuration sets")

    p = sub.add_parser("demo", help="Generate the demo corpus and its config")
    p.add_argument("--output", type=Path, default=Path("demo"))
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--synthetic", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--run", action="store_true", help="Run the full pipeline on the generated corpus")

    return parser


def _configure(args) -> PipelineConfig:
    config = load_config(args.config, args.overrides)
    setup_logging(os.getenv("LALITA_LOG_LEVEL") or config.system.log_level, config.system.log_file)

    sampling_update = {}
    if args.command == "sample":
        if args.configuration:
            sampling_update.update(configurations=args.configuration, configuration_sets=[])
        if args.tds:
            sampling_update["tds"] = args.tds
        if args.baseline:
            sampling_update["baselines"] = args.baseline
        if args.seed is not None:
            sampling_update["seed"] = args.seed
        if args.no_augmentation:
            sampling_update["allow_augmentation"] = False
    elif args.command == "order":
        if args.strategy:
            sampling_update["stepwise_strategies"] = args.strategy
        if args.increment is not None:
            if args.increment < 1:
                raise ConfigError(f"--increment must be at least 1, got {args.increment}")
            sampling_update["increment"] = args.increment
    if sampling_update:
        config = config.model_copy(update={"sampling": config.sampling.model_copy(update=sampling_update)})
        # names are validated eagerly so a typo fails before any stage runs
        config.sampling.curation_configs()
    return config


def _write_lines(lines: List[str], output: Optional[Path]):
    if output is None:
        sys.stdout.write("".join(lines))
        return
    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "w", encoding="utf-8") as f:
        f.writelines(lines)
    logger.info(f"Wrote {len(lines)} rows to {output}")


def _parse_multiset(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"Invalid percent list '{text}' (expected e.g. 70,10,10,10)")


async def main_async(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "enum-configs":
        multisets = STANDARD_CONFIGURATION_SETS if args.all else [_parse_multiset(args.multiset)]
        names = [configuration_name(p) for m in multisets for p in enumerate_configurations(m)]
        sys.stdout.write("".join(f"{name}\n" for name in names))
        logger.info(f"{len(names)} configurations")
        return 0

    if args.command == "lm-train":
        sentences = read_conllu(args.conllu)
        model = train_on_annotations(sentences, args.order)
        args.output.parent.mkdir(parents=True, exist_ok=True)
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(canonical_json(model.to_payload()))
        logger.success(f"Saved {args.order}-gram model to {args.output}")
        return 0

    if args.command == "lm-ppl":
        model = load_model(args.model)
        ppl = sentence_perplexities(model, read_conllu(args.conllu))
        _write_lines([f"{pair_id}\t{format_number(value)}\n" for pair_id, value in ppl.items()], args.output)
        return 0

    if args.command == "demo":
        config_path = generate_demo(args.output, args.pairs, args.synthetic, args.seed)
        logger.success(f"Demo corpus written; config at {config_path}")
        if args.run:
            result = await run_pipeline(load_config(str(config_path)))
            logger.info(f"{len(result.artifacts)} artifacts in {result.output_dir}")
        return 0

    config = _configure(args)
    if args.command == "score" and args.input is not None:
        scored = score_external(config, args.input, args.sidecar)
        _write_lines(["\t".join(row) + "\n" for row in score_rows(scored)], args.output)
        return 0

    until = args.until if args.command == "run" else PIPELINE_TARGETS[args.command]
    result = await run_pipeline(config, until)
    logger.info(f"{len(result.artifacts)} artifacts in {result.output_dir}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    try:
        return asyncio.run(main_async(argv))
    except CurationError as e:
        logger.error(str(e))
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("Interrupted.")
        return 3
    except Exception as e:
        logger.critical(f"Unhandled error: {e}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
