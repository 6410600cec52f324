"""Command handlers for the TIFTI command line."""
import argparse
import logging
from datetime import date
from typing import Callable, Dict, Union

from config import CONFIG_KEYS, RunConfig, load_run_config
from models.settings import ALL_METHODS, METHOD_FLAGS
from services.cascade_service import (
    align_predictions,
    load_predictions,
    predict_many,
    recorded_method,
    save_predictions,
)
from services.corpus_service import load_corpus, load_lexicon, save_corpus
from services.eval_service import (
    ablation_table,
    evaluate,
    gold_labels,
    run_ablation,
    run_transfer,
    split_patient_disjoint,
    train_models,
    tune_hyperparameters,
)
from services.synth_service import generate_corpus
from services.temporal_service import tag_text
from utils.model_io import load_models, save_models
from utils.report import render_table, summary_frame, write_reports

logger = logging.getLogger(__name__)

COMMANDS = ("generate", "train", "predict", "evaluate", "ablate", "tag", "transfer")


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """One flag per config key; unset flags stay None so lower layers win."""
    group = parser.add_argument_group("configuration")
    group.add_argument("--config", help="flat key=value config file")
    group.add_argument("--verbose", action="store_true", help="log the merged configuration")
    for key, kind in CONFIG_KEYS.items():
        names = [_flag(key)]
        if key == "n_examples":
            names.insert(0, "-n")
        kwargs = {"dest": key, "default": None, "type": kind}
        if key == "method":
            kwargs["choices"] = sorted(METHOD_FLAGS)
        group.add_argument(*names, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tifti",
        description="Drug regimen interval extraction from timestamped clinic notes.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    generate = subparsers.add_parser("generate", help="write a seeded synthetic corpus")
    generate.add_argument("-o", "--output", required=True)

    train = subparsers.add_parser("train", help="train both labelers and the expression classifier")
    train.add_argument("--corpus", required=True)
    train.add_argument("--model-dir", required=True)

    predict = subparsers.add_parser("predict", help="predict regimen intervals")
    predict.add_argument("--corpus", required=True)
    predict.add_argument("--model-dir", required=True)
    predict.add_argument("-o", "--output", required=True)

    evaluate_parser = subparsers.add_parser("evaluate", help="score a prediction file against gold labels")
    evaluate_parser.add_argument("--gold", required=True)
    evaluate_parser.add_argument("--predictions", required=True)
    evaluate_parser.add_argument("--report-dir")

    ablate = subparsers.add_parser("ablate", help="train and evaluate all four methods on one split")
    ablate.add_argument("--corpus", help="labeled corpus; a synthetic one is generated when omitted")
    ablate.add_argument("--report-dir")
    ablate.add_argument("--grid", action="store_true", help="tune delta and tau on the development split first")

    tag = subparsers.add_parser("tag", help="tag time expressions in a text snippet")
    tag.add_argument("--text", required=True)
    tag.add_argument("--anchor", required=True, help="document date, YYYY-MM-DD")

    transfer = subparsers.add_parser("transfer", help="train on one lexicon's corpus, test on another's")
    transfer.add_argument("--source-corpus")
    transfer.add_argument("--target-corpus")
    transfer.add_argument("--source-lexicon", default="rcc")
    transfer.add_argument("--target-lexicon", default="nsclc")
    transfer.add_argument("--report-dir")

    for subparser in subparsers.choices.values():
        _add_config_flags(subparser)
    return parser


# --- handlers ---------------------------------------------------------------

def handle_generate(args: argparse.Namespace, run_config: RunConfig) -> int:
    examples = generate_corpus(run_config.gen_config())
    save_corpus(examples, args.output)
    print(f"Wrote {len(examples)} examples to {args.output}")
    return 0


def handle_train(args: argparse.Namespace, run_config: RunConfig) -> int:
    lexicon = load_lexicon(run_config.lexicon)
    models = train_models(load_corpus(args.corpus), run_config, lexicon, ALL_METHODS)
    for path in save_models(models, args.model_dir):
        print(f"Saved {path}")
    return 0


def handle_predict(args: argparse.Namespace, run_config: RunConfig) -> int:
    examples = load_corpus(args.corpus)
    models = load_models(args.model_dir)
    config = run_config.cascade_config()
    predictions = predict_many(examples, models, config, load_lexicon(run_config.lexicon), run_config.jobs)
    save_predictions(examples, predictions, config.method, args.output)
    print(f"Wrote {len(predictions)} predictions to {args.output}")
    return 0


def handle_evaluate(args: argparse.Namespace, run_config: RunConfig) -> int:
    gold_examples = load_corpus(args.gold)
    golds = gold_labels(gold_examples)
    predictions = align_predictions(gold_examples, load_predictions(args.predictions))
    reports = {recorded_method(args.predictions).value: evaluate(predictions, golds)}
    print(render_table(summary_frame(reports)))
    if args.report_dir:
        write_reports(reports, args.report_dir, prefix="evaluate")
    return 0


def handle_ablate(args: argparse.Namespace, run_config: RunConfig) -> int:
    lexicon = load_lexicon(run_config.lexicon)
    corpus = load_corpus(args.corpus) if args.corpus else generate_corpus(run_config.gen_config(), lexicon)
    if args.grid:
        dev, _ = split_patient_disjoint(corpus, run_config.dev_fraction, run_config.seed)
        run_config, grid = tune_hyperparameters(dev, run_config, lexicon)
        print(render_table(grid))
        print(f"Selected delta_days={run_config.delta_days}, tau={run_config.tau}")
    result = run_ablation(corpus, run_config, lexicon)
    print(render_table(ablation_table(result)))
    if args.report_dir:
        write_reports(result.reports, args.report_dir, prefix="ablation")
    return 0


def handle_tag(args: argparse.Namespace, run_config: RunConfig) -> int:
    try:
        anchor = date.fromisoformat(args.anchor)
    except ValueError:
        raise ValueError(f"--anchor must be a YYYY-MM-DD date, got '{args.anchor}'")
    for expression in tag_text(args.text, anchor):
        print(f"{expression.surface}\t{expression.bucket.value}\t{expression.mapped_date.isoformat()}")
    return 0


def handle_transfer(args: argparse.Namespace, run_config: RunConfig) -> int:
    source_lexicon = load_lexicon(args.source_lexicon)
    target_lexicon = load_lexicon(args.target_lexicon)
    if args.source_corpus:
        source = load_corpus(args.source_corpus)
    else:
        source = generate_corpus(run_config.gen_config(lexicon=args.source_lexicon), source_lexicon)
    if args.target_corpus:
        target = load_corpus(args.target_corpus)
    else:
        target = generate_corpus(run_config.gen_config(lexicon=args.target_lexicon), target_lexicon)
    reports = run_transfer(source, target, run_config, source_lexicon, target_lexicon, run_config.cascade_method)
    print(render_table(summary_frame(reports)))
    if args.report_dir:
        write_reports(reports, args.report_dir, prefix="transfer")
    return 0


HANDLERS: Dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "generate": handle_generate,
    "train": handle_train,
    "predict": handle_predict,
    "evaluate": handle_evaluate,
    "ablate": handle_ablate,
    "tag": handle_tag,
    "transfer": handle_transfer,
}


def run(command: str, flags: Union[argparse.Namespace, Dict]) -> int:
    """Merge the configuration for one command and dispatch it; returns the exit code."""
    if command not in HANDLERS:
        raise ValueError(f"Unknown command '{command}', expected one of {', '.join(COMMANDS)}")
    args = flags if isinstance(flags, argparse.Namespace) else argparse.Namespace(**flags)
    overrides = {key: getattr(args, key, None) for key in CONFIG_KEYS}
    run_config = load_run_config(getattr(args, "config", None), overrides)
    if getattr(args, "verbose", False):
        for key, value in run_config.as_dict().items():
            logger.info(f"config {key} = {value}")
    logger.info(f"Running '{command}' with seed {run_config.seed}")
    return HANDLERS[command](args, run_config)
