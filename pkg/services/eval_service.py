"""Evaluation service: patient-disjoint splits, metrics, ablation, tuning and transfer runs."""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import AGREEMENT_WINDOWS, DELTA_GRID, TAU_GRID, RunConfig
from models.corpus import DocumentTimeline, Lexicon, PatientDrugExample, RegimenLabel
from models.learning import TimelineKind
from models.prediction import IntervalPrediction
from models.report import AgreementRow, EvalReport
from models.settings import ALL_METHODS, CascadeConfig, Method
from services.cascade_service import CascadeModels, build_simulated_timeline, predict_many
from services.corpus_service import build_timeline
from services.exprclass_service import build_expression_dataset, revise_timeline, train_expression_classifier
from services.seqlabel_service import train_sequence_labeler

logger = logging.getLogger(__name__)


# --- splitting --------------------------------------------------------------

def split_patient_disjoint(
    examples: Sequence[PatientDrugExample],
    dev_fraction: float,
    seed: int,
) -> Tuple[List[PatientDrugExample], List[PatientDrugExample]]:
    """Seeded shuffle of patient ids; all examples of a patient land on the same side."""
    if not 0.0 < dev_fraction < 1.0:
        raise ValueError(f"dev_fraction must be in (0, 1), got {dev_fraction}")
    patients = sorted({example.patient_id for example in examples})
    if len(patients) < 2:
        raise ValueError(f"A patient-disjoint split needs at least 2 patients, got {len(patients)}")
    order = np.random.default_rng(seed).permutation(len(patients))
    n_dev = min(max(int(round(dev_fraction * len(patients))), 1), len(patients) - 1)
    dev_patients = {patients[i] for i in order[:n_dev]}
    dev = [example for example in examples if example.patient_id in dev_patients]
    test = [example for example in examples if example.patient_id not in dev_patients]
    logger.info(f"Split {len(patients)} patients: {len(dev)} dev examples, {len(test)} test examples")
    return dev, test


# --- metrics ----------------------------------------------------------------

def _check_lengths(preds: Sequence, golds: Sequence) -> None:
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions for {len(golds)} gold labels")


def f1_taken(preds: Sequence[IntervalPrediction], golds: Sequence[RegimenLabel]) -> Tuple[float, float, float]:
    """(f1, precision, recall) of the taken class; undefined ratios are 0."""
    _check_lengths(preds, golds)
    tp = sum(1 for p, g in zip(preds, golds) if p.taken and g.taken)
    fp = sum(1 for p, g in zip(preds, golds) if p.taken and not g.taken)
    fn = sum(1 for p, g in zip(preds, golds) if not p.taken and g.taken)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return f1, precision, recall


def _true_positives(preds, golds) -> List[Tuple[IntervalPrediction, RegimenLabel]]:
    return [(p, g) for p, g in zip(preds, golds) if p.taken and g.taken]


def date_agreement(
    preds: Sequence[IntervalPrediction],
    golds: Sequence[RegimenLabel],
    t: int,
) -> Tuple[Optional[float], Optional[float]]:
    """Mean Start_i(t) and Stop_i(t) over true positives; (None, None) when there are none.

    Stop_i(t) is 1 when both regimens are ongoing, or neither is and the ends
    are within t days.
    """
    _check_lengths(preds, golds)
    pairs = _true_positives(preds, golds)
    if not pairs:
        return None, None
    start_hits, stop_hits = 0, 0
    for pred, gold in pairs:
        if pred.start is None or gold.start is None:
            raise ValueError("Taken regimens need a start date to score date agreement")
        if abs((pred.start - gold.start).days) <= t:
            start_hits += 1
        if pred.ongoing and gold.ongoing:
            stop_hits += 1
        elif not pred.ongoing and not gold.ongoing and abs((pred.end - gold.end).days) <= t:
            stop_hits += 1
    return start_hits / len(pairs), stop_hits / len(pairs)


def evaluate(
    preds: Sequence[IntervalPrediction],
    golds: Sequence[RegimenLabel],
    windows: Sequence[int] = AGREEMENT_WINDOWS,
) -> EvalReport:
    f1, precision, recall = f1_taken(preds, golds)
    rows = tuple(AgreementRow(t, *date_agreement(preds, golds, t)) for t in sorted(windows))
    return EvalReport(
        f1=f1,
        precision=precision,
        recall=recall,
        n_true_positive=len(_true_positives(preds, golds)),
        agreement=rows,
    )


# --- training ---------------------------------------------------------------

def gold_labels(examples: Sequence[PatientDrugExample]) -> List[RegimenLabel]:
    """Gold labels in example order; each must exist and carry a start when taken."""
    golds = []
    for example in examples:
        name = f"{example.patient_id}/{example.drug.canonical_name}"
        if example.gold is None:
            raise ValueError(f"Example {name} has no gold label for training and evaluation")
        if example.gold.taken and example.gold.start is None:
            raise ValueError(f"Gold label of {name} is taken but has no start date")
        golds.append(example.gold)
    return golds


def build_timelines(
    examples: Sequence[PatientDrugExample],
    lexicon: Optional[Lexicon] = None,
) -> List[Tuple[DocumentTimeline, RegimenLabel]]:
    """Original timelines paired with gold labels; examples with empty timelines are skipped."""
    pairs = []
    for example, gold in zip(examples, gold_labels(examples)):
        other_drugs = lexicon.other_drugs(example.drug) if lexicon is not None else ()
        timeline = build_timeline(example, other_drugs)
        if timeline.is_empty:
            logger.warning(f"Skipping {example.patient_id}/{example.drug.canonical_name}: empty timeline")
            continue
        pairs.append((timeline, gold))
    return pairs


def simulate(pairs: Sequence[Tuple[DocumentTimeline, RegimenLabel]]) -> List[Tuple[DocumentTimeline, RegimenLabel]]:
    return [(build_simulated_timeline(timeline, revise_timeline(timeline)), gold) for timeline, gold in pairs]


def train_models(
    examples: Sequence[PatientDrugExample],
    run_config: RunConfig,
    lexicon: Optional[Lexicon] = None,
    methods: Sequence[Method] = ALL_METHODS,
) -> CascadeModels:
    """Train the labelers and the expression model that the given methods need."""
    pairs = build_timelines(examples, lexicon)
    if not pairs:
        raise ValueError("No training example has a non-empty timeline")
    models = CascadeModels()
    variant, seq_features = run_config.variant, run_config.seq_feature_config()
    seq_train = run_config.seq_train_config()

    if any(not m.uses_simulated_timeline for m in methods):
        models.seq_original = train_sequence_labeler(
            pairs, seq_train, variant, seq_features, TimelineKind.ORIGINAL,
        )
    if any(m.uses_simulated_timeline for m in methods):
        models.seq_simulated = train_sequence_labeler(
            simulate(pairs), seq_train, variant, seq_features, TimelineKind.SIMULATED,
        )
    if any(m.uses_expression_gate for m in methods):
        data = build_expression_dataset(pairs, run_config.delta_days)
        models.expr = train_expression_classifier(
            data, run_config.expr_train_config(), run_config.feature_config(), run_config.delta_days,
        )
    return models


# --- experiments ------------------------------------------------------------

@dataclass
class AblationResult:
    reports: "OrderedDict[str, EvalReport]"
    predictions: Dict[str, List[IntervalPrediction]] = field(default_factory=dict)
    test_examples: List[PatientDrugExample] = field(default_factory=list)


def evaluate_methods(
    test: Sequence[PatientDrugExample],
    models: CascadeModels,
    run_config: RunConfig,
    lexicon: Optional[Lexicon] = None,
    methods: Sequence[Method] = ALL_METHODS,
) -> AblationResult:
    golds = gold_labels(test)
    result = AblationResult(reports=OrderedDict(), test_examples=list(test))
    for method in methods:
        predictions = predict_many(test, models, run_config.cascade_config(method), lexicon, run_config.jobs)
        result.predictions[method.value] = predictions
        result.reports[method.value] = evaluate(predictions, golds)
        report = result.reports[method.value]
        logger.info(
            f"{method.value}: F1 {report.f1:.3f}, Start(0) {_fmt(report.at(0).start_agreement)}, "
            f"Stop(0) {_fmt(report.at(0).stop_agreement)}"
        )
    return result


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def run_ablation(
    corpus: Sequence[PatientDrugExample],
    run_config: RunConfig,
    lexicon: Optional[Lexicon] = None,
    methods: Sequence[Method] = ALL_METHODS,
) -> AblationResult:
    """Split, train every needed model once, and evaluate each method on the same test split."""
    gold_labels(corpus)
    dev, test = split_patient_disjoint(corpus, run_config.dev_fraction, run_config.seed)
    models = train_models(dev, run_config, lexicon, methods)
    return evaluate_methods(test, models, run_config, lexicon, methods)


def ablation_table(result: AblationResult) -> pd.DataFrame:
    """Table-style view: F1, Start(0), Stop(0), Start(30), Stop(30) per method."""
    rows = []
    for method, report in result.reports.items():
        rows.append({
            "method": method,
            "F1": report.f1,
            "Start(0)": report.at(0).start_agreement,
            "Stop(0)": report.at(0).stop_agreement,
            "Start(30)": report.at(30).start_agreement,
            "Stop(30)": report.at(30).stop_agreement,
        })
    return pd.DataFrame(rows, columns=["method", "F1", "Start(0)", "Stop(0)", "Start(30)", "Stop(30)"])


def _objective(report: EvalReport) -> float:
    row = report.at(0)
    return report.f1 + (row.start_agreement or 0.0) + (row.stop_agreement or 0.0)


def tune_hyperparameters(
    dev: Sequence[PatientDrugExample],
    run_config: RunConfig,
    lexicon: Optional[Lexicon] = None,
    delta_grid: Sequence[int] = DELTA_GRID,
    tau_grid: Sequence[float] = TAU_GRID,
) -> Tuple[RunConfig, pd.DataFrame]:
    """Pick delta_days and tau for FULL-TIFTI on a holdout part of the development set.

    The criterion is F1 + Start(0) + Stop(0). Returns the config with the
    winning values and the full grid.
    """
    train, holdout = split_patient_disjoint(dev, run_config.dev_fraction, run_config.seed)
    labeler = train_models(train, run_config, lexicon, [Method.SIM_TIMELINE]).seq_simulated
    pairs = build_timelines(train, lexicon)
    golds = gold_labels(holdout)

    rows = []
    best = None
    for delta in delta_grid:
        data = build_expression_dataset(pairs, delta)
        expr = train_expression_classifier(
            data, run_config.expr_train_config(), run_config.feature_config(), delta,
        )
        models = CascadeModels(seq_simulated=labeler, expr=expr)
        for tau in tau_grid:
            predictions = predict_many(
                holdout, models, CascadeConfig(tau=tau, method=Method.FULL_TIFTI), lexicon, run_config.jobs,
            )
            report = evaluate(predictions, golds)
            score = _objective(report)
            rows.append({
                "delta_days": delta, "tau": tau, "f1": report.f1,
                "start_0": report.at(0).start_agreement, "stop_0": report.at(0).stop_agreement,
                "objective": score,
            })
            # strict improvement keeps the first grid point on ties
            if best is None or score > best[0]:
                best = (score, delta, tau)
    _, delta, tau = best
    logger.info(f"Selected delta_days={delta}, tau={tau} (objective {best[0]:.3f})")
    return replace(run_config, delta_days=delta, tau=tau), pd.DataFrame(rows)


def run_transfer(
    source: Sequence[PatientDrugExample],
    target: Sequence[PatientDrugExample],
    run_config: RunConfig,
    source_lexicon: Optional[Lexicon] = None,
    target_lexicon: Optional[Lexicon] = None,
    method: Method = Method.FULL_TIFTI,
) -> "OrderedDict[str, EvalReport]":
    """Evaluate a source-trained and a target-trained model on the same target test split."""
    source_dev, _ = split_patient_disjoint(source, run_config.dev_fraction, run_config.seed)
    target_dev, target_test = split_patient_disjoint(target, run_config.dev_fraction, run_config.seed)
    reports = OrderedDict()
    for name, dev, lexicon in (
        ("source-trained", source_dev, source_lexicon),
        ("target-trained", target_dev, target_lexicon),
    ):
        models = train_models(dev, run_config, lexicon, [method])
        # both models substitute drug names with the target lexicon
        result = evaluate_methods(target_test, models, run_config, target_lexicon, [method])
        reports[name] = result.reports[method.value]
    return reports
