"""Cascade service: expression gating, simulated timelines and the four prediction methods."""
import asyncio
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from models.corpus import CondensedDocument, DocumentTimeline, DrugLexiconEntry, Lexicon, PatientDrugExample
from models.learning import ExprModel, SequenceLabelerModel, TimelineKind
from models.prediction import DecodedDocument, DocLabel, Evidence, IntervalPrediction
from models.settings import CascadeConfig, Method
from models.temporal import RevisedSentence, TimeExpression
from services.corpus_service import build_timeline
from services.exprclass_service import revise_timeline, score_expressions
from services.seqlabel_service import constrained_decode, interval_from_labels, predict_doc_probs

logger = logging.getLogger(__name__)


class ModelMismatchError(ValueError):
    """Models that cannot be combined for the requested method."""


@dataclass
class CascadeModels:
    """Trained models for all four methods; either labeler may be absent when unused."""
    seq_original: Optional[SequenceLabelerModel] = None
    seq_simulated: Optional[SequenceLabelerModel] = None
    expr: Optional[ExprModel] = None

    def labeler_for(self, method: Method) -> SequenceLabelerModel:
        model = self.seq_simulated if method.uses_simulated_timeline else self.seq_original
        if model is None:
            kind = "simulated" if method.uses_simulated_timeline else "original"
            raise ModelMismatchError(f"Method {method.value} needs a labeler trained on {kind} timelines")
        return model


def build_simulated_timeline(
    timeline: DocumentTimeline,
    scored: Sequence[Tuple[TimeExpression, RevisedSentence]],
) -> DocumentTimeline:
    """Merge one pseudo-document per expression into the timeline, at its mapped date."""
    if not scored:
        return timeline
    pseudo = tuple(
        CondensedDocument(
            timestamp=revised.mapped_date,
            sentences=(revised.text,),
            is_pseudo=True,
            origin=revised.expression_id,
        )
        for _, revised in scored
    )
    return DocumentTimeline(docs=timeline.docs + pseudo)


def check_models(method: Method, seq_model: SequenceLabelerModel, expr_model: Optional[ExprModel]) -> None:
    required = TimelineKind.SIMULATED if method.uses_simulated_timeline else TimelineKind.ORIGINAL
    if seq_model.trained_on != required:
        raise ModelMismatchError(
            f"Method {method.value} needs a labeler trained on {required.value} timelines, "
            f"got one trained on {seq_model.trained_on.value}"
        )
    try:
        seq_model.check_shapes()
    except ValueError as e:
        raise ModelMismatchError(f"Sequence labeler does not match its feature config: {e}")
    if method.uses_expression_gate:
        if expr_model is None:
            raise ModelMismatchError(f"Method {method.value} needs an expression model")
        seq_features, expr_features = seq_model.feature_config, expr_model.feature_config
        if (seq_features.ngram_orders, seq_features.lowercase) != (expr_features.ngram_orders, expr_features.lowercase):
            raise ModelMismatchError(
                f"Feature configs differ: labeler {seq_features.to_dict()} vs expression model {expr_features.to_dict()}"
            )


def _gate(
    scored: Sequence[Tuple[TimeExpression, RevisedSentence]],
    expr_model: ExprModel,
    tau: float,
) -> Tuple[Optional[date], Optional[date]]:
    """Mapped dates of the top START and END expressions when their probability reaches tau."""
    if not scored:
        return None, None
    scores = score_expressions(expr_model, [revised for _, revised in scored])
    best_start = max(range(len(scores)), key=lambda i: (scores[i].start, -i))
    best_end = max(range(len(scores)), key=lambda i: (scores[i].end, -i))
    start = scored[best_start][1].mapped_date if scores[best_start].start >= tau else None
    end = scored[best_end][1].mapped_date if scores[best_end].end >= tau else None
    return start, end


def predict_tifti(
    example: PatientDrugExample,
    seq_model: SequenceLabelerModel,
    expr_model: Optional[ExprModel],
    config: CascadeConfig,
    other_drugs: Sequence[DrugLexiconEntry] = (),
) -> IntervalPrediction:
    """Predict the regimen interval of one patient-drug pair with the configured method.

    The taken decision always comes from decoding a timeline (the original one
    for TIMELINE and EXPR+TIMELINE, the simulated one otherwise). The expression
    gate may then replace each endpoint independently.
    """
    method = config.method
    check_models(method, seq_model, expr_model)

    timeline = build_timeline(example, other_drugs)
    if timeline.is_empty:
        logger.debug(f"{example.patient_id}/{example.drug.canonical_name}: empty timeline")
        return IntervalPrediction.not_taken()

    needs_expressions = method.uses_simulated_timeline or method.uses_expression_gate
    scored = revise_timeline(timeline) if needs_expressions else []
    decode_on = build_simulated_timeline(timeline, scored) if method.uses_simulated_timeline else timeline

    labels = constrained_decode(predict_doc_probs(seq_model, decode_on))
    decoded = tuple(
        DecodedDocument(timestamp=doc.timestamp, label=label, is_pseudo=doc.is_pseudo)
        for doc, label in zip(decode_on.docs, labels)
    )
    base = interval_from_labels(labels, decode_on.timestamps)
    if not base.taken:
        return IntervalPrediction.not_taken(decoded)

    start, end = base.start, base.end
    evidence = dict(base.evidence)
    if method.uses_expression_gate:
        start_override, end_override = _gate(scored, expr_model, config.tau)
        if start_override is not None:
            start, evidence["start"] = start_override, Evidence.EXPRESSION
        if end_override is not None:
            end, evidence["end"] = end_override, Evidence.EXPRESSION
        if end is not None and start > end and end_override is not None:
            end, evidence["end"] = base.end, Evidence.TIMELINE
        if end is not None and start > end:
            # the timeline end still precedes the accepted start
            start, evidence["start"] = base.start, Evidence.TIMELINE

    return IntervalPrediction(taken=True, start=start, end=end, evidence=evidence, decoded=decoded)


def predict_with_models(
    example: PatientDrugExample,
    models: CascadeModels,
    config: CascadeConfig,
    lexicon: Optional[Lexicon] = None,
) -> IntervalPrediction:
    other_drugs = lexicon.other_drugs(example.drug) if lexicon is not None else ()
    return predict_tifti(example, models.labeler_for(config.method), models.expr, config, other_drugs)


async def _predict_all(
    examples: Sequence[PatientDrugExample],
    models: CascadeModels,
    config: CascadeConfig,
    lexicon: Optional[Lexicon],
    jobs: int,
) -> List[IntervalPrediction]:
    loop = asyncio.get_event_loop()
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        tasks = [
            loop.run_in_executor(executor, predict_with_models, example, models, config, lexicon)
            for example in examples
        ]
        # gather keeps input order
        return list(await asyncio.gather(*tasks))


def predict_many(
    examples: Sequence[PatientDrugExample],
    models: CascadeModels,
    config: CascadeConfig,
    lexicon: Optional[Lexicon] = None,
    jobs: int = 1,
) -> List[IntervalPrediction]:
    """Predict every example; with jobs > 1 examples run on a thread pool, results stay in input order."""
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    models.labeler_for(config.method)
    if jobs == 1 or len(examples) < 2:
        predictions = [predict_with_models(example, models, config, lexicon) for example in examples]
    else:
        predictions = asyncio.run(_predict_all(examples, models, config, lexicon, jobs))
    taken = sum(1 for p in predictions if p.taken)
    logger.info(f"{config.method.value}: predicted {taken}/{len(predictions)} examples as taken")
    return predictions


# --- prediction file --------------------------------------------------------

def _iso(value: Optional[date]) -> Optional[str]:
    return value.isoformat() if value is not None else None


def prediction_to_record(example: PatientDrugExample, prediction: IntervalPrediction, method: Method) -> Dict:
    return {
        "patient_id": example.patient_id,
        "drug": example.drug.canonical_name,
        "method": method.value,
        "taken": prediction.taken,
        "start": _iso(prediction.start),
        "end": _iso(prediction.end),
        "evidence": {key: value.value for key, value in sorted(prediction.evidence.items())},
        "documents": [
            {"timestamp": doc.timestamp.isoformat(), "label": doc.label.name, "pseudo": doc.is_pseudo}
            for doc in prediction.decoded
        ],
    }


def prediction_from_record(record: Dict) -> IntervalPrediction:
    def parse(value):
        return date.fromisoformat(value) if value is not None else None

    return IntervalPrediction(
        taken=bool(record["taken"]),
        start=parse(record.get("start")),
        end=parse(record.get("end")),
        evidence={key: Evidence(value) for key, value in record.get("evidence", {}).items()},
        decoded=tuple(
            DecodedDocument(timestamp=parse(doc["timestamp"]), label=DocLabel[doc["label"]], is_pseudo=bool(doc["pseudo"]))
            for doc in record.get("documents", [])
        ),
    )


def save_predictions(
    examples: Sequence[PatientDrugExample],
    predictions: Sequence[IntervalPrediction],
    method: Method,
    path: str,
) -> int:
    """Write one JSON record per example, in input order."""
    if len(examples) != len(predictions):
        raise ValueError(f"{len(examples)} examples but {len(predictions)} predictions")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for example, prediction in zip(examples, predictions):
            handle.write(json.dumps(prediction_to_record(example, prediction, method), ensure_ascii=False) + "\n")
    logger.info(f"Wrote {len(predictions)} predictions to {path}")
    return len(predictions)


def load_predictions(path: str) -> List[Tuple[Tuple[str, str], IntervalPrediction]]:
    """Read a prediction file as ((patient_id, drug), prediction) pairs."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Prediction file not found: {path}")
    loaded = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                loaded.append(((record["patient_id"], record["drug"]), prediction_from_record(record)))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise ValueError(f"{path}: line {line_number}: malformed prediction ({e})")
    return loaded


def recorded_method(path: str) -> Method:
    """The method written into a prediction file; every record must name the same one."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Prediction file not found: {path}")
    methods = set()
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                methods.add(Method(json.loads(line)["method"]))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise ValueError(f"{path}: line {line_number}: no valid method ({e})")
    if len(methods) != 1:
        raise ValueError(f"{path}: expected one method, found {sorted(m.value for m in methods) or 'none'}")
    return methods.pop()


def align_predictions(
    examples: Iterable[PatientDrugExample],
    loaded: Sequence[Tuple[Tuple[str, str], IntervalPrediction]],
) -> List[IntervalPrediction]:
    """Order loaded predictions like the gold examples; every example needs a prediction."""
    by_key = dict(loaded)
    aligned = []
    for example in examples:
        if example.key not in by_key:
            raise ValueError(f"No prediction for patient {example.patient_id}, drug {example.drug.canonical_name}")
        aligned.append(by_key[example.key])
    return aligned
