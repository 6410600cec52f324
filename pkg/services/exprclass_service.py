"""Expression classification service: revised sentences, proxy labels and the START/END/NEITHER classifier."""
import logging
from collections import Counter
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as ssp

from models.corpus import DateStamp, DocumentTimeline, RegimenLabel
from models.learning import ExprModel, FeatureConfig, TrainConfig
from models.prediction import ExprClass, ExprScore
from models.temporal import TIME_PLACEHOLDER, RevisedSentence, TimeExpression
from services.feature_service import design_matrix
from services.temporal_service import tag_time_expressions
from utils.linear import fit_softmax_regression, softmax

logger = logging.getLogger(__name__)


def make_revised_sentence(
    sentence: str,
    expression: TimeExpression,
    doc_timestamp: Optional[DateStamp] = None,
) -> RevisedSentence:
    """Replace the expression's span with "TIME <bucket>", leaving the rest untouched."""
    start, end = expression.char_span
    if not 0 <= start < end <= len(sentence):
        raise ValueError(f"Span {expression.char_span} is out of bounds for a sentence of length {len(sentence)}")
    text = f"{sentence[:start]}{TIME_PLACEHOLDER} {expression.bucket.value}{sentence[end:]}"
    return RevisedSentence(
        text=text,
        mapped_date=expression.mapped_date,
        expression_id=expression.expression_id,
        bucket=expression.bucket,
        doc_timestamp=doc_timestamp,
    )


def revise_timeline(timeline: DocumentTimeline) -> List[Tuple[TimeExpression, RevisedSentence]]:
    """Tag every expression of the timeline and pair it with its revised sentence."""
    revised = []
    for expression in tag_time_expressions(timeline):
        doc = timeline.docs[expression.doc_index]
        sentence = doc.sentences[expression.sentence_index]
        revised.append((expression, make_revised_sentence(sentence, expression, doc.timestamp)))
    return revised


def proxy_label(mapped_date: DateStamp, gold: RegimenLabel, delta_days: int) -> ExprClass:
    """START/END when mapped_date is within delta_days of the gold endpoint; the closer one wins, ties go to START."""
    if gold is None:
        raise ValueError("proxy_label needs a gold label")
    if not gold.taken:
        return ExprClass.NEITHER
    to_start = abs((mapped_date - gold.start).days) if gold.start is not None else None
    to_end = abs((mapped_date - gold.end).days) if gold.end is not None else None
    near_start = to_start is not None and to_start <= delta_days
    near_end = to_end is not None and to_end <= delta_days
    if near_start and near_end:
        return ExprClass.START if to_start <= to_end else ExprClass.END
    if near_start:
        return ExprClass.START
    if near_end:
        return ExprClass.END
    return ExprClass.NEITHER


def build_expression_dataset(
    examples: Sequence[Tuple[DocumentTimeline, RegimenLabel]],
    delta_days: int,
) -> List[Tuple[RevisedSentence, ExprClass]]:
    """Proxy-labeled revised sentences from every tagged expression, not-taken examples included."""
    data = []
    for timeline, gold in examples:
        for _, revised in revise_timeline(timeline):
            data.append((revised, proxy_label(revised.mapped_date, gold, delta_days)))
    counts = Counter(label for _, label in data)
    logger.info(
        f"Expression dataset: {len(data)} sentences "
        f"(START {counts[ExprClass.START]}, END {counts[ExprClass.END]}, NEITHER {counts[ExprClass.NEITHER]})"
    )
    return data


def class_weights(labels: np.ndarray, n_classes: int = 3) -> np.ndarray:
    """Per-sample inverse-frequency weights; they average to 1 over the data."""
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    present = np.count_nonzero(counts)
    per_class = np.zeros(n_classes)
    per_class[counts > 0] = len(labels) / (present * counts[counts > 0])
    return per_class[labels]


def expression_training_set(
    data: Sequence[Tuple[RevisedSentence, ExprClass]],
    feature_config: FeatureConfig,
    weighted: bool = True,
) -> Tuple[ssp.csr_matrix, np.ndarray, Optional[np.ndarray]]:
    """Design matrix, labels and per-sample class weights of the classifier's objective."""
    labels = np.asarray([int(label) for _, label in data], dtype=np.int64)
    X = design_matrix([revised.text for revised, _ in data], feature_config)
    return X, labels, class_weights(labels) if weighted else None


def train_expression_classifier(
    data: Sequence[Tuple[RevisedSentence, ExprClass]],
    config: TrainConfig,
    feature_config: FeatureConfig,
    delta_days: int = 3,
    weighted: bool = True,
) -> ExprModel:
    if not data:
        raise ValueError("Cannot train the expression classifier on an empty dataset")
    X, labels, weights = expression_training_set(data, feature_config, weighted)
    missing = [c.name for c in ExprClass if not np.any(labels == int(c))]
    if missing:
        logger.warning(f"Expression training data has no examples of {', '.join(missing)}")

    params, _ = fit_softmax_regression(
        X, labels, 3, config.learning_rate, config.epochs, config.l2, config.seed,
        sample_weight=weights,
        label="expression classifier",
    )
    return ExprModel(W=params["W"], b=params["b"], feature_config=feature_config, delta_days=delta_days, seed=config.seed)


def score_expressions(model: ExprModel, revised: Sequence[RevisedSentence]) -> List[ExprScore]:
    if not revised:
        return []
    X = design_matrix([rs.text for rs in revised], model.feature_config)
    probs = softmax(np.asarray(X @ model.W.T) + model.b)
    return [ExprScore(*row) for row in probs.tolist()]


def score_expression(model: ExprModel, revised: RevisedSentence) -> ExprScore:
    """Softmax of the linear scores of the revised sentence's features."""
    return score_expressions(model, [revised])[0]
