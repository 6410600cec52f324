"""Sequence labeling service: PRE/MID/POST document probabilities, monotone decoding and intervals."""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as ssp

from models.corpus import DateStamp, DocumentTimeline, RegimenLabel
from models.learning import (
    DIRECTIONS,
    GRU_GATES,
    FeatureConfig,
    SequenceLabelerModel,
    SeqVariant,
    TimelineKind,
    TrainConfig,
    sequence_param_shapes,
)
from models.prediction import DocLabel, Evidence, IntervalPrediction, LabelDistribution
from services.corpus_service import label_documents
from services.feature_service import design_matrix
from utils.linear import fit_softmax_regression, init_uniform, log_softmax, softmax, softmax_regression_loss_and_grad

logger = logging.getLogger(__name__)


@dataclass
class SequenceBatch:
    """Stacked documents of several timelines: row block i belongs to timeline i."""
    X: ssp.csr_matrix
    lengths: List[int]
    targets: Optional[np.ndarray] = None

    @property
    def offsets(self) -> List[int]:
        return list(np.cumsum([0] + self.lengths[:-1]).astype(int))


def prepare_batch(
    timelines: Sequence[DocumentTimeline],
    feature_config: FeatureConfig,
    golds: Optional[Sequence[RegimenLabel]] = None,
) -> SequenceBatch:
    """Featurize each document from the concatenation of its sentences."""
    texts = [doc.text for timeline in timelines for doc in timeline.docs]
    targets = None
    if golds is not None:
        targets = np.asarray(
            [int(label) for timeline, gold in zip(timelines, golds) for label in label_documents(timeline, gold)],
            dtype=np.int64,
        )
    return SequenceBatch(
        X=design_matrix(texts, feature_config),
        lengths=[len(timeline) for timeline in timelines],
        targets=targets,
    )


# --- model construction -----------------------------------------------------

def init_sequence_model(
    variant: SeqVariant,
    feature_config: FeatureConfig,
    seed: int = 0,
    trained_on: TimelineKind = TimelineKind.ORIGINAL,
    d_in: int = 64,
    hidden: int = 32,
) -> SequenceLabelerModel:
    """Parameters drawn uniform(-0.1, 0.1) from the seeded generator, in file order."""
    rng = np.random.default_rng(seed)
    shapes = sequence_param_shapes(variant, feature_config.dim, d_in, hidden)
    params = {name: init_uniform(rng, shape) for name, shape in shapes.items()}
    return SequenceLabelerModel(
        variant=variant, feature_config=feature_config, params=params,
        trained_on=trained_on, seed=seed, d_in=d_in, hidden=hidden,
    )


def zero_sequence_model(variant: SeqVariant, feature_config: FeatureConfig, d_in: int = 64, hidden: int = 32) -> SequenceLabelerModel:
    shapes = sequence_param_shapes(variant, feature_config.dim, d_in, hidden)
    return SequenceLabelerModel(
        variant=variant, feature_config=feature_config,
        params={name: np.zeros(shape) for name, shape in shapes.items()}, d_in=d_in, hidden=hidden,
    )


# --- bidirectional GRU ------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_step(params: Dict[str, np.ndarray], direction: str, x: np.ndarray, h: np.ndarray):
    """One GRU step; returns the new state and the gate activations."""
    z = _sigmoid(x @ params[f"Wz_{direction}"] + h @ params[f"Uz_{direction}"] + params[f"bz_{direction}"])
    r = _sigmoid(x @ params[f"Wr_{direction}"] + h @ params[f"Ur_{direction}"] + params[f"br_{direction}"])
    n = np.tanh(x @ params[f"Wn_{direction}"] + (r * h) @ params[f"Un_{direction}"] + params[f"bn_{direction}"])
    return (1.0 - z) * n + z * h, (z, r, n)


def _step_indices(lengths: List[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Row index per (step, sequence) for the forward and the reversed scan; -1 marks padding."""
    T, B = max(lengths), len(lengths)
    forward = -np.ones((T, B), dtype=np.int64)
    backward = -np.ones((T, B), dtype=np.int64)
    offset = 0
    for i, length in enumerate(lengths):
        rows = np.arange(offset, offset + length)
        forward[:length, i] = rows
        backward[:length, i] = rows[::-1]
        offset += length
    return forward, backward


def _scan(params, direction, P, index, hidden):
    T, B = index.shape
    h = np.zeros((B, hidden))
    cache = []
    states = np.zeros((T, B, hidden))
    for t in range(T):
        valid = index[t] >= 0
        x = np.zeros((B, P.shape[1]))
        x[valid] = P[index[t, valid]]
        h_new, gates = gru_step(params, direction, x, h)
        cache.append((x, h, gates))
        states[t] = h_new
        h = h_new
    return states, cache


def _birnn_forward(model: SequenceLabelerModel, batch: SequenceBatch):
    params = model.params
    P = np.asarray(batch.X @ params["W_in"]) + params["b_in"]
    forward_index, backward_index = _step_indices(batch.lengths)
    forward_states, forward_cache = _scan(params, "f", P, forward_index, model.hidden)
    backward_states, backward_cache = _scan(params, "b", P, backward_index, model.hidden)

    n_rows = P.shape[0]
    H = np.zeros((n_rows, 2 * model.hidden))
    for t in range(forward_index.shape[0]):
        valid = forward_index[t] >= 0
        H[forward_index[t, valid], :model.hidden] = forward_states[t, valid]
        valid = backward_index[t] >= 0
        H[backward_index[t, valid], model.hidden:] = backward_states[t, valid]
    scores = H @ params["V"] + params["c"]
    cache = {
        "P": P, "H": H,
        "index": {"f": forward_index, "b": backward_index},
        "steps": {"f": forward_cache, "b": backward_cache},
    }
    return scores, cache


def _scan_backward(params, direction, dstates, cache, grads):
    T = len(cache)
    dh_next = np.zeros_like(dstates[0])
    dX = np.zeros((T,) + cache[0][0].shape)
    for t in range(T - 1, -1, -1):
        x, h_prev, (z, r, n) = cache[t]
        dh = dstates[t] + dh_next
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dh_prev = dh * z

        dn_pre = dn * (1.0 - n * n)
        grads[f"Wn_{direction}"] += x.T @ dn_pre
        grads[f"Un_{direction}"] += (r * h_prev).T @ dn_pre
        grads[f"bn_{direction}"] += dn_pre.sum(axis=0)
        dhr = dn_pre @ params[f"Un_{direction}"].T
        dr = dhr * h_prev
        dh_prev += dhr * r

        dr_pre = dr * r * (1.0 - r)
        dz_pre = dz * z * (1.0 - z)
        grads[f"Wr_{direction}"] += x.T @ dr_pre
        grads[f"Ur_{direction}"] += h_prev.T @ dr_pre
        grads[f"br_{direction}"] += dr_pre.sum(axis=0)
        grads[f"Wz_{direction}"] += x.T @ dz_pre
        grads[f"Uz_{direction}"] += h_prev.T @ dz_pre
        grads[f"bz_{direction}"] += dz_pre.sum(axis=0)
        dh_prev += dr_pre @ params[f"Ur_{direction}"].T + dz_pre @ params[f"Uz_{direction}"].T

        dX[t] = (
            dz_pre @ params[f"Wz_{direction}"].T
            + dr_pre @ params[f"Wr_{direction}"].T
            + dn_pre @ params[f"Wn_{direction}"].T
        )
        dh_next = dh_prev
    return dX


def _birnn_backward(model: SequenceLabelerModel, batch: SequenceBatch, cache, dscores: np.ndarray):
    params = model.params
    hidden = model.hidden
    grads = {name: np.zeros_like(value) for name, value in params.items()}
    grads["V"] = cache["H"].T @ dscores
    grads["c"] = dscores.sum(axis=0)
    dH = dscores @ params["V"].T

    dP = np.zeros_like(cache["P"])
    for direction, columns in (("f", slice(0, hidden)), ("b", slice(hidden, 2 * hidden))):
        index = cache["index"][direction]
        T, B = index.shape
        dstates = np.zeros((T, B, hidden))
        for t in range(T):
            valid = index[t] >= 0
            dstates[t, valid] = dH[index[t, valid], columns]
        dX = _scan_backward(params, direction, dstates, cache["steps"][direction], grads)
        for t in range(T):
            valid = index[t] >= 0
            dP[index[t, valid]] += dX[t, valid]

    grads["W_in"] = np.asarray(batch.X.T @ dP)
    grads["b_in"] = dP.sum(axis=0)
    return grads


def sequence_loss_and_grad(model: SequenceLabelerModel, batch: SequenceBatch, l2: float) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean per-document cross-entropy + l2 * ||params||^2 and its analytic gradient."""
    if batch.targets is None:
        raise ValueError("Batch has no targets")
    if model.variant == SeqVariant.INDEPENDENT_LOGISTIC:
        return softmax_regression_loss_and_grad(model.params, batch.X, batch.targets, l2)

    scores, cache = _birnn_forward(model, batch)
    n = scores.shape[0]
    log_p = log_softmax(scores)
    loss = -np.sum(log_p[np.arange(n), batch.targets]) / n
    dscores = np.exp(log_p)
    dscores[np.arange(n), batch.targets] -= 1.0
    dscores /= n
    grads = _birnn_backward(model, batch, cache, dscores)
    for name, value in model.params.items():
        loss += l2 * np.sum(value * value)
        grads[name] += 2.0 * l2 * value
    return float(loss), grads


def predict_batch_probs(model: SequenceLabelerModel, batch: SequenceBatch) -> np.ndarray:
    """Per-document probabilities for every row of the batch (rows x 3)."""
    if model.variant == SeqVariant.INDEPENDENT_LOGISTIC:
        scores = np.asarray(batch.X @ model.params["W"].T) + model.params["b"]
    else:
        scores, _ = _birnn_forward(model, batch)
    return softmax(scores)


def predict_doc_probs(model: SequenceLabelerModel, timeline: DocumentTimeline) -> List[LabelDistribution]:
    """One PRE/MID/POST distribution per document of the timeline."""
    if timeline.is_empty:
        raise ValueError("Cannot label an empty timeline")
    probs = predict_batch_probs(model, prepare_batch([timeline], model.feature_config))
    return [LabelDistribution(*row) for row in probs.tolist()]


# --- decoding ---------------------------------------------------------------

def _as_rows(probs) -> List[Tuple[float, float, float]]:
    return [p.as_tuple() if isinstance(p, LabelDistribution) else tuple(p) for p in probs]


def constrained_decode(probs) -> List[DocLabel]:
    """Most probable PRE* MID* POST* sequence (sum of log probabilities).

    Ties go to the sequence with more PRE, then more MID.
    """
    rows = _as_rows(probs)
    if not rows:
        raise ValueError("Cannot decode an empty sequence")
    with np.errstate(divide="ignore"):
        log_p = np.log(np.asarray(rows, dtype=np.float64)).tolist()

    n = len(rows)
    # best[t][s] = (score, n_pre, n_mid) of the best valid prefix ending in state s
    best = [[(log_p[0][s], int(s == 0), int(s == 1)) for s in range(3)]]
    back = [[0, 0, 0]]
    for t in range(1, n):
        row, pointers = [], []
        for s in range(3):
            prev = max(range(s + 1), key=lambda q: best[t - 1][q])
            score, n_pre, n_mid = best[t - 1][prev]
            row.append((score + log_p[t][s], n_pre + int(s == 0), n_mid + int(s == 1)))
            pointers.append(prev)
        best.append(row)
        back.append(pointers)

    state = max(range(3), key=lambda s: best[n - 1][s])
    path = [state]
    for t in range(n - 1, 0, -1):
        state = back[t][state]
        path.append(state)
    return [DocLabel(s) for s in reversed(path)]


def is_monotone(labels: Sequence[DocLabel]) -> bool:
    return all(a <= b for a, b in zip(labels, labels[1:]))


def interval_from_labels(labels: Sequence[DocLabel], timestamps: Sequence[DateStamp]) -> IntervalPrediction:
    """Start at the first MID (or first POST when no MID), end at the first POST; no MID/POST means not taken."""
    if len(labels) != len(timestamps):
        raise ValueError(f"{len(labels)} labels for {len(timestamps)} timestamps")
    if not is_monotone(labels):
        raise ValueError(f"Labels are not monotone: {[label.name for label in labels]}")
    first_mid = next((ts for label, ts in zip(labels, timestamps) if label == DocLabel.MID), None)
    first_post = next((ts for label, ts in zip(labels, timestamps) if label == DocLabel.POST), None)
    if first_mid is None and first_post is None:
        return IntervalPrediction.not_taken()
    start = first_mid if first_mid is not None else first_post
    return IntervalPrediction(
        taken=True,
        start=start,
        end=first_post,
        evidence={"start": Evidence.TIMELINE, "end": Evidence.TIMELINE},
    )


# --- training ---------------------------------------------------------------

def train_sequence_labeler(
    examples: Sequence[Tuple[DocumentTimeline, RegimenLabel]],
    config: TrainConfig,
    variant: SeqVariant,
    feature_config: FeatureConfig,
    trained_on: TimelineKind = TimelineKind.ORIGINAL,
    d_in: int = 64,
    hidden: int = 32,
) -> SequenceLabelerModel:
    """Full-batch gradient descent on per-document labels derived from the gold intervals."""
    if not examples:
        raise ValueError("Cannot train a sequence labeler on an empty training set")
    for timeline, gold in examples:
        if gold is None:
            raise ValueError("Every training example needs a gold label")
        if timeline.is_empty:
            raise ValueError("Training timelines must be non-empty")

    timelines = [timeline for timeline, _ in examples]
    batch = prepare_batch(timelines, feature_config, [gold for _, gold in examples])
    logger.info(
        f"Training {variant.value} labeler on {len(timelines)} {trained_on.value.lower()} timelines "
        f"({batch.X.shape[0]} documents, {config.epochs} epochs, lr {config.learning_rate})"
    )

    if variant == SeqVariant.INDEPENDENT_LOGISTIC:
        params, _ = fit_softmax_regression(
            batch.X, batch.targets, 3, config.learning_rate, config.epochs, config.l2, config.seed,
            label=f"{trained_on.value.lower()} timeline labeler",
        )
        return SequenceLabelerModel(
            variant=variant, feature_config=feature_config, params=params,
            trained_on=trained_on, seed=config.seed, d_in=d_in, hidden=hidden,
        )

    model = init_sequence_model(variant, feature_config, config.seed, trained_on, d_in, hidden)
    for epoch in range(config.epochs):
        loss, grads = sequence_loss_and_grad(model, batch, config.l2)
        for name in model.params:
            model.params[name] -= config.learning_rate * grads[name]
        logger.debug(f"BIRNN epoch {epoch + 1}/{config.epochs}: loss {loss:.6f}")
    logger.info(f"Trained BIRNN labeler, last loss {loss:.6f}")
    return model
