"""Tests for the sequence labelers, the monotone decoder and interval extraction."""
import random
from datetime import date, timedelta

import numpy as np
import pytest

from models.corpus import CondensedDocument, DocumentTimeline, RegimenLabel
from models.learning import FeatureConfig, SeqVariant, TimelineKind, TrainConfig
from models.prediction import DocLabel, Evidence
from services.corpus_service import label_documents
from services.feature_service import design_matrix
from services.seqlabel_service import (
    constrained_decode,
    gru_step,
    init_sequence_model,
    interval_from_labels,
    is_monotone,
    predict_batch_probs,
    predict_doc_probs,
    prepare_batch,
    sequence_loss_and_grad,
    train_sequence_labeler,
    zero_sequence_model,
)
from utils.gradcheck import check_gradients
from utils.linear import fit_softmax_regression, softmax

TINY = FeatureConfig(ngram_orders=frozenset({1, 2}), dim=2 ** 5)
SMALL = FeatureConfig(ngram_orders=frozenset({1, 2}), dim=2 ** 10)
PHRASES = {
    DocLabel.PRE: ["Plan to start DRUG soon.", "Discussed DRUG as an option.", "Awaiting approval for DRUG."],
    DocLabel.MID: ["Tolerating DRUG well.", "Continues DRUG daily.", "Currently on DRUG with stable disease."],
    DocLabel.POST: ["Stopped DRUG completely.", "Remains off DRUG.", "No longer on DRUG."],
}


def _timeline(labels, rng, first=date(2018, 1, 1)):
    docs, day = [], first
    for i, label in enumerate(labels):
        docs.append(CondensedDocument(day, (rng.choice(PHRASES[label]),), origin=i))
        day = day + timedelta(days=rng.randint(7, 30))
    return DocumentTimeline(docs=tuple(docs))


def _toy_examples(n, seed, lengths=None):
    """Timelines whose PRE/MID/POST documents use disjoint vocabulary, with matching gold labels."""
    rng = random.Random(seed)
    examples = []
    for _ in range(n):
        length = lengths[len(examples)] if lengths else rng.randint(3, 6)
        s = rng.randint(1, length - 1)
        e = rng.randint(s + 1, length) if rng.random() < 0.7 else length
        labels = [DocLabel.PRE] * s + [DocLabel.MID] * (e - s) + [DocLabel.POST] * (length - e)
        timeline = _timeline(labels, rng)
        end = timeline.docs[e].timestamp if e < length else None
        examples.append((timeline, RegimenLabel(True, timeline.docs[s].timestamp, end)))
    return examples


def _brute_force(log_p):
    """Best PRE^a MID^b POST^c sequence with ties going to more PRE, then more MID."""
    n = len(log_p)
    best = None
    for a in range(n + 1):
        for b in range(n - a + 1):
            states = [0] * a + [1] * b + [2] * (n - a - b)
            score = 0.0
            for t, s in enumerate(states):
                score += log_p[t][s]
            key = (score, a, b)
            if best is None or key > best[0]:
                best = (key, states)
    return best[1], best[0][0]


def test_decoder_matches_brute_force():
    """1,000 seeded random matrices with 1-8 documents."""
    print("1. Testing constrained decoding against brute force...")
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        probs = rng.dirichlet(np.ones(3), size=n)
        labels = constrained_decode(probs.tolist())
        log_p = np.log(probs).tolist()
        expected, best_score = _brute_force(log_p)
        assert [int(label) for label in labels] == expected, (probs, labels, expected)
        score = sum(log_p[t][int(label)] for t, label in enumerate(labels))
        assert abs(score - best_score) < 1e-9
        assert is_monotone(labels)
    print("   ✓ 1000 matrices decoded optimally")


def test_decoder_tie_break_and_zeros():
    print("\n2. Testing decoder ties and zero probabilities...")
    uniform = [(1 / 3, 1 / 3, 1 / 3)] * 4
    assert constrained_decode(uniform) == [DocLabel.PRE] * 4, "Ties prefer PRE"
    assert constrained_decode([(0.0, 0.5, 0.5), (0.0, 0.5, 0.5)]) == [DocLabel.MID, DocLabel.MID], "Then MID"
    assert constrained_decode([(0.0, 1.0, 0.0)]) == [DocLabel.MID]
    # a non-monotone argmax path is repaired
    labels = constrained_decode([(0.1, 0.1, 0.8), (0.8, 0.1, 0.1), (0.1, 0.8, 0.1)])
    assert is_monotone(labels)
    with pytest.raises(ValueError):
        constrained_decode([])
    print("   ✓ Ties go to PRE, then MID")


def test_decoder_invariant_to_row_scaling():
    """Adding a constant to one position's log-probabilities leaves the path unchanged."""
    print("\n3. Testing per-position shift invariance...")
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        probs = rng.dirichlet(np.ones(3), size=n)
        scaled = probs.copy()
        scaled[int(rng.integers(0, n))] *= float(rng.uniform(0.1, 10.0))
        assert constrained_decode(probs.tolist()) == constrained_decode(scaled.tolist())
    print("   ✓ Path unchanged")


def test_interval_round_trip():
    """interval_from_labels(label_documents(...)) recovers the earliest timestamps at or after the gold dates."""
    print("\n4. Testing label/interval round trip...")
    rng = random.Random(500)
    for _ in range(500):
        n = rng.randint(1, 10)
        day = date(2017, 1, 1) + timedelta(days=rng.randint(0, 365))
        docs = []
        for i in range(n):
            docs.append(CondensedDocument(day, ("DRUG",), origin=i))
            day = day + timedelta(days=rng.randint(0, 40))
        timeline = DocumentTimeline(docs=tuple(docs))
        first, last = timeline.timestamps[0], timeline.timestamps[-1]
        start = first + timedelta(days=rng.randint(-30, (last - first).days + 30))
        end = start + timedelta(days=rng.randint(0, 200)) if rng.random() < 0.7 else None
        gold = RegimenLabel(True, start, end)

        prediction = interval_from_labels(label_documents(timeline, gold), timeline.timestamps)
        after_start = [ts for ts in timeline.timestamps if ts >= start]
        if not after_start:
            assert not prediction.taken
            continue
        assert prediction.taken and prediction.start == after_start[0]
        after_end = [ts for ts in timeline.timestamps if end is not None and ts >= end]
        assert prediction.end == (after_end[0] if after_end else None)
        assert prediction.evidence == {"start": Evidence.TIMELINE, "end": Evidence.TIMELINE}
    print("   ✓ 500 random intervals recovered")


def test_interval_from_labels_edge_cases():
    print("\n5. Testing interval edge cases...")
    days = [date(2018, 1, 1), date(2018, 2, 1), date(2018, 3, 1)]
    post_only = interval_from_labels([DocLabel.PRE, DocLabel.POST, DocLabel.POST], days)
    assert post_only.start == post_only.end == date(2018, 2, 1), "Start falls back to the first POST"
    assert not interval_from_labels([DocLabel.PRE] * 3, days).taken
    assert interval_from_labels([DocLabel.MID] * 3, days).ongoing
    with pytest.raises(ValueError):
        interval_from_labels([DocLabel.MID, DocLabel.PRE, DocLabel.POST], days)
    with pytest.raises(ValueError):
        interval_from_labels([DocLabel.PRE], days)
    print("   ✓ POST-only, all-PRE, ongoing and invalid inputs")


def test_zero_model_is_uniform():
    print("\n6. Testing zero-weight models...")
    timeline = _timeline([DocLabel.PRE, DocLabel.MID, DocLabel.POST], random.Random(0))
    for variant in SeqVariant:
        model = zero_sequence_model(variant, TINY, d_in=4, hidden=3)
        for dist in predict_doc_probs(model, timeline):
            assert np.allclose(dist.as_tuple(), (1 / 3, 1 / 3, 1 / 3), atol=1e-12)
    with pytest.raises(ValueError):
        predict_doc_probs(zero_sequence_model(SeqVariant.BIRNN, TINY, 4, 3), DocumentTimeline())
    print("   ✓ Uniform output for both variants")


def test_probabilities_sum_to_one():
    print("\n7. Testing output distributions...")
    examples = _toy_examples(4, seed=9)
    for variant in SeqVariant:
        model = init_sequence_model(variant, TINY, seed=1, d_in=4, hidden=3)
        for timeline, _ in examples:
            for dist in predict_doc_probs(model, timeline):
                assert abs(sum(dist.as_tuple()) - 1.0) < 1e-9
    print("   ✓ Every document distribution sums to 1")


def test_single_document_birnn_matches_gru_step():
    """A length-1 timeline reduces the bidirectional network to one step per direction."""
    print("\n8. Testing single-document recurrence...")
    model = init_sequence_model(SeqVariant.BIRNN, TINY, seed=4, d_in=4, hidden=3)
    for params in model.params.values():
        params *= 5.0
    timeline = DocumentTimeline(docs=(CondensedDocument(date(2018, 1, 1), ("Tolerating DRUG well.",)),))
    x = np.asarray(design_matrix([timeline.docs[0].text], TINY) @ model.params["W_in"]) + model.params["b_in"]
    h0 = np.zeros((1, 3))
    forward, _ = gru_step(model.params, "f", x, h0)
    backward, _ = gru_step(model.params, "b", x, h0)
    expected = softmax(np.hstack([forward, backward]) @ model.params["V"] + model.params["c"])[0]
    [dist] = predict_doc_probs(model, timeline)
    assert np.allclose(dist.as_tuple(), expected, atol=1e-12)
    print("   ✓ Output equals one GRU step each way")


def test_logistic_gradient_check():
    print("\n9. Testing logistic gradients...")
    for seed in range(5):
        examples = _toy_examples(3, seed=seed)
        batch = prepare_batch([t for t, _ in examples], TINY, [g for _, g in examples])
        model = init_sequence_model(SeqVariant.INDEPENDENT_LOGISTIC, TINY, seed=seed)
        for params in model.params.values():
            params *= 10.0
        _, grads = sequence_loss_and_grad(model, batch, l2=1e-2)
        error = check_gradients(lambda p: sequence_loss_and_grad(model, batch, l2=1e-2)[0], model.params, grads)
        assert error <= 1e-5, f"seed {seed}: relative error {error}"
    print("   ✓ Max relative error <= 1e-5 on 5 instances")


def test_birnn_gradient_check():
    """Batches mix timeline lengths so padded steps are exercised."""
    print("\n10. Testing recurrent gradients...")
    for seed in range(5):
        examples = _toy_examples(3, seed=100 + seed, lengths=[2, 5, 3])
        batch = prepare_batch([t for t, _ in examples], TINY, [g for _, g in examples])
        model = init_sequence_model(SeqVariant.BIRNN, TINY, seed=seed, d_in=4, hidden=3)
        for params in model.params.values():
            params *= 5.0
        _, grads = sequence_loss_and_grad(model, batch, l2=1e-3)
        error = check_gradients(lambda p: sequence_loss_and_grad(model, batch, l2=1e-3)[0], model.params, grads)
        assert error <= 1e-4, f"seed {seed}: relative error {error}"
    print("   ✓ Max relative error <= 1e-4 on 5 instances")


def test_logistic_training_separable_toy_set():
    print("\n11. Testing logistic training...")
    examples = _toy_examples(10, seed=42)
    config = TrainConfig(learning_rate=0.5, epochs=200, l2=0.0, seed=0)
    model = train_sequence_labeler(examples, config, SeqVariant.INDEPENDENT_LOGISTIC, SMALL)
    batch = prepare_batch([t for t, _ in examples], SMALL, [g for _, g in examples])
    predicted = predict_batch_probs(model, batch).argmax(axis=1)
    assert np.array_equal(predicted, batch.targets), "Training accuracy must reach 1.0"
    assert model.trained_on == TimelineKind.ORIGINAL
    print("   ✓ Training accuracy 1.0")


def test_logistic_loss_non_increasing():
    print("\n12. Testing convex training loss...")
    examples = _toy_examples(10, seed=7)
    batch = prepare_batch([t for t, _ in examples], TINY, [g for _, g in examples])
    _, history = fit_softmax_regression(batch.X, batch.targets, 3, 0.1, 100, 1e-3, seed=0)
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))
    print(f"   ✓ Loss {history[0]:.4f} -> {history[-1]:.4f}, never increasing")


def test_birnn_training_reduces_loss():
    print("\n13. Testing recurrent training...")
    examples = _toy_examples(10, seed=8)
    config = TrainConfig(learning_rate=0.2, epochs=60, l2=1e-4, seed=3)
    model = train_sequence_labeler(
        examples, config, SeqVariant.BIRNN, TINY, TimelineKind.SIMULATED, d_in=6, hidden=4,
    )
    batch = prepare_batch([t for t, _ in examples], TINY, [g for _, g in examples])
    start = init_sequence_model(SeqVariant.BIRNN, TINY, seed=3, trained_on=TimelineKind.SIMULATED, d_in=6, hidden=4)
    before, _ = sequence_loss_and_grad(start, batch, 1e-4)
    after, _ = sequence_loss_and_grad(model, batch, 1e-4)
    assert after < before
    assert model.trained_on == TimelineKind.SIMULATED
    model.check_shapes()
    print(f"   ✓ Loss {before:.4f} -> {after:.4f}")


def test_training_rejects_bad_input():
    print("\n14. Testing training input checks...")
    config = TrainConfig()
    with pytest.raises(ValueError):
        train_sequence_labeler([], config, SeqVariant.INDEPENDENT_LOGISTIC, TINY)
    with pytest.raises(ValueError):
        train_sequence_labeler([(DocumentTimeline(), RegimenLabel(False))], config, SeqVariant.INDEPENDENT_LOGISTIC, TINY)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    print("   ✓ Empty sets and timelines rejected")


def test_l2_penalty_covers_every_parameter():
    print("\n15. Testing the l2 penalty...")
    examples = _toy_examples(2, seed=9)
    batch = prepare_batch([t for t, _ in examples], TINY, [g for _, g in examples])
    for variant in (SeqVariant.INDEPENDENT_LOGISTIC, SeqVariant.BIRNN):
        model = init_sequence_model(variant, TINY, seed=1, d_in=4, hidden=3)
        plain, plain_grads = sequence_loss_and_grad(model, batch, l2=0.0)
        penalized, grads = sequence_loss_and_grad(model, batch, l2=0.5)
        squares = sum(float(np.sum(value * value)) for value in model.params.values())
        assert abs(penalized - plain - 0.5 * squares) < 1e-10, variant
        for name, value in model.params.items():
            assert np.allclose(grads[name] - plain_grads[name], value), name
    print("   ✓ Weights and biases both carry l2 * ||params||^2")


def main():
    """Run all tests."""
    print("=" * 50)
    print("TIFTI - Sequence Labeler Tests")
    print("=" * 50)
    test_decoder_matches_brute_force()
    test_decoder_tie_break_and_zeros()
    test_decoder_invariant_to_row_scaling()
    test_interval_round_trip()
    test_interval_from_labels_edge_cases()
    test_zero_model_is_uniform()
    test_probabilities_sum_to_one()
    test_single_document_birnn_matches_gru_step()
    test_logistic_gradient_check()
    test_birnn_gradient_check()
    test_logistic_training_separable_toy_set()
    test_logistic_loss_non_increasing()
    test_birnn_training_reduces_loss()
    test_training_rejects_bad_input()
    test_l2_penalty_covers_every_parameter()
    print("\n" + "=" * 50)
    print("✓ All tests passed!")
    print("=" * 50)


if __name__ == "__main__":
    main()
