"""Tests for tokenization and hashed n-gram features."""
from datetime import date

import numpy as np
import pytest

from models.corpus import DrugLexiconEntry, PatientDrugExample, RawDocument
from models.learning import FeatureConfig
from services.corpus_service import build_timeline
from services.feature_service import design_matrix, featurize, fnv1a_64, ngram_hash, tokenize

SMALL = FeatureConfig(ngram_orders=frozenset({1, 2}), dim=2 ** 10)


def test_fnv1a_reference_values():
    print("1. Testing FNV-1a 64...")
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8
    assert ngram_hash(1, "drug") == fnv1a_64("1\x1fdrug".encode("utf-8"))
    print("   ✓ Published test vectors reproduced")


def test_tokenize_keeps_placeholders():
    print("\n2. Testing tokenization...")
    tokens = tokenize("Started DRUG on TIME EXPLICIT-DATE, after OTHER-DRUG; Dose 50mg.")
    assert tokens == ["started", "DRUG", "on", "TIME", "EXPLICIT-DATE", "after", "OTHER-DRUG", "dose", "50mg"]
    assert tokenize("Drug drugs") == ["drug", "drugs"], "Only the exact placeholder survives verbatim"
    assert tokenize("...") == []
    print("   ✓ Placeholders verbatim, words lowercased, punctuation dropped")


def test_featurize_counts_and_indices():
    print("\n3. Testing featurization...")
    vector = featurize("DRUG DRUG DRUG", SMALL)
    assert len(vector) <= 5
    assert np.all(np.diff(vector.indices) > 0), "Indices strictly increasing"
    assert np.all(vector.indices < SMALL.dim) and np.all(vector.weights > 0)
    assert vector.weights.sum() == 5.0, "3 unigrams + 2 bigrams"
    empty = featurize("", SMALL)
    assert len(empty) == 0 and empty.dim == SMALL.dim
    print("   ✓ Counts add up, indices sorted and in range")


def test_featurize_is_deterministic():
    print("\n4. Testing determinism...")
    text = "Patient tolerating DRUG well since TIME RELATIVE-DAY."
    first, second = featurize(text, SMALL), featurize(text, SMALL)
    assert first.entries() == second.entries()
    expected = sorted({ngram_hash(1, "patient") % SMALL.dim, ngram_hash(2, "patient tolerating") % SMALL.dim})
    assert set(expected) <= set(first.indices.tolist())
    print("   ✓ Same text, same vector")


def test_drug_surface_invariance():
    """Sentences that differ only in the drug surface featurize identically after substitution."""
    print("\n5. Testing drug-name abstraction...")
    drug = DrugLexiconEntry("sunitinib", ("sunitinib", "Sutent"))
    docs = []
    for surface in ("sunitinib", "SUTENT"):
        example = PatientDrugExample(
            patient_id="P0-1", drug=drug,
            documents=(RawDocument(date(2018, 1, 1), f"Patient tolerating {surface} well."),),
        )
        docs.append(build_timeline(example).docs[0].text)
    assert featurize(docs[0], SMALL).entries() == featurize(docs[1], SMALL).entries()
    print("   ✓ Identical vectors for different surfaces")


def test_design_matrix_rows_normalized():
    print("\n6. Testing design matrix...")
    X = design_matrix(["DRUG started", "", "Patient tolerating DRUG well"], SMALL)
    assert X.shape == (3, SMALL.dim)
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    assert np.allclose(norms[[0, 2]], 1.0) and norms[1] == 0.0
    raw = design_matrix(["DRUG DRUG"], SMALL, normalize=False)
    assert raw.sum() == 3.0
    print("   ✓ L2-normalized CSR rows")


def test_feature_config_validation():
    print("\n7. Testing feature config...")
    with pytest.raises(ValueError):
        FeatureConfig(ngram_orders=frozenset(), dim=16)
    with pytest.raises(ValueError):
        FeatureConfig(ngram_orders=frozenset({0}), dim=16)
    with pytest.raises(ValueError):
        FeatureConfig(dim=1000)
    assert FeatureConfig.from_dict(SMALL.to_dict()) == SMALL
    print("   ✓ Invalid configs rejected")


def main():
    """Run all tests."""
    print("=" * 50)
    print("TIFTI - Feature Tests")
    print("=" * 50)
    test_fnv1a_reference_values()
    test_tokenize_keeps_placeholders()
    test_featurize_counts_and_indices()
    test_featurize_is_deterministic()
    test_drug_surface_invariance()
    test_design_matrix_rows_normalized()
    test_feature_config_validation()
    print("\n" + "=" * 50)
    print("✓ All tests passed!")
    print("=" * 50)


if __name__ == "__main__":
    main()
