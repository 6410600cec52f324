"""Tests for the synthetic corpus generator."""
import filecmp
import json
import os
import re
import tempfile
from datetime import date

import pytest

from models.settings import GenConfig
from models.temporal import TimeBucket
from services.corpus_service import load_lexicon, mentions_drug, save_corpus, split_sentences
from services.synth_service import (
    format_date,
    generate_corpus,
    generate_with_traces,
    load_templates,
    start_cue_fraction,
)
from services.temporal_service import tag_sentence, tag_text

_large = {}


def _large_corpus():
    """The default-size corpus, generated once."""
    if not _large:
        _large["examples"], _large["traces"] = generate_with_traces(GenConfig(n_examples=2000, seed=7))
    return _large["examples"], _large["traces"]


def _template_pattern(template):
    escaped = re.escape(template)
    return re.compile(re.sub(r"\\\{\w+\\\}", ".+?", escaped), re.IGNORECASE)


def test_same_seed_same_file():
    print("1. Testing determinism...")
    first, second = tempfile.mktemp(suffix=".jsonl"), tempfile.mktemp(suffix=".jsonl")
    try:
        save_corpus(generate_corpus(GenConfig(n_examples=120, seed=21)), first)
        save_corpus(generate_corpus(GenConfig(n_examples=120, seed=21)), second)
        assert filecmp.cmp(first, second, shallow=False)
        save_corpus(generate_corpus(GenConfig(n_examples=120, seed=22)), second)
        assert not filecmp.cmp(first, second, shallow=False)
    finally:
        for path in (first, second):
            if os.path.exists(path):
                os.remove(path)
    print("   ✓ Byte-identical corpora for one seed")


def test_corpus_statistics():
    print("\n2. Testing corpus statistics...")
    examples, traces = _large_corpus()
    assert len(examples) == 2000
    taken = sum(1 for example in examples if example.gold.taken) / len(examples)
    assert abs(taken - 0.53) <= 0.035, f"Taken fraction {taken:.3f}"
    fraction = start_cue_fraction(traces, examples)
    assert abs(fraction - 0.5) <= 0.05, f"Start cue fraction {fraction:.3f}"
    profiles = {trace.profile for trace in traces}
    assert len(profiles) == 5
    print(f"   ✓ Taken {taken:.3f}, start cues {fraction:.3f}")


def test_gold_invariants():
    print("\n3. Testing gold regimens...")
    examples, traces = _large_corpus()
    for example, trace in zip(examples, traces):
        assert (example.patient_id, example.drug.canonical_name) == (trace.patient_id, trace.drug)
        timestamps = [doc.timestamp for doc in example.documents]
        assert timestamps == sorted(timestamps) and len(set(timestamps)) == len(timestamps)
        assert any(mentions_drug(doc.text, example.drug) for doc in example.documents)
        gold = example.gold
        if not gold.taken:
            assert gold.start is None and gold.end is None and trace.start_cue is None
            continue
        assert timestamps[0] < gold.start <= timestamps[-2]
        if gold.end is not None:
            assert gold.start < gold.end <= timestamps[-1]
        if trace.start_on_visit:
            assert gold.start in timestamps
    print("   ✓ Every example valid, every drug mentioned")


def test_start_cues_are_exact():
    print("\n4. Testing start cues...")
    examples, traces = _large_corpus()
    checked = 0
    for example, trace in zip(examples, traces):
        if trace.start_cue is None or trace.start_cue == TimeBucket.MONTH_YEAR:
            continue
        mapped = {e.mapped_date for doc in example.documents for e in tag_text(doc.text, doc.timestamp)}
        assert example.gold.start in mapped, (example.patient_id, trace.start_cue)
        checked += 1
    assert checked > 300
    print(f"   ✓ {checked} start cues map to the gold start")


def test_approximate_end_cues_never_exact():
    print("\n5. Testing end cues...")
    examples, traces = _large_corpus()
    approximate = 0
    for example, trace in zip(examples, traces):
        if example.gold.end is None or trace.end_on_visit:
            continue
        mapped = {e.mapped_date for doc in example.documents for e in tag_text(doc.text, doc.timestamp)}
        assert example.gold.end not in mapped, example.patient_id
        if trace.end_cue is not None:
            assert trace.end_cue_exact is False
            approximate += 1
    assert approximate > 0
    print(f"   ✓ {approximate} off-visit ends carry only approximate cues")


def test_no_mid_sentences_outside_regimen():
    print("\n6. Testing note periods...")
    templates = load_templates()
    mid_patterns = [_template_pattern(t) for t in templates["mid"]]
    examples, _ = _large_corpus()
    for example in examples:
        gold = example.gold
        if not gold.taken:
            continue
        for doc in example.documents:
            outside = doc.timestamp < gold.start or (gold.end is not None and doc.timestamp >= gold.end)
            if not outside:
                continue
            for sentence in split_sentences(doc.text):
                assert not any(p.fullmatch(sentence) for p in mid_patterns), (example.patient_id, sentence)
    print("   ✓ No implicit on-drug sentence in PRE or POST notes")


def test_templates_have_no_stray_expressions():
    print("\n7. Testing template pools...")
    templates = load_templates()
    anchor = date(2018, 6, 15)
    pools = ("filler", "other_drug", "pre", "mid", "post", "not_taken")
    for pool in pools:
        for template in templates[pool]:
            for dose in templates["doses"]:
                text = template.format(
                    drug="sunitinib", other="aspirin", dose=dose, cycle="3",
                    reason=templates["reasons"][0], side_effect=templates["side_effects"][0],
                )
                assert tag_sentence(text, anchor) == [], text
    print("   ✓ Implicit sentences carry no time expressions")


def test_format_date_and_templates():
    print("\n8. Testing formats and template loading...")
    value = date(2018, 12, 8)
    assert format_date(value, "m/d/yy") == "12/8/18"
    assert format_date(value, "m/d/yyyy") == "12/8/2018"
    assert format_date(value, "iso") == "2018-12-08"
    assert format_date(value, "month d, yyyy") == "December 8, 2018"
    assert format_date(value, "mon d, yyyy") == "Dec 8, 2018"
    assert format_date(value, "m/d") == "12/8"
    with pytest.raises(ValueError):
        format_date(value, "d.m.y")

    path = tempfile.mktemp(suffix=".json")
    try:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump({"filler": ["Appetite fair."]}, handle)
        with pytest.raises(ValueError):
            load_templates(path)
    finally:
        os.remove(path)
    with pytest.raises(FileNotFoundError):
        load_templates(path)
    with pytest.raises(ValueError):
        GenConfig(taken_fraction=1.5)
    with pytest.raises(ValueError):
        GenConfig(visits_per_example=(2, 5))
    print("   ✓ Date styles and validation")


def test_other_lexicon():
    print("\n9. Testing the second lexicon...")
    lexicon = load_lexicon("nsclc")
    examples = generate_corpus(GenConfig(n_examples=50, seed=1, lexicon="nsclc"), lexicon)
    names = {drug.canonical_name for drug in lexicon.drugs}
    assert all(example.drug.canonical_name in names for example in examples)
    print("   ✓ Drugs drawn from the requested lexicon")


def main():
    """Run all tests."""
    print("=" * 50)
    print("TIFTI - Synthetic Corpus Tests")
    print("=" * 50)
    test_same_seed_same_file()
    test_corpus_statistics()
    test_gold_invariants()
    test_start_cues_are_exact()
    test_approximate_end_cues_never_exact()
    test_no_mid_sentences_outside_regimen()
    test_templates_have_no_stray_expressions()
    test_format_date_and_templates()
    test_other_lexicon()
    print("\n" + "=" * 50)
    print("✓ All tests passed!")
    print("=" * 50)


if __name__ == "__main__":
    main()
