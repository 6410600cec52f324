"""Tests for the command line."""
import io
import os
import shutil
import tempfile
from contextlib import redirect_stderr, redirect_stdout

import pytest

from handlers.commands import run
from services.cascade_service import load_predictions
from services.corpus_service import load_corpus
from tifti import main
from utils.report import read_summary

SMALL_TRAINING = ["--dim", "4096", "--seq-epochs", "60", "--expr-epochs", "60", "--seed", "3"]


def _quiet(argv):
    """Run the CLI, returning (exit code, stdout)."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue()


def test_tag_command():
    print("1. Testing tag...")
    code, output = _quiet(["tag", "--text", "Patient started DRUG on 12/8/18.", "--anchor", "2018-12-15"])
    assert code == 0
    assert output.strip() == "12/8/18\tEXPLICIT-DATE\t2018-12-08"
    code, output = _quiet(["tag", "--text", "No dates here.", "--anchor", "2018-12-15"])
    assert code == 0 and output == ""
    print("   ✓ Surface, bucket and mapped date printed")


def test_usage_errors():
    print("\n2. Testing exit codes...")
    assert _quiet(["evaluate", "--predictions", "p.jsonl"])[0] == 2
    assert _quiet(["tag", "--text", "today", "--anchor", "15/12/2018"])[0] == 2
    assert _quiet(["generate", "-o", "x.jsonl", "--method", "best"])[0] == 2
    assert _quiet(["frobnicate"])[0] == 2
    assert _quiet(["train", "--corpus", "missing.jsonl", "--model-dir", "models"])[0] == 2
    assert _quiet(["predict", "--corpus", "missing.jsonl", "--model-dir", "nowhere", "-o", "p.jsonl"])[0] == 2
    with pytest.raises(ValueError):
        run("frobnicate", {})
    print("   ✓ Usage and input errors exit with 2")


def test_generate_train_predict_evaluate():
    print("\n3. Testing the full command sequence...")
    work = tempfile.mkdtemp()
    corpus = os.path.join(work, "corpus.jsonl")
    model_dir = os.path.join(work, "models")
    predictions = os.path.join(work, "predictions.jsonl")
    report_dir = os.path.join(work, "reports")
    try:
        assert _quiet(["generate", "-n", "100", "-o", corpus, "--seed", "3"])[0] == 0
        assert len(load_corpus(corpus)) == 100
        print("   ✓ Corpus generated")

        assert _quiet(["train", "--corpus", corpus, "--model-dir", model_dir] + SMALL_TRAINING)[0] == 0
        assert sorted(os.listdir(model_dir)) == ["expr.model", "seq_original.model", "seq_simulated.model"]
        print("   ✓ Models trained")

        for method in ("timeline", "full"):
            code, _ = _quiet([
                "predict", "--corpus", corpus, "--model-dir", model_dir, "-o", predictions, "--method", method,
            ])
            assert code == 0
        loaded = load_predictions(predictions)
        assert len(loaded) == 100
        print("   ✓ Predictions written")

        code, output = _quiet([
            "evaluate", "--gold", corpus, "--predictions", predictions, "--report-dir", report_dir, "--method", "timeline",
        ])
        assert code == 0
        assert "FULL-TIFTI" in output and "start_0" in output
        # labeled with the method that wrote the predictions, not the --method flag
        assert list(read_summary(os.path.join(report_dir, "evaluate_summary.csv"))) == ["FULL-TIFTI"]
        assert os.path.exists(os.path.join(report_dir, "evaluate_agreement.csv"))
        print("   ✓ Evaluation report written")
    finally:
        shutil.rmtree(work)


def test_config_file_flag():
    print("\n4. Testing --config...")
    work = tempfile.mkdtemp()
    try:
        config_path = os.path.join(work, "run.env")
        with open(config_path, "w", encoding="utf-8") as handle:
            handle.write("n_examples=30\nseed=4\n")
        corpus = os.path.join(work, "corpus.jsonl")
        assert _quiet(["generate", "-o", corpus, "--config", config_path])[0] == 0
        assert len(load_corpus(corpus)) == 30
        assert _quiet(["generate", "-o", corpus, "--config", config_path, "-n", "12"])[0] == 0
        assert len(load_corpus(corpus)) == 12
        assert _quiet(["generate", "-o", corpus, "--config", os.path.join(work, "missing.env")])[0] == 2
    finally:
        shutil.rmtree(work)
    print("   ✓ Flags override the config file")


def main_tests():
    """Run all tests."""
    print("=" * 50)
    print("TIFTI - Command Line Tests")
    print("=" * 50)
    test_tag_command()
    test_usage_errors()
    test_generate_train_predict_evaluate()
    test_config_file_flag()
    print("\n" + "=" * 50)
    print("✓ All tests passed!")
    print("=" * 50)


if __name__ == "__main__":
    main_tests()
