from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finqa_harness.metrics import (DEVIATION_CAP, EmptyRun, MissingPrediction, StepCountMismatch,
                                   aggregate_report, bucket, exact_match, lcs_length, mean_rouge,
                                   render_crosstab, render_deviation_table, render_em_table, render_report,
                                   result_deviation, result_em, round_sig, rouge, split_sentences,
                                   step_crosstab, tolerance_match)
from finqa_harness.pipeline import read_answers
from finqa_harness.postprocess import extract_steps, recompute
from finqa_harness.program import parse_program

words = st.lists(st.sampled_from(["a", "b", "c", "d", "e"]), max_size=9)


def brute_lcs(a, b):
    """Longest subsequence of ``a`` that is also a subsequence of ``b``, by enumeration."""
    def is_subseq(s, t):
        it = iter(t)
        return all(x in it for x in s)

    for n in range(min(len(a), len(b)), 0, -1):
        if any(is_subseq(c, b) for c in itertools.combinations(a, n)):
            return n
    return 0


@given(words, words)
def test_lcs_matches_enumeration(a, b):
    assert lcs_length(a, b) == brute_lcs(a, b)


@given(st.text(alphabet="ab .\n", max_size=40), st.text(alphabet="ab .\n", max_size=40))
def test_rouge_bounds_and_symmetry(x, y):
    s, t = rouge(x, y), rouge(y, x)
    for v in (s.rouge1, s.rouge2, s.rougeL, s.rougeLsum):
        assert 0.0 <= v <= 1.0
    # F1 is symmetric; the summary-level variant is not, since it reads the reference sentence by sentence
    assert (s.rouge1, s.rouge2, s.rougeL) == pytest.approx((t.rouge1, t.rouge2, t.rougeL))


def test_rouge_small_cases():
    assert rouge("", "") == rouge("a", "a")
    assert rouge("", "a").rouge1 == 0.0
    # one token each: no bigrams, identity decides
    assert rouge("net", "net").rouge2 == 1.0
    assert rouge("net", "gross").rouge2 == 0.0
    s = rouge("the cat sat", "the cat ran")
    assert s.rouge1 == pytest.approx(2 / 3)
    assert s.rouge2 == pytest.approx(1 / 2)
    assert s.rougeL == pytest.approx(2 / 3)


def test_rouge_l_sum_uses_sentence_union():
    # reference sentence "a b c d" is covered by two candidate sentences together
    s = rouge("a b\nc d", "a b c d")
    assert s.rougeL == 1.0 and s.rougeLsum == 1.0
    s = rouge("c d\na b", "a b c d")
    assert s.rougeL == pytest.approx(0.5)
    assert s.rougeLsum == 1.0


def test_split_sentences():
    assert split_sentences("Revenue rose. Costs fell!\nNet: up?  yes") == [
        ["revenue", "rose"], ["costs", "fell"], ["net", "up"], ["yes"]]
    assert split_sentences("  \n ") == []


def test_mean_rouge():
    m = mean_rouge([("a b", "a b"), ("a", "b")])
    assert m.rouge1 == 0.5
    with pytest.raises(EmptyRun):
        mean_rouge([])


rouge_words = st.lists(st.sampled_from(["net", "revenue", "rose", "cash", "fell", "2019", "5"]),
                       min_size=2, max_size=12)
lines = st.lists(rouge_words, min_size=1, max_size=3).map(lambda ls: "\n".join(" ".join(w) for w in ls))


@settings(deadline=None)  # the first call pays for the package import
@given(lines, lines)
def test_agrees_with_rouge_score_package(cand, ref):
    rouge_scorer = pytest.importorskip("rouge_score.rouge_scorer")
    scorer = rouge_scorer.RougeScorer(["rouge1", "rouge2", "rougeL", "rougeLsum"])
    want = scorer.score(ref, cand)
    got = rouge(cand, ref)
    for name in ("rouge1", "rouge2", "rougeL", "rougeLsum"):
        assert getattr(got, name) == pytest.approx(want[name].fmeasure, abs=1e-12), name


# --- numbers ---------------------------------------------------------------------

def test_round_sig_and_result_em():
    assert round_sig(291.66667) == 291.7
    assert round_sig(0.141357) == 0.1414
    assert result_em(0.14136, 0.141357)
    assert not result_em(0.141, 0.141357)
    assert not result_em(None, 1.0)


def test_deviation_and_tolerance():
    assert result_deviation(5.0, 3.0) == 2.0
    assert result_deviation(4.375e9, 4375.0) == DEVIATION_CAP
    with pytest.raises(MissingPrediction):
        result_deviation(None, 1.0)
    assert tolerance_match(109.9, 100.0)
    assert tolerance_match(110.0, 100.0)
    assert not tolerance_match(110.1, 100.0)
    assert tolerance_match(-0.95, -1.0)
    assert tolerance_match(1e-10, 0.0) and not tolerance_match(1e-3, 0.0)
    assert not tolerance_match(None, 1.0)
    with pytest.raises(ValueError):
        tolerance_match(1.0, 1.0, tol=-0.1)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_deviation_capped_and_symmetric(p, g):
    assert 0 <= result_deviation(p, g) == result_deviation(g, p) <= DEVIATION_CAP


def test_exact_match_components():
    gold = parse_program("subtract(10, 4), divide(#0, 4)")
    parsed = recompute(extract_steps("Step 1: subtract(10, 5) = 5\nStep 2: divide(#0, 4) = 1.5\nAnswer: 1.5"))
    m = exact_match(parsed, gold, 1.5)
    assert m.operator_steps == (True, True)
    assert m.arg1_steps == (True, True)
    assert m.arg2_steps == (False, True)
    assert (m.operator_em, m.arg1_em, m.arg2_em) == (True, True, False)
    assert m.stated_result_em and not m.recomputed_result_em
    with pytest.raises(StepCountMismatch):
        exact_match(recompute(extract_steps("Step 1: add(1, 2) = 3\nAnswer: 3")), gold, 1.5)


# --- crosstab and aggregation ----------------------------------------------------

def test_buckets():
    assert [bucket(n) for n in (0, 1, 2, 3, 9)] == [0, 0, 1, 2, 2]
    assert step_crosstab([(1, 1), (3, 1), (0, 2), (2, 2), (5, 4)]) == [[1, 0, 1], [1, 1, 0], [0, 0, 1]]


def test_crosstab_layout(golden_dir):
    assert render_crosstab([[355, 71, 63], [21, 204, 62], [6, 19, 47]]) == \
        (golden_dir / "table2_crosstab.md").read_text()


def test_report_from_golden_answers(golden_dir):
    records = read_answers(golden_dir / "answers.jsonl")
    report = aggregate_report(records, "cfg", "tx", labels={"model": "m", "variant": "v"})
    want = json.loads((golden_dir / "report.json").read_text())
    got = report.to_json()
    for key in ("crosstab", "n_aligned", "operator_em", "arg1_em", "arg2_em", "stated_result_em",
                "recomputed_result_em", "mean_stated_deviation", "mean_recomputed_deviation",
                "stated_tolerance_accuracy", "recomputed_tolerance_accuracy", "tag_histogram",
                "parse_status_counts", "mean_rougeL"):
        assert got[key] == want[key], key
    assert report.digest() == aggregate_report(records, "cfg", "tx", labels={"model": "m", "variant": "v"}).digest()
    with pytest.raises(EmptyRun):
        aggregate_report([])


def test_rendered_tables(golden_dir):
    report = aggregate_report(read_answers(golden_dir / "answers.jsonl"), labels={"model": "m", "variant": "v"})
    em = render_em_table(report).splitlines()
    assert em[0] == ("| Model | Variant | Arg 1 - EM | Arg 2 - EM | Operator - EM | "
                     "Result - EM (stated) | Result - EM (calculator) |")
    assert em[2] == "| m | v | 91.67% | 100.00% | 95.83% | 33.33% | 80.00% |"
    dev = render_deviation_table(report).splitlines()
    assert dev[2] == "| m | v | 10058.527 | 10057.662 | 0.745 |"
    assert "## Step counts" in render_report(report)


def test_deviation_cell_marks_the_cap(golden_dir):
    records = [r for r in read_answers(golden_dir / "answers.jsonl") if r.example_id == "ex17"]
    report = aggregate_report(records, labels={"model": "m", "variant": "v"})
    assert render_deviation_table(report).splitlines()[2].startswith("| m | v | >100k | >100k |")

