from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from finqa_harness.genclient import GenParams, ReplayClient, ReplayMiss, Transcript
from finqa_harness.metrics import mean_rouge
from finqa_harness.serialize import (EmptyTable, MissingExemplarAsset, SerializationMethod,
                                     build_serialization_prompt, column_headers, load_exemplar_asset,
                                     render_pipe_table, serialize_llm, serialize_naive, table_hash)

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "scripts"))
from serialization_rouge import render, score_modes  # noqa: E402

FIXTURE_PARAMS = GenParams(max_output_tokens=256)


def test_naive_single_cell():
    st = serialize_naive([["", "2019"], ["revenue", "100"]])
    assert st.text == "The revenue of 2019 is 100."
    assert st.method is SerializationMethod.NAIVE
    assert st.source_table_hash == table_hash([["", "2019"], ["revenue", "100"]])


def test_naive_row_major_and_skips_empty_cells():
    table = [["", "2019", "2018"], ["revenue", "100", ""], ["costs", "40", "35"]]
    assert serialize_naive(table).text == (
        "The revenue of 2019 is 100. The costs of 2019 is 40. The costs of 2018 is 35.")


def test_naive_single_row_table():
    assert serialize_naive([["a", "", "c"]]).text == "The value of column 1 is a. The value of column 3 is c."


def test_naive_blank_labels_and_headers():
    assert serialize_naive([["", ""], ["", "7"]]).text == "The value of column 1 is 7."


def test_stacked_headers():
    table = [["", "year ended", "year ended"], ["", "2019", "2018"], ["sales", "1", "2"]]
    assert column_headers(table, header_rows=2) == ["", "year ended - 2019", "year ended - 2018"]
    assert serialize_naive(table, header_rows=2).text == (
        "The sales of year ended - 2019 is 1. The sales of year ended - 2018 is 2.")


@pytest.mark.parametrize("table", [[], [[]], [["", "2019"], ["revenue", ""]]])
def test_empty_tables(table):
    with pytest.raises(EmptyTable):
        serialize_naive(table)


def test_table_hash_is_content_based():
    assert table_hash([["a", "b"]]) == table_hash((("a", "b"),))
    assert table_hash([["a", "b"]]) != table_hash([["a", "c"]])


def test_prompts():
    table = [["", "2019"], ["revenue", "100"]]
    zero = build_serialization_prompt(table, "zero_shot")
    assert "Example 1" not in zero
    assert zero.endswith("Table:\n|  | 2019 |\n| revenue | 100 |\nSentences:")
    few = build_serialization_prompt(table, "few_shot")
    asset = load_exemplar_asset()
    assert few.count("Example ") == asset.k
    assert render_pipe_table(asset.exemplars[0][0]) in few
    with pytest.raises(ValueError):
        build_serialization_prompt(table, "three_shot")


def test_missing_asset(tmp_path):
    with pytest.raises(MissingExemplarAsset):
        load_exemplar_asset(tmp_path / "nope.json")
    short = tmp_path / "short.json"
    short.write_text(json.dumps({"version": "x", "k": 3, "exemplars": []}))
    with pytest.raises(MissingExemplarAsset):
        load_exemplar_asset(short)


def test_llm_serialization_failure_names_the_table():
    client = ReplayClient(Transcript())
    table = [["", "2019"], ["revenue", "100"]]
    with pytest.raises(ReplayMiss) as info:
        serialize_llm(table, client, "zero_shot", FIXTURE_PARAMS)
    assert info.value.context["table_hash"] == table_hash(table)


def test_few_shot_beats_zero_shot_on_fixture(fixture_dir):
    refs = json.loads((fixture_dir / "serialization_refs.json").read_text())
    client = ReplayClient(Transcript(fixture_dir / "serialization_transcript.jsonl"))
    scores = score_modes(refs, client, FIXTURE_PARAMS, load_exemplar_asset())
    assert scores["Fewshot"].rouge1 > scores["Zeroshot"].rouge1
    table = render(scores)
    assert table.splitlines()[0] == "| | rouge1 | rouge2 | rougeL | rougeLsum |"
    # one few-shot serialization on its own
    st = serialize_llm(refs[0]["table"], client, "few_shot", FIXTURE_PARAMS)
    assert st.method is SerializationMethod.LLM_FEW_SHOT
    assert mean_rouge([(st.text, refs[0]["reference"])]).rouge1 > 0.8
