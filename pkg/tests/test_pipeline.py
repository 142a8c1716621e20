from __future__ import annotations

import json
from dataclasses import replace

import pytest

from finqa_harness.dataset import DatasetSplit, load_dataset
from finqa_harness.genclient import GenParams, ReplayClient, Transcript
from finqa_harness.metrics import EmptyRun
from finqa_harness.pipeline import (STAGES, AnswerRecord, ConfigError, MissingTemplateAsset, RunConfig,
                                    assemble_context, build_qa_prompt, evaluate, make_client, read_answers,
                                    run_example, run_split, write_answers)
from finqa_harness.postprocess import DiscrepancyTag, ParseStatus


@pytest.fixture
def config(fixture_dir):
    d = json.loads((fixture_dir / "run_config.json").read_text())
    return RunConfig.from_dict({**d, "dataset_path": str(fixture_dir / "finqa_fixture.json"),
                                "transcript_path": str(fixture_dir / "transcript.jsonl")})


@pytest.fixture
def split(fixture_dir):
    return load_dataset(fixture_dir / "finqa_fixture.json", "validation")


class Scripted:
    """Serializes tables as 'TABLE' and answers every question with the same program."""

    def __init__(self, fail_on=None):
        self.fail_on = fail_on
        self.prompts = []

    def generate(self, prompt, params):
        self.prompts.append(prompt)
        if self.fail_on and self.fail_on in prompt:
            raise RuntimeError("endpoint exploded")
        if prompt.endswith("Sentences:"):
            return "TABLE"
        return "Step 1: add(1, 2) = 3\nAnswer: 3"


# --- config ----------------------------------------------------------------------

@pytest.mark.parametrize("bad", [
    {"serialization": "fancy"}, {"context_scope": "everything"}, {"client_mode": "maybe"},
    {"max_tokens": 8, "overlap_tokens": 8}, {"k": 0}, {"workers": 0}, {"subsample_size": 0},
    {"embedder_id": "bert"}, {"exemplars": -1}, {"nonsense": 1}, {"gen": {"temperature": -1}},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_config_load_and_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("k: 2\ngen:\n  model_name: m\n")
    c = RunConfig.load(path, ["k=3", "gen.temperature=0.5", "subsample_size=null"])
    assert (c.k, c.gen.model_name, c.gen.temperature, c.subsample_size) == (3, "m", 0.5, None)
    with pytest.raises(ConfigError):
        RunConfig.load(path, ["k"])
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.yaml")
    path.write_text("- a\n- b\n")
    with pytest.raises(ConfigError):
        RunConfig.load(path)


def test_digest_covers_settings_not_locations(config):
    moved = replace(config, dataset_path="/elsewhere.json", output_dir="/tmp/x", workers=1)
    assert moved.digest() == config.digest()
    assert replace(config, k=3).digest() != config.digest()
    assert replace(config, gen=GenParams(temperature=0.7)).digest() != config.digest()
    assert config.labels == {"model": "llama-2-7b-chat", "variant": "naive, 2-shot"}


# --- prompt ----------------------------------------------------------------------

def test_qa_prompt_layout():
    p = build_qa_prompt("what is x?", "ctx line", exemplars=1)
    assert p.count("### Example") == 1
    assert p.endswith("### Task\nContext: ctx line\nQuestion: what is x?\n")
    assert "Step k:" in p
    assert build_qa_prompt("q", "c", exemplars=0).count("### Example") == 0
    with pytest.raises(MissingTemplateAsset):
        build_qa_prompt("q", "c", exemplars=99)
    with pytest.raises(MissingTemplateAsset):
        build_qa_prompt("q", "c", template_id="nope")


def test_context_scope(split):
    ex = split.examples[0]
    assert assemble_context(ex, "SER", "table_only") == "SER"
    full = assemble_context(ex, "SER", "full").splitlines()
    assert full == [*ex.pre_text, "SER", *ex.post_text]


# --- runs ------------------------------------------------------------------------

def test_record_fields_and_round_trip(config, split, tmp_path):
    records = run_split(split, config, ReplayClient(Transcript(config.transcript_path)))
    r = records[0]
    assert r.example_id == "ex01" and r.error is None
    assert 1 <= len(r.chunk_ids) <= config.k and len(r.chunk_scores) == len(r.chunk_ids)
    assert list(r.chunk_scores) == sorted(r.chunk_scores, reverse=True)
    assert r.parsed.parse_status is ParseStatus.CLEAN
    assert r.gold_text == "Step 1: subtract(5829, 5735) = 94\nAnswer: 94"
    write_answers(records, tmp_path / "a.jsonl")
    again = read_answers(tmp_path / "a.jsonl")
    assert again == records
    assert [x.dumps() for x in again] == [x.dumps() for x in records]


def test_order_and_content_do_not_depend_on_workers(config, split):
    client = ReplayClient(Transcript(config.transcript_path))
    one = run_split(split, replace(config, workers=1), client)
    many = run_split(split, replace(config, workers=8), client)
    assert [r.dumps() for r in one] == [r.dumps() for r in many]
    assert [r.example_id for r in one] == split.ids()


def test_stage_timings_add_up(config, split):
    r = run_example(split.examples[0], config, ReplayClient(Transcript(config.transcript_path)))
    assert set(r.timings) == {*STAGES, "total"}
    assert sum(r.timings[s] for s in STAGES) == pytest.approx(r.timings["total"], rel=1e-9, abs=1e-12)
    assert "timings" not in r.to_json()


def test_one_failure_does_not_sink_the_run(config, split):
    target = split.examples[4]
    records = run_split(split, config, Scripted(fail_on=target.question))
    failed = [r for r in records if r.error]
    assert [r.example_id for r in failed] == [target.id]
    assert failed[0].error == "RuntimeError: endpoint exploded"
    assert failed[0].parsed.parse_status is ParseStatus.FAILED
    assert failed[0].parsed.discrepancy_tags == {DiscrepancyTag.UNPARSEABLE_FORMAT}
    assert "failed" in failed[0].timings
    assert all(r.parsed.stated_final == 3 for r in records if not r.error)


def test_llm_serialization_feeds_the_prompt(config, split):
    client = Scripted()
    cfg = replace(config, serialization="llm_few_shot", context_scope="table_only", k=1)
    (r,) = run_split(DatasetSplit("validation", split.examples[:1]), cfg, client)
    assert r.error is None
    serialization_prompt, qa_prompt = client.prompts
    assert "Example 1" in serialization_prompt
    assert "Context: TABLE\n" in qa_prompt


def test_replay_miss_is_recorded_not_raised(config, split):
    cfg = replace(config, gen=GenParams(model_name="other"))
    records = run_split(split, cfg, ReplayClient(Transcript(config.transcript_path)))
    assert all(r.error.startswith("ReplayMiss") for r in records)


def test_subsample_and_empty_runs(config, split):
    records = run_split(split, replace(config, subsample_size=5, seed=1), Scripted())
    assert len(records) == 5
    with pytest.raises(EmptyRun):
        run_split(DatasetSplit("validation", ()), config, Scripted())


def test_missing_assets_abort_before_running(config, split, tmp_path):
    client = Scripted()
    with pytest.raises(MissingTemplateAsset):
        run_split(split, replace(config, exemplars=9), client)
    with pytest.raises(FileNotFoundError):
        run_split(split, replace(config, serialization="llm_few_shot",
                                 serialization_asset=str(tmp_path / "none.json")), client)
    assert client.prompts == []


def test_make_client(config, tmp_path, monkeypatch):
    assert isinstance(make_client(config), ReplayClient)
    with pytest.raises(ConfigError):
        make_client(replace(config, transcript_path=str(tmp_path / "none.jsonl")))
    monkeypatch.setenv("FINQA_GEN_BASE_URL", "http://127.0.0.1:9/v1")
    with pytest.raises(ConfigError):
        make_client(replace(config, client_mode="record", transcript_path=None))


def test_evaluate_writes_outputs(config, split, tmp_path):
    report = evaluate(split, config, ReplayClient(Transcript(config.transcript_path)), tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["answers.jsonl", "report.json", "report.md", "timings.jsonl"]
    timings = [json.loads(line) for line in (tmp_path / "timings.jsonl").read_text().splitlines()]
    assert [t["example_id"] for t in timings] == split.ids()
    assert json.loads((tmp_path / "report.json").read_text()) == report.to_json()
    assert report.transcript_digest == Transcript(config.transcript_path).digest()
    assert isinstance(read_answers(tmp_path / "answers.jsonl")[0], AnswerRecord)
