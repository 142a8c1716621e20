"""End-to-end runs: serialize, chunk, retrieve, prompt, generate, parse, recompute, score."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import yaml

from .dataset import DatasetSplit, FinQAExample, preprocess_gold
from .genclient import (GenParams, LiveClient, RecordingClient, ReplayClient, TextGenerator,
                        Transcript, prompt_digest)
from .metrics import EmptyRun, EvalReport, aggregate_report, render_report
from .postprocess import (DiscrepancyTag, ParsedAnswer, ParseStatus, diagnose, extract_steps,
                          recompute, render_answer)
from .program import StepProgram, format_program
from .retrieval import build_index, chunk_text, top_k
from .serialize import ExemplarAsset, load_exemplar_asset, serialize_llm, serialize_naive

log = logging.getLogger(__name__)

SERIALIZATION_METHODS = ("naive", "llm_zero_shot", "llm_few_shot")
CLIENT_MODES = ("replay-strict", "live", "record")
CONTEXT_SCOPES = ("full", "table_only")
EMBEDDERS = ("tfidf",)
STAGES = ("serialize", "chunk", "retrieve", "prompt", "generate", "parse")

ANSWERS_FILE = "answers.jsonl"
TIMINGS_FILE = "timings.jsonl"
REPORT_JSON = "report.json"
REPORT_MD = "report.md"


class ConfigError(ValueError):
    pass


class MissingTemplateAsset(ConfigError, FileNotFoundError):
    pass


@dataclass(frozen=True)
class RunConfig:
    serialization: str = "naive"
    context_scope: str = "full"
    max_tokens: int = 128
    overlap_tokens: int = 32
    k: int = 1
    embedder_id: str = "tfidf"
    template_id: str = "canonical-v1"
    exemplars: int = 2
    gen: GenParams = field(default_factory=GenParams)
    client_mode: str = "replay-strict"
    subsample_size: Optional[int] = None
    seed: int = 0
    workers: int = 4
    split: str = "validation"
    # locations; not part of the digest
    dataset_path: Optional[str] = None
    transcript_path: Optional[str] = None
    output_dir: Optional[str] = None
    serialization_asset: Optional[str] = None

    PATH_FIELDS = ("dataset_path", "transcript_path", "output_dir", "serialization_asset")

    def __post_init__(self):
        checks = [
            (self.serialization in SERIALIZATION_METHODS, f"serialization must be one of {SERIALIZATION_METHODS}"),
            (self.context_scope in CONTEXT_SCOPES, f"context_scope must be one of {CONTEXT_SCOPES}"),
            (self.client_mode in CLIENT_MODES, f"client_mode must be one of {CLIENT_MODES}"),
            (self.embedder_id in EMBEDDERS, f"embedder_id must be one of {EMBEDDERS}"),
            (0 <= self.overlap_tokens < self.max_tokens, "need max_tokens > overlap_tokens >= 0"),
            (self.k >= 1, "k must be >= 1"),
            (self.exemplars >= 0, "exemplars must be >= 0"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.subsample_size is None or self.subsample_size >= 1, "subsample_size must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def to_json(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["gen"] = self.gen.to_json()
        return d

    def digest(self) -> str:
        d = {k: v for k, v in self.to_json().items() if k not in self.PATH_FIELDS and k != "workers"}
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        gen = d.pop("gen", None) or {}
        if not isinstance(gen, GenParams):
            try:
                gen = GenParams(**gen)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"gen: {e}") from None
        try:
            return cls(gen=gen, **d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path: Union[str, Path, None], overrides: Sequence[str] = ()) -> "RunConfig":
        """Read a YAML/JSON config, then apply ``key=value`` overrides (``gen.temperature=0.2``)."""
        d: dict[str, Any] = {}
        if path is not None:
            try:
                d = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
            except OSError as e:
                raise ConfigError(f"cannot read config {path}: {e}") from None
            if not isinstance(d, dict):
                raise ConfigError(f"{path}: expected a mapping")
        for item in overrides:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not key=value")
            value = yaml.safe_load(raw)
            if key.startswith("gen."):
                d.setdefault("gen", {})[key[4:]] = value
            else:
                d[key] = value
        return cls.from_dict(d)

    @property
    def labels(self) -> dict[str, str]:
        return {"model": self.gen.model_name,
                "variant": f"{self.serialization}, {self.exemplars}-shot"}


# --- prompt ------------------------------------------------------------------

@dataclass(frozen=True)
class QATemplate:
    id: str
    instruction: str
    exemplars: tuple[dict[str, str], ...]


def load_template(template_id: str) -> QATemplate:
    name = f"qa_template_{template_id}.json"
    try:
        raw = resources.files("finqa_harness.assets").joinpath(name).read_text("utf-8")
    except (FileNotFoundError, OSError):
        raise MissingTemplateAsset(f"no prompt template {template_id!r}") from None
    d = json.loads(raw)
    return QATemplate(d["id"], d["instruction"], tuple(d["exemplars"]))


def build_qa_prompt(question: str, context: str, template_id: str = "canonical-v1",
                    exemplars: int = 2) -> str:
    template = load_template(template_id)
    if exemplars > len(template.exemplars):
        raise MissingTemplateAsset(
            f"template {template_id!r} has {len(template.exemplars)} exemplars, {exemplars} requested")
    parts = [template.instruction, ""]
    for n, ex in enumerate(template.exemplars[:exemplars], start=1):
        parts += [f"### Example {n}", f"Context: {ex['context']}", f"Question: {ex['question']}",
                  ex["answer"], ""]
    parts += ["### Task", f"Context: {context}", f"Question: {question}", ""]
    return "\n".join(parts)


# --- records -----------------------------------------------------------------

@dataclass(frozen=True)
class AnswerRecord:
    example_id: str
    chunk_ids: tuple[int, ...]
    chunk_scores: tuple[float, ...]
    prompt_digest: str
    raw_text: str
    parsed: ParsedAnswer
    gold_program: StepProgram
    gold_answer: float
    error: Optional[str] = None
    timings: dict[str, float] = field(default_factory=dict, compare=False)

    @property
    def gold_text(self) -> str:
        return render_answer(self.gold_program)

    def to_json(self) -> dict[str, Any]:
        """Everything but timings, which vary run to run and live in a sidecar file."""
        return {
            "example_id": self.example_id,
            "chunk_ids": list(self.chunk_ids),
            "chunk_scores": list(self.chunk_scores),
            "prompt_digest": self.prompt_digest,
            "raw_text": self.raw_text,
            "parsed": self.parsed.to_json(),
            "gold_program": format_program(self.gold_program),
            "gold_answer": self.gold_answer,
            "error": self.error,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "AnswerRecord":
        return cls(
            example_id=d["example_id"], chunk_ids=tuple(d["chunk_ids"]),
            chunk_scores=tuple(d["chunk_scores"]), prompt_digest=d["prompt_digest"],
            raw_text=d["raw_text"], parsed=ParsedAnswer.from_json(d["parsed"]),
            gold_program=preprocess_gold(d["gold_program"]), gold_answer=float(d["gold_answer"]),
            error=d["error"],
        )


def read_answers(path: Union[str, Path]) -> list[AnswerRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [AnswerRecord.from_json(json.loads(line)) for line in lines if line.strip()]


def write_answers(records: Sequence[AnswerRecord], path: Union[str, Path]) -> None:
    Path(path).write_text("".join(r.dumps() + "\n" for r in records), encoding="utf-8")


# --- running -----------------------------------------------------------------

def make_client(config: RunConfig) -> TextGenerator:
    if config.client_mode == "replay-strict":
        if not config.transcript_path or not Path(config.transcript_path).exists():
            raise ConfigError(f"replay needs an existing transcript, got {config.transcript_path!r}")
        return ReplayClient(Transcript(config.transcript_path))
    live = LiveClient.from_env(max_in_flight=config.workers)
    if config.client_mode == "live":
        return live
    if not config.transcript_path:
        raise ConfigError("record mode needs transcript_path")
    return RecordingClient(live, Transcript(config.transcript_path))


def check_assets(config: RunConfig) -> Optional[ExemplarAsset]:
    """Fail early on missing assets so they abort the run instead of every example."""
    template = load_template(config.template_id)
    if config.exemplars > len(template.exemplars):
        raise MissingTemplateAsset(f"template {config.template_id!r} has only "
                                   f"{len(template.exemplars)} exemplars")
    if config.serialization == "llm_few_shot":
        return load_exemplar_asset(config.serialization_asset)
    return None


def serialize_table(example: FinQAExample, config: RunConfig, client: TextGenerator,
                    asset: Optional[ExemplarAsset] = None) -> str:
    if config.serialization == "naive":
        return serialize_naive(example.table).text
    mode = "few_shot" if config.serialization == "llm_few_shot" else "zero_shot"
    return serialize_llm(example.table, client, mode, config.gen, asset).text


def assemble_context(example: FinQAExample, serialized: str, scope: str) -> str:
    if scope == "table_only":
        return serialized
    return "\n".join([*example.pre_text, serialized, *example.post_text])


def _failed() -> ParsedAnswer:
    return ParsedAnswer(parse_status=ParseStatus.FAILED,
                        discrepancy_tags=frozenset({DiscrepancyTag.UNPARSEABLE_FORMAT}))


def run_example(example: FinQAExample, config: RunConfig, client: TextGenerator,
                asset: Optional[ExemplarAsset] = None) -> AnswerRecord:
    """Run one example through every stage. Stage failures land in the record, they do not raise."""
    gold = preprocess_gold(example.gold_program)
    marks = [time.perf_counter()]
    timings: dict[str, float] = {}

    def lap(stage: str) -> None:
        marks.append(time.perf_counter())
        timings[stage] = marks[-1] - marks[-2]

    chunk_ids: tuple[int, ...] = ()
    scores: tuple[float, ...] = ()
    digest = ""
    raw = ""
    try:
        serialized = serialize_table(example, config, client, asset)
        lap("serialize")
        chunks = chunk_text(assemble_context(example, serialized, config.context_scope),
                            config.max_tokens, config.overlap_tokens)
        lap("chunk")
        hits = top_k(build_index(chunks), example.question, config.k)
        chunk_ids = tuple(c.id for c, _ in hits)
        scores = tuple(s for _, s in hits)
        context = "\n".join(c.text for c, _ in hits)
        lap("retrieve")
        prompt = build_qa_prompt(example.question, context, config.template_id, config.exemplars)
        digest = prompt_digest(prompt)
        lap("prompt")
        raw = client.generate(prompt, config.gen)
        lap("generate")
    except Exception as e:  # noqa: BLE001 - one example must not sink the batch
        lap("failed")
        timings["total"] = marks[-1] - marks[0]
        return AnswerRecord(example.id, chunk_ids, scores, digest, raw, _failed(), gold,
                            example.gold_answer, error=f"{type(e).__name__}: {e}", timings=timings)

    parsed = diagnose(recompute(extract_steps(raw)), gold, example.gold_answer)
    lap("parse")
    timings["total"] = marks[-1] - marks[0]
    return AnswerRecord(example.id, chunk_ids, scores, digest, raw, parsed, gold,
                        example.gold_answer, timings=timings)


def run_split(split: DatasetSplit, config: RunConfig, client: TextGenerator) -> list[AnswerRecord]:
    asset = check_assets(config)
    examples = split.subsample(config.subsample_size, config.seed).examples
    if not examples:
        raise EmptyRun(f"split {split.name!r} has no examples to run")
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(lambda ex: run_example(ex, config, client, asset), examples))


def transcript_digest_of(client: TextGenerator) -> str:
    transcript = getattr(client, "transcript", None)
    return transcript.digest() if transcript is not None else "none"


def report_for(records: Sequence[AnswerRecord], config: RunConfig, transcript_digest: str) -> EvalReport:
    return aggregate_report(records, config_digest=config.digest(),
                            transcript_digest=transcript_digest, labels=config.labels)


def write_outputs(records: Sequence[AnswerRecord], report: EvalReport,
                  output_dir: Union[str, Path]) -> None:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_answers(records, out / ANSWERS_FILE)
    (out / TIMINGS_FILE).write_text(
        "".join(json.dumps({"example_id": r.example_id, **r.timings}, sort_keys=True) + "\n"
                for r in records), encoding="utf-8")
    (out / REPORT_JSON).write_text(report.dumps(), encoding="utf-8")
    (out / REPORT_MD).write_text(render_report(report), encoding="utf-8")


def evaluate(split: DatasetSplit, config: RunConfig, client: TextGenerator,
             output_dir: Union[str, Path, None] = None) -> EvalReport:
    records = run_split(split, config, client)
    report = report_for(records, config, transcript_digest_of(client))
    output_dir = output_dir or config.output_dir
    if output_dir is not None:
        write_outputs(records, report, output_dir)
    return report


__all__ = [
    "RunConfig", "AnswerRecord", "ConfigError", "MissingTemplateAsset", "build_qa_prompt",
    "run_example", "run_split", "evaluate", "make_client", "read_answers", "write_answers",
    "report_for", "write_outputs",
]
