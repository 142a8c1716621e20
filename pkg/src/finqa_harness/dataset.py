"""FinQA ingestion: validate records, keep the supported-operator subset, record why the rest was skipped."""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Union

from .numerals import NotANumber, normalize_numeral
from .program import (ForwardReference, ParseError, StepProgram, UnsupportedOperator,
                      parse_program)

SPLIT_NAMES = ("train", "validation", "test")

Table = list[list[str]]


class MalformedFile(ValueError):
    pass


class SkipReason(str, Enum):
    MISSING_FIELD = "missing field"
    DUPLICATE_ID = "duplicate id"
    RAGGED_TABLE = "ragged table"
    EMPTY_TABLE = "empty table"
    UNSUPPORTED_OPERATOR = "unsupported operator"
    UNPARSEABLE_PROGRAM = "unparseable program"
    NON_NUMERIC_ANSWER = "non-numeric answer"


@dataclass(frozen=True)
class FinQAExample:
    id: str
    question: str
    pre_text: tuple[str, ...]
    post_text: tuple[str, ...]
    table: tuple[tuple[str, ...], ...]
    gold_program: str
    gold_answer: float
    gold_answer_raw: str

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["pre_text"] = list(self.pre_text)
        d["post_text"] = list(self.post_text)
        d["table"] = [list(r) for r in self.table]
        return d

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "FinQAExample":
        return cls(
            id=d["id"], question=d["question"],
            pre_text=tuple(d["pre_text"]), post_text=tuple(d["post_text"]),
            table=tuple(tuple(r) for r in d["table"]),
            gold_program=d["gold_program"], gold_answer=float(d["gold_answer"]),
            gold_answer_raw=d["gold_answer_raw"],
        )


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    examples: tuple[FinQAExample, ...]
    skipped: tuple[tuple[str, SkipReason], ...] = field(default=())

    def __len__(self) -> int:
        return len(self.examples)

    def ids(self) -> list[str]:
        return [ex.id for ex in self.examples]

    def dumps(self) -> str:
        """Canonical JSON-lines serialization; examples then skip records."""
        lines = [json.dumps({"split": self.name}, sort_keys=True)]
        lines += [json.dumps(ex.to_json(), sort_keys=True, ensure_ascii=False) for ex in self.examples]
        lines += [json.dumps({"skipped": i, "reason": r.value}, sort_keys=True) for i, r in self.skipped]
        return "\n".join(lines) + "\n"

    def subsample(self, size: int | None, seed: int) -> "DatasetSplit":
        """Seeded random subset, kept in file order. ``size=None`` keeps everything."""
        if size is None or size >= len(self.examples):
            return self
        picked = sorted(random.Random(seed).sample(range(len(self.examples)), size))
        return DatasetSplit(self.name, tuple(self.examples[i] for i in picked), self.skipped)


def preprocess_gold(gold_program: str) -> StepProgram:
    if not gold_program or not gold_program.strip():
        raise ParseError(0, "non-empty program")
    return parse_program(gold_program)


def _check_table(table: Any) -> SkipReason | None:
    if not isinstance(table, list) or not table:
        return SkipReason.EMPTY_TABLE
    if not all(isinstance(r, list) and all(isinstance(c, str) for c in r) for r in table):
        return SkipReason.RAGGED_TABLE
    if len({len(r) for r in table}) != 1:
        return SkipReason.RAGGED_TABLE
    return None


def validate_record(rec: Any) -> FinQAExample | SkipReason:
    """Turn one raw FinQA record into an example, or say why it cannot be used."""
    if not isinstance(rec, dict):
        return SkipReason.MISSING_FIELD
    qa = rec.get("qa")
    if not isinstance(qa, dict):
        return SkipReason.MISSING_FIELD
    try:
        ex_id = rec["id"]
        pre, post, table = rec["pre_text"], rec["post_text"], rec["table"]
        question, program, answer = qa["question"], qa["program"], qa["exe_ans"]
    except KeyError:
        return SkipReason.MISSING_FIELD
    if not isinstance(ex_id, str) or not ex_id or not isinstance(question, str) \
            or not isinstance(program, str) or not isinstance(pre, list) or not isinstance(post, list):
        return SkipReason.MISSING_FIELD

    bad_table = _check_table(table)
    if bad_table:
        return bad_table

    try:
        preprocess_gold(program)
    except UnsupportedOperator:
        return SkipReason.UNSUPPORTED_OPERATOR
    except (ParseError, ForwardReference):
        return SkipReason.UNPARSEABLE_PROGRAM

    if isinstance(answer, bool):
        return SkipReason.NON_NUMERIC_ANSWER
    if isinstance(answer, (int, float)):
        value = float(answer)
    else:
        try:
            value = normalize_numeral(str(answer))
        except NotANumber:
            return SkipReason.NON_NUMERIC_ANSWER

    return FinQAExample(
        id=ex_id, question=question,
        pre_text=tuple(str(s) for s in pre), post_text=tuple(str(s) for s in post),
        table=tuple(tuple(r) for r in table),
        gold_program=program, gold_answer=value, gold_answer_raw=str(answer),
    )


def _read_records(path: Path) -> list[Any]:
    text = path.read_text(encoding="utf-8")
    try:
        records = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedFile(f"{path}: not valid JSON ({e})") from None
    if not isinstance(records, list) or not all(isinstance(r, dict) for r in records):
        raise MalformedFile(f"{path}: expected an array of objects")
    return records


def load_dataset(path: Union[str, Path], split_name: str) -> DatasetSplit:
    """Load a public-layout FinQA file (a JSON array) or a normalized ``.jsonl`` file."""
    path = Path(path)
    if split_name not in SPLIT_NAMES:
        raise ValueError(f"split name must be one of {SPLIT_NAMES}")
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix == ".jsonl":
        return load_normalized(path, split_name)

    examples: list[FinQAExample] = []
    skipped: list[tuple[int, str, SkipReason]] = []
    seen: set[str] = set()
    for n, rec in enumerate(_read_records(path)):
        rec_id = rec.get("id") if isinstance(rec.get("id"), str) and rec.get("id") else f"<record {n}>"
        result = validate_record(rec)
        if isinstance(result, FinQAExample) and result.id in seen:
            result = SkipReason.DUPLICATE_ID
        if isinstance(result, SkipReason):
            skipped.append((n, rec_id, result))
        else:
            seen.add(result.id)
            examples.append(result)
    # a skipped record sharing an id with a kept one is named by its position
    skip_ids = tuple((f"{i}@{n}" if i in seen else i, r) for n, i, r in skipped)
    return DatasetSplit(split_name, tuple(examples), skip_ids)


def write_normalized(split: DatasetSplit, path: Union[str, Path]) -> None:
    Path(path).write_text(split.dumps(), encoding="utf-8")


def load_normalized(path: Union[str, Path], split_name: str | None = None) -> DatasetSplit:
    name = split_name
    examples, skipped = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        if "split" in d:
            name = name or d["split"]
        elif "skipped" in d:
            skipped.append((d["skipped"], SkipReason(d["reason"])))
        else:
            examples.append(FinQAExample.from_json(d))
    return DatasetSplit(name or "validation", tuple(examples), tuple(skipped))


def skip_summary(split: DatasetSplit) -> dict[str, int]:
    counts: dict[str, int] = {}
    for _, reason in split.skipped:
        counts[reason.value] = counts.get(reason.value, 0) + 1
    return dict(sorted(counts.items()))
