"""Table-to-text serialization: a fixed naive template, or prompting a generator."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence, Union

from .genclient import GenerationError, GenParams, TextGenerator

TableLike = Sequence[Sequence[str]]

DEFAULT_EXEMPLAR_ASSET = "serialization_exemplars_v1.json"


class SerializationMethod(str, Enum):
    NAIVE = "naive"
    LLM_ZERO_SHOT = "llm_zero_shot"
    LLM_FEW_SHOT = "llm_few_shot"


class EmptyTable(ValueError):
    pass


class MissingExemplarAsset(FileNotFoundError):
    pass


@dataclass(frozen=True)
class SerializedTable:
    text: str
    method: SerializationMethod
    source_table_hash: str


def table_hash(table: TableLike) -> str:
    canon = json.dumps([list(r) for r in table], ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def column_headers(table: TableLike, header_rows: int = 1) -> list[str]:
    """Header text per column; stacked header rows are joined with `` - ``."""
    width = len(table[0])
    heads = []
    for j in range(width):
        parts = [table[i][j].strip() for i in range(header_rows) if table[i][j].strip()]
        heads.append(" - ".join(parts))
    return heads


def naive_sentences(table: TableLike, header_rows: int = 1) -> list[str]:
    if not table or not table[0]:
        raise EmptyTable("table has no rows")
    if len(table) == 1:
        return [f"The value of column {j} is {cell.strip()}."
                for j, cell in enumerate(table[0], start=1) if cell.strip()]

    heads = column_headers(table, header_rows)
    out = []
    for row in table[header_rows:]:
        label = row[0].strip()
        for j in range(1, len(row)):
            cell = row[j].strip()
            if not cell:
                continue
            head = heads[j] or f"column {j}"
            out.append(f"The {label or 'value'} of {head} is {cell}.")
    return out


def serialize_naive(table: TableLike, header_rows: int = 1) -> SerializedTable:
    """One sentence per non-empty data cell, row-major.

    ``[["", "2019"], ["revenue", "100"]]`` becomes ``"The revenue of 2019 is 100."``.
    A single-row table has no header, so its cells read ``"The value of column j is ..."``.
    """
    sentences = naive_sentences(table, header_rows)
    if not sentences:
        raise EmptyTable("table has no non-empty data cells")
    return SerializedTable(" ".join(sentences), SerializationMethod.NAIVE, table_hash(table))


# --- prompting -------------------------------------------------------------

SERIALIZATION_INSTRUCTION = (
    "Rewrite the following financial table as plain English sentences. "
    "State every value together with its row and column meaning. "
    "Do not add values that are not in the table."
)


def render_pipe_table(table: TableLike) -> str:
    return "\n".join("| " + " | ".join(c.strip() for c in row) + " |" for row in table)


@dataclass(frozen=True)
class ExemplarAsset:
    version: str
    k: int
    exemplars: tuple[tuple[tuple[tuple[str, ...], ...], str], ...]


def load_exemplar_asset(path: Union[str, Path, None] = None) -> ExemplarAsset:
    try:
        if path is None:
            raw = resources.files("finqa_harness.assets").joinpath(DEFAULT_EXEMPLAR_ASSET).read_text("utf-8")
        else:
            raw = Path(path).read_text(encoding="utf-8")
    except (FileNotFoundError, OSError) as e:
        raise MissingExemplarAsset(str(path or DEFAULT_EXEMPLAR_ASSET)) from e
    d = json.loads(raw)
    pairs = tuple((tuple(tuple(r) for r in e["table"]), e["serialization"]) for e in d["exemplars"])
    k = int(d.get("k", 2))
    if k > len(pairs):
        raise MissingExemplarAsset(f"asset {d['version']} holds {len(pairs)} exemplars, k={k}")
    return ExemplarAsset(str(d["version"]), k, pairs)


def build_serialization_prompt(table: TableLike, mode: str,
                               asset: ExemplarAsset | None = None) -> str:
    if mode not in ("zero_shot", "few_shot"):
        raise ValueError(f"unknown prompting mode {mode!r}")
    parts = [SERIALIZATION_INSTRUCTION, ""]
    if mode == "few_shot":
        asset = asset or load_exemplar_asset()
        for n, (ex_table, text) in enumerate(asset.exemplars[:asset.k], start=1):
            parts += [f"Example {n}", "Table:", render_pipe_table(ex_table), "Sentences:", text, ""]
    parts += ["Table:", render_pipe_table(table), "Sentences:"]
    return "\n".join(parts)


def serialize_llm(table: TableLike, client: TextGenerator, mode: str, params: GenParams,
                  asset: ExemplarAsset | None = None) -> SerializedTable:
    method = SerializationMethod.LLM_FEW_SHOT if mode == "few_shot" else SerializationMethod.LLM_ZERO_SHOT
    digest = table_hash(table)
    prompt = build_serialization_prompt(table, mode, asset)
    try:
        text = client.generate(prompt, params)
    except GenerationError as e:
        e.context["table_hash"] = digest
        raise
    return SerializedTable(text.strip(), method, digest)
