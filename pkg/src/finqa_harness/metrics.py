"""Scoring: component exact match, capped result deviation, tolerance match, ROUGE and the step crosstab."""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Optional, Protocol, Sequence

from .postprocess import DiscrepancyTag, ParsedAnswer, same_operand
from .program import Operator, StepProgram

DEVIATION_CAP = 100_000.0
DEFAULT_TOLERANCE = 0.10
BUCKETS = ("1", "2", ">2")


class StepCountMismatch(ValueError):
    pass


class MissingPrediction(ValueError):
    pass


class EmptyRun(ValueError):
    pass


# --- per example -----------------------------------------------------------

@dataclass(frozen=True)
class ComponentMatch:
    """Step-aligned comparison. Per-step flags are kept; the bool views require every step to match."""
    operator_steps: tuple[bool, ...]
    arg1_steps: tuple[bool, ...]
    arg2_steps: tuple[bool, ...]
    stated_result_em: bool
    recomputed_result_em: bool

    @property
    def operator_em(self) -> bool:
        return all(self.operator_steps)

    @property
    def arg1_em(self) -> bool:
        return all(self.arg1_steps)

    @property
    def arg2_em(self) -> bool:
        return all(self.arg2_steps)


def round_sig(x: float, digits: int = 4) -> float:
    return float(f"{x:.{digits}g}")


def result_em(pred: Optional[float], gold: float) -> bool:
    return pred is not None and round_sig(pred) == round_sig(gold)


def exact_match(parsed: ParsedAnswer, gold: StepProgram, gold_answer: float) -> ComponentMatch:
    if len(parsed.steps) != len(gold):
        raise StepCountMismatch(f"{len(parsed.steps)} predicted steps vs {len(gold)} gold steps")
    pairs = list(zip(parsed.steps, gold.steps))
    return ComponentMatch(
        operator_steps=tuple(isinstance(p.op, Operator) and p.op is g.op for p, g in pairs),
        arg1_steps=tuple(same_operand(p.arg1, g.arg1) for p, g in pairs),
        arg2_steps=tuple(same_operand(p.arg2, g.arg2) for p, g in pairs),
        stated_result_em=result_em(parsed.stated_final, gold_answer),
        recomputed_result_em=result_em(parsed.recomputed_final, gold_answer),
    )


def result_deviation(pred: Optional[float], gold: float) -> float:
    if pred is None:
        raise MissingPrediction("no predicted result")
    return min(abs(pred - gold), DEVIATION_CAP)


def tolerance_match(pred: Optional[float], gold: float, tol: float = DEFAULT_TOLERANCE) -> bool:
    if tol < 0:
        raise ValueError("tolerance must be >= 0")
    if pred is None:
        return False
    return abs(pred - gold) <= tol * max(abs(gold), 1e-9)


# --- ROUGE -----------------------------------------------------------------

@dataclass(frozen=True)
class RougeScores:
    rouge1: float
    rouge2: float
    rougeL: float
    rougeLsum: float


_WORD_RE = re.compile(r"[a-z0-9]+")
_SENT_SPLIT_RE = re.compile(r"\n+|(?<=[.!?])\s+")


def rouge_tokens(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def split_sentences(text: str) -> list[list[str]]:
    sents = (rouge_tokens(s) for s in _SENT_SPLIT_RE.split(text))
    return [s for s in sents if s]


def _f1(hits: float, n_cand: int, n_ref: int) -> float:
    if hits == 0 or n_cand == 0 or n_ref == 0:
        return 0.0
    p, r = hits / n_cand, hits / n_ref
    return 2 * p * r / (p + r)


def _ngram_f1(cand: list[str], ref: list[str], n: int) -> float:
    cg = Counter(tuple(cand[i:i + n]) for i in range(len(cand) - n + 1))
    rg = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
    if not cg and not rg:
        # both texts shorter than n: nothing to overlap, so identity decides
        return 1.0 if cand == ref else 0.0
    hits = sum((cg & rg).values())
    return _f1(hits, sum(cg.values()), sum(rg.values()))


def lcs_table(a: Sequence[str], b: Sequence[str]) -> list[list[int]]:
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i, x in enumerate(a, 1):
        row, prev = t[i], t[i - 1]
        for j, y in enumerate(b, 1):
            row[j] = prev[j - 1] + 1 if x == y else max(prev[j], row[j - 1])
    return t


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    return lcs_table(a, b)[-1][-1]


def _lcs_indices(ref: Sequence[str], cand: Sequence[str]) -> set[int]:
    """Positions in ``ref`` used by one longest common subsequence with ``cand``."""
    t = lcs_table(ref, cand)
    i, j, out = len(ref), len(cand), set()
    while i and j:
        if ref[i - 1] == cand[j - 1]:
            out.add(i - 1)
            i, j = i - 1, j - 1
        elif t[i - 1][j] >= t[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return out


def _summary_lcs_f1(cand_sents: list[list[str]], ref_sents: list[list[str]]) -> float:
    """Summary-level LCS: union LCS of each reference sentence against all candidate sentences."""
    n_ref = sum(map(len, ref_sents))
    n_cand = sum(map(len, cand_sents))
    if not n_ref or not n_cand:
        return 0.0
    ref_left = Counter(t for s in ref_sents for t in s)
    cand_left = Counter(t for s in cand_sents for t in s)
    hits = 0
    for ref in ref_sents:
        union = set().union(*(_lcs_indices(ref, c) for c in cand_sents))
        for tok in (ref[i] for i in sorted(union)):
            if ref_left[tok] > 0 and cand_left[tok] > 0:
                hits += 1
                ref_left[tok] -= 1
                cand_left[tok] -= 1
    return _f1(hits, n_cand, n_ref)


def rouge(candidate: str, reference: str) -> RougeScores:
    cand, ref = rouge_tokens(candidate), rouge_tokens(reference)
    if not cand and not ref:
        return RougeScores(1.0, 1.0, 1.0, 1.0)
    if not cand or not ref:
        return RougeScores(0.0, 0.0, 0.0, 0.0)
    return RougeScores(
        rouge1=_ngram_f1(cand, ref, 1),
        rouge2=_ngram_f1(cand, ref, 2),
        rougeL=_f1(lcs_length(cand, ref), len(cand), len(ref)),
        rougeLsum=_summary_lcs_f1(split_sentences(candidate), split_sentences(reference)),
    )


def mean_rouge(pairs: Iterable[tuple[str, str]]) -> RougeScores:
    scores = [rouge(c, r) for c, r in pairs]
    if not scores:
        raise EmptyRun("no pairs to score")
    n = len(scores)
    return RougeScores(*(sum(getattr(s, f) for s in scores) / n
                         for f in ("rouge1", "rouge2", "rougeL", "rougeLsum")))


# --- step crosstab -----------------------------------------------------------

def bucket(steps: int) -> int:
    """0 for one step (or none parsed), 1 for two, 2 for more."""
    return 0 if steps <= 1 else 1 if steps == 2 else 2


def step_crosstab(runs: Iterable[tuple[int, int]]) -> list[list[int]]:
    """Rows are gold step buckets, columns predicted buckets."""
    table = [[0] * 3 for _ in range(3)]
    for pred, gold in runs:
        table[bucket(gold)][bucket(pred)] += 1
    return table


def render_crosstab(table: Sequence[Sequence[int]]) -> str:
    lines = ["| steps label vs steps generated | 1 | 2 | >2 |", "|---|---|---|---|"]
    for i, row in enumerate(table):
        cells = [f"**{v}**" if i == j else str(v) for j, v in enumerate(row)]
        lines.append(f"| **{BUCKETS[i]}** | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


# --- aggregation -------------------------------------------------------------

class ScoredRecord(Protocol):
    """What aggregation reads from a run record."""
    parsed: ParsedAnswer
    gold_program: StepProgram
    gold_answer: float
    raw_text: str
    gold_text: str


@dataclass(frozen=True)
class EvalReport:
    n_examples: int
    n_aligned: int
    n_aligned_steps: int
    operator_em: Optional[float]
    arg1_em: Optional[float]
    arg2_em: Optional[float]
    stated_result_em: Optional[float]
    recomputed_result_em: Optional[float]
    mean_stated_deviation: float
    mean_recomputed_deviation: float
    n_missing_stated: int
    n_missing_recomputed: int
    stated_tolerance_accuracy: float
    recomputed_tolerance_accuracy: float
    tolerance: float
    mean_rougeL: float
    crosstab: list[list[int]]
    parse_status_counts: dict[str, int]
    tag_histogram: dict[str, int]
    config_digest: str
    transcript_digest: str
    labels: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def _rate(flags: list[bool]) -> Optional[float]:
    return sum(flags) / len(flags) if flags else None


def _capped(pred: Optional[float], gold: float) -> float:
    try:
        return result_deviation(pred, gold)
    except MissingPrediction:
        return DEVIATION_CAP


def aggregate_report(records: Sequence[ScoredRecord], config_digest: str = "",
                     transcript_digest: str = "", tolerance: float = DEFAULT_TOLERANCE,
                     labels: Optional[dict[str, str]] = None) -> EvalReport:
    """Fold run records into an EvalReport.

    Operator/argument rates are averaged over the steps of step-aligned
    examples; result rates over step-aligned examples. Deviation, tolerance
    and ROUGE cover every example, and a missing prediction counts as the cap.
    """
    if not records:
        raise EmptyRun("no run records")
    ops, a1, a2, stated_em, recomputed_em = [], [], [], [], []
    for r in records:
        if len(r.parsed.steps) != len(r.gold_program):
            continue
        m = exact_match(r.parsed, r.gold_program, r.gold_answer)
        ops += m.operator_steps
        a1 += m.arg1_steps
        a2 += m.arg2_steps
        stated_em.append(m.stated_result_em)
        recomputed_em.append(m.recomputed_result_em)

    n = len(records)
    tags = Counter(t.value for r in records for t in r.parsed.discrepancy_tags)
    statuses = Counter(r.parsed.parse_status.value for r in records)
    return EvalReport(
        n_examples=n,
        n_aligned=len(stated_em),
        n_aligned_steps=len(ops),
        operator_em=_rate(ops),
        arg1_em=_rate(a1),
        arg2_em=_rate(a2),
        stated_result_em=_rate(stated_em),
        recomputed_result_em=_rate(recomputed_em),
        mean_stated_deviation=sum(_capped(r.parsed.stated_final, r.gold_answer) for r in records) / n,
        mean_recomputed_deviation=sum(_capped(r.parsed.recomputed_final, r.gold_answer) for r in records) / n,
        n_missing_stated=sum(r.parsed.stated_final is None for r in records),
        n_missing_recomputed=sum(r.parsed.recomputed_final is None for r in records),
        stated_tolerance_accuracy=sum(tolerance_match(r.parsed.stated_final, r.gold_answer, tolerance)
                                      for r in records) / n,
        recomputed_tolerance_accuracy=sum(tolerance_match(r.parsed.recomputed_final, r.gold_answer, tolerance)
                                          for r in records) / n,
        tolerance=tolerance,
        mean_rougeL=sum(rouge(r.raw_text, r.gold_text).rougeL for r in records) / n,
        crosstab=step_crosstab((len(r.parsed.steps), len(r.gold_program)) for r in records),
        parse_status_counts=dict(sorted(statuses.items())),
        tag_histogram={t.value: tags.get(t.value, 0) for t in DiscrepancyTag},
        config_digest=config_digest,
        transcript_digest=transcript_digest,
        labels=dict(labels or {}),
    )


# --- rendering ---------------------------------------------------------------

def _pct(x: Optional[float]) -> str:
    return "n/a" if x is None else f"{100 * x:.2f}%"


def _dev(x: float) -> str:
    return ">100k" if x >= DEVIATION_CAP else f"{x:.3f}"


def render_component_table(report: EvalReport) -> str:
    rows = [
        ("Numerical Operator", report.operator_em),
        ("Argument 1", report.arg1_em),
        ("Argument 2", report.arg2_em),
        ("Result (w/o calculator)", report.stated_result_em),
        ("Result (with calculator)", report.recomputed_result_em),
    ]
    lines = ["| Match b/w predicted and generated steps | |", "|---|---:|"]
    lines += [f"| *{name}* | {_pct(v)} |" for name, v in rows]
    return "\n".join(lines) + "\n"


def render_em_table(report: EvalReport) -> str:
    model = report.labels.get("model", "")
    variant = report.labels.get("variant", "")
    lines = [
        "| Model | Variant | Arg 1 - EM | Arg 2 - EM | Operator - EM | Result - EM (stated) | Result - EM (calculator) |",
        "|---|---|---|---|---|---|---|",
        f"| {model} | {variant} | {_pct(report.arg1_em)} | {_pct(report.arg2_em)} | {_pct(report.operator_em)} "
        f"| {_pct(report.stated_result_em)} | {_pct(report.recomputed_result_em)} |",
    ]
    return "\n".join(lines) + "\n"


def render_deviation_table(report: EvalReport) -> str:
    model = report.labels.get("model", "")
    variant = report.labels.get("variant", "")
    lines = [
        "| Model | Variant | Result Deviation | Computed Result Deviation | RougeL Score |",
        "|---|---|---|---|---|",
        f"| {model} | {variant} | {_dev(report.mean_stated_deviation)} "
        f"| {_dev(report.mean_recomputed_deviation)} | {report.mean_rougeL:.3f} |",
    ]
    return "\n".join(lines) + "\n"


def render_report(report: EvalReport) -> str:
    tol = f"{100 * report.tolerance:g}%"
    parts = [
        "# Evaluation report",
        "",
        f"- examples: {report.n_examples} (step-aligned: {report.n_aligned})",
        f"- config digest: `{report.config_digest}`",
        f"- transcript digest: `{report.transcript_digest}`",
        f"- tolerance accuracy at {tol}: stated {_pct(report.stated_tolerance_accuracy)}, "
        f"calculator {_pct(report.recomputed_tolerance_accuracy)}",
        f"- missing results: stated {report.n_missing_stated}, calculator {report.n_missing_recomputed}",
        "",
        "## Step counts",
        "",
        render_crosstab(report.crosstab),
        "## Components (step-aligned examples)",
        "",
        render_component_table(report),
        "## Exact match",
        "",
        render_em_table(report),
        "## Result deviation (capped at 100k) and RougeL",
        "",
        render_deviation_table(report),
        "## Discrepancies",
        "",
        "| tag | count |",
        "|---|---:|",
    ]
    parts += [f"| {t} | {c} |" for t, c in report.tag_histogram.items()]
    return "\n".join(parts) + "\n"
