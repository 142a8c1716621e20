"""Turn a model's free-text answer into structured steps and re-run them on the calculator.

The expected answer layout is::

    Step 1: subtract(5829, 5735) = 94
    Step 2: divide(#0, 5735) = 0.0164
    Answer: 0.0164

``= r`` may be missed, infix forms such as ``Step 1: 100 divided by 50 = 2``
and spelled-out operator names are read too. Lines that are not step or
answer lines are ignored.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional, Union

from .numerals import NotANumber, normalize_numeral
from .program import (Constant, Operand, Operator, ParseError, ProgramError, Step,
                      StepProgram, StepRef, UnsupportedOperator, execute_steps,
                      format_operand, format_result, read_operand, scan_call)

__all__ = [
    "ParsedStep", "ParsedAnswer", "ParseStatus", "DiscrepancyTag", "normalize_numeral",
    "extract_steps", "recompute", "diagnose", "render_answer",
]

# a stated value within this relative distance of the recomputed one is
# treated as the model rounding, not as an arithmetic slip
ARITHMETIC_REL_TOL = 5e-3

UNIT_FACTORS = (100.0, 1000.0, 1e6, 1e9)

# normalized gold and predicted arguments only differ by representation noise
ARG_ABS_TOL = 1e-6


class ParseStatus(str, Enum):
    CLEAN = "clean"
    PARTIAL = "partial"
    FAILED = "failed"


class DiscrepancyTag(str, Enum):
    IMAGINARY_STEPS = "imaginary_steps"
    WRONG_OPERAND = "wrong_operand"
    WRONG_OPERATOR = "wrong_operator"
    ARITHMETIC_ERROR = "arithmetic_error"
    UNPARSEABLE_FORMAT = "unparseable_format"
    UNIT_MISMATCH = "unit_mismatch"


SYNONYMS: dict[str, Operator] = {
    "plus": Operator.ADD, "sum": Operator.ADD, "+": Operator.ADD,
    "minus": Operator.SUBTRACT, "difference": Operator.SUBTRACT, "-": Operator.SUBTRACT,
    "times": Operator.MULTIPLY, "multiplied by": Operator.MULTIPLY, "product": Operator.MULTIPLY,
    "*": Operator.MULTIPLY, "×": Operator.MULTIPLY, "x": Operator.MULTIPLY,
    "divided by": Operator.DIVIDE, "over": Operator.DIVIDE, "quotient": Operator.DIVIDE,
    "/": Operator.DIVIDE, "÷": Operator.DIVIDE,
    "maximum": Operator.MAX, "minimum": Operator.MIN,
}

Arg = Union[Constant, StepRef, str]


def lookup_operator(name: str) -> Optional[Operator]:
    key = " ".join(name.strip().lower().replace("_", " ").split())
    return Operator.lookup(key) or SYNONYMS.get(key)


@dataclass(frozen=True)
class ParsedStep:
    op: Union[Operator, str]
    arg1: Arg
    arg2: Arg
    stated_result: Optional[float] = None

    @property
    def recognized(self) -> bool:
        return isinstance(self.op, Operator) and not isinstance(self.arg1, str) \
            and not isinstance(self.arg2, str)

    def to_json(self) -> dict[str, Any]:
        return {
            "op": self.op.value if isinstance(self.op, Operator) else self.op,
            "op_recognized": isinstance(self.op, Operator),
            "arg1": _arg_to_json(self.arg1),
            "arg2": _arg_to_json(self.arg2),
            "stated_result": self.stated_result,
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "ParsedStep":
        op = Operator(d["op"]) if d["op_recognized"] else d["op"]
        return cls(op, _arg_from_json(d["arg1"]), _arg_from_json(d["arg2"]), d["stated_result"])


def _arg_to_json(arg: Arg) -> Any:
    if isinstance(arg, Constant):
        return arg.value
    if isinstance(arg, StepRef):
        return f"#{arg.index}"
    return {"raw": arg}


def _arg_from_json(v: Any) -> Arg:
    if isinstance(v, dict):
        return v["raw"]
    if isinstance(v, str):
        return StepRef(int(v[1:]))
    return Constant(float(v))


@dataclass(frozen=True)
class ParsedAnswer:
    steps: tuple[ParsedStep, ...] = ()
    stated_final: Optional[float] = None
    recomputed_final: Optional[float] = None
    parse_status: ParseStatus = ParseStatus.FAILED
    discrepancy_tags: frozenset[DiscrepancyTag] = field(default_factory=frozenset)

    def to_program(self) -> Optional[StepProgram]:
        """The steps as a calculator program, or None if any piece was not understood."""
        if not self.steps or not all(s.recognized for s in self.steps):
            return None
        try:
            return StepProgram(tuple(Step(s.op, s.arg1, s.arg2) for s in self.steps))
        except ProgramError:
            return None

    def with_tags(self, *tags: DiscrepancyTag) -> "ParsedAnswer":
        return replace(self, discrepancy_tags=self.discrepancy_tags | frozenset(tags))

    def to_json(self) -> dict[str, Any]:
        return {
            "steps": [s.to_json() for s in self.steps],
            "stated_final": self.stated_final,
            "recomputed_final": self.recomputed_final,
            "parse_status": self.parse_status.value,
            "discrepancy_tags": sorted(t.value for t in self.discrepancy_tags),
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "ParsedAnswer":
        return cls(
            steps=tuple(ParsedStep.from_json(s) for s in d["steps"]),
            stated_final=d["stated_final"],
            recomputed_final=d["recomputed_final"],
            parse_status=ParseStatus(d["parse_status"]),
            discrepancy_tags=frozenset(DiscrepancyTag(t) for t in d["discrepancy_tags"]),
        )


# --- extraction ------------------------------------------------------------

# markdown emphasis after the label ("**Step 1:** ...") is skipped
_STEP_RE = re.compile(r"^\W{0,3}step\s*(\d+)\s*[:.)-][*_]*\s*(.*)$", re.IGNORECASE)
_ANSWER_RE = re.compile(r"^\W{0,3}(?:the\s+)?(?:final\s+)?answer\s*(?:is\s*[:=]?|[:=])[*_]*\s*(.+?)\s*$", re.IGNORECASE)
_RESULT_RE = re.compile(r"^\s*=\s*(.+?)\s*\.?\s*$")
_INFIX_OPS = sorted((k for k in SYNONYMS if k not in ("sum", "difference", "product", "quotient",
                                                      "maximum", "minimum")), key=len, reverse=True)
_INFIX_RE = re.compile(
    r"^\s*(?P<a>\S+?)\s*(?P<op>" + "|".join(re.escape(o) if not o.isalpha() else rf"(?<=\s){re.escape(o)}(?=\s)"
                                            for o in _INFIX_OPS) + r")\s*(?P<b>[^=\s]+)\s*(?P<rest>=.*)?$",
    re.IGNORECASE,
)


def _read_arg(raw: str) -> Arg:
    try:
        return read_operand(raw)
    except (NotANumber, UnsupportedOperator):
        return raw.strip()


def _read_value(raw: str) -> Optional[float]:
    raw = raw.strip()
    # keep only the leading numeral, so "= 94 million" still yields 94
    m = re.match(r"[-+(]?\s*[$€£¥]?\s*[\d.,]+\s*%?\)?", raw)
    if not m:
        return None
    try:
        return normalize_numeral(m.group(0).rstrip(".,"))
    except NotANumber:
        return None


def _parse_step_body(body: str) -> tuple[Optional[ParsedStep], bool]:
    """Returns the step (or None) and whether the body was read without leftovers."""
    try:
        name, raw1, raw2, end = scan_call(body)
    except ParseError:
        m = _INFIX_RE.match(body)
        if not m:
            return None, False
        name, raw1, raw2, rest = m.group("op"), m.group("a"), m.group("b"), m.group("rest") or ""
    else:
        rest = body[end:]

    stated = None
    tidy = True
    if rest.strip():
        rm = _RESULT_RE.match(rest)
        if rm:
            stated = _read_value(rm.group(1))
            tidy = stated is not None
        else:
            tidy = False
    op = lookup_operator(name)
    return ParsedStep(op if op is not None else name, _read_arg(raw1), _read_arg(raw2), stated), tidy


def extract_steps(answer_text: str) -> ParsedAnswer:
    """Total: every string yields a ParsedAnswer, failures live in ``parse_status``."""
    steps: list[ParsedStep] = []
    numbers: list[int] = []
    answers: list[Optional[float]] = []
    untidy = False
    for line in (answer_text or "").splitlines():
        line = line.strip()
        m = _STEP_RE.match(line)
        if m:
            step, tidy = _parse_step_body(m.group(2))
            if step is None:
                untidy = True
                continue
            steps.append(step)
            numbers.append(int(m.group(1)))
            untidy |= not tidy
            continue
        m = _ANSWER_RE.match(line)
        if m:
            answers.append(_read_value(m.group(1)))

    stated_final = next((a for a in answers if a is not None), None)
    untidy |= bool(answers) and stated_final is None

    if not steps and stated_final is None:
        return ParsedAnswer(parse_status=ParseStatus.FAILED,
                            discrepancy_tags=frozenset({DiscrepancyTag.UNPARSEABLE_FORMAT}))

    answer = ParsedAnswer(steps=tuple(steps), stated_final=stated_final)
    clean = (
        steps and stated_final is not None and not untidy
        and numbers == list(range(1, len(steps) + 1))
        and answer.to_program() is not None
    )
    if clean:
        return replace(answer, parse_status=ParseStatus.CLEAN)
    return ParsedAnswer(steps=tuple(steps), stated_final=stated_final, parse_status=ParseStatus.PARTIAL,
                        discrepancy_tags=frozenset({DiscrepancyTag.UNPARSEABLE_FORMAT}))


# --- calculator ------------------------------------------------------------

def _close(stated: float, actual: float, rel: float = ARITHMETIC_REL_TOL) -> bool:
    return math.isclose(stated, actual, rel_tol=rel, abs_tol=1e-9)


def recompute(parsed: ParsedAnswer) -> ParsedAnswer:
    """Add ``recomputed_final`` from the calculator; stated values are left alone."""
    program = parsed.to_program()
    if program is None:
        return parsed
    try:
        values = execute_steps(program)
    except ProgramError:
        return replace(parsed, recomputed_final=None).with_tags(DiscrepancyTag.ARITHMETIC_ERROR)

    out = replace(parsed, recomputed_final=values[-1])
    slips = [s.stated_result is not None and not _close(s.stated_result, v)
             for s, v in zip(parsed.steps, values)]
    if parsed.stated_final is not None and not _close(parsed.stated_final, values[-1]):
        slips.append(True)
    if any(slips):
        out = out.with_tags(DiscrepancyTag.ARITHMETIC_ERROR)
    return out


def same_operand(a: Arg, b: Operand) -> bool:
    if isinstance(a, StepRef) or isinstance(b, StepRef):
        return a == b
    return isinstance(a, Constant) and abs(a.value - b.value) <= ARG_ABS_TOL


def _unit_slip(pred: float, gold: float) -> bool:
    if pred == 0 or gold == 0 or _close(pred, gold, 1e-2):
        return False
    ratio = abs(pred / gold)
    return any(_close(ratio, f, 1e-2) or _close(ratio, 1 / f, 1e-2) for f in UNIT_FACTORS)


def diagnose(parsed: ParsedAnswer, gold: StepProgram, gold_answer: float) -> ParsedAnswer:
    """Tag discrepancies that need the gold program to see."""
    tags = set()
    if len(parsed.steps) > len(gold):
        tags.add(DiscrepancyTag.IMAGINARY_STEPS)
    elif len(parsed.steps) == len(gold):
        for p, g in zip(parsed.steps, gold.steps):
            if p.op != g.op:
                tags.add(DiscrepancyTag.WRONG_OPERATOR)
            if not (same_operand(p.arg1, g.arg1) and same_operand(p.arg2, g.arg2)):
                tags.add(DiscrepancyTag.WRONG_OPERAND)
    final = parsed.recomputed_final if parsed.recomputed_final is not None else parsed.stated_final
    if final is not None and _unit_slip(final, gold_answer):
        tags.add(DiscrepancyTag.UNIT_MISMATCH)
    return parsed.with_tags(*tags)


def render_answer(program: StepProgram) -> str:
    """The gold program written in the answer layout the model is asked to use."""
    values = execute_steps(program)
    lines = [f"Step {i}: {s.op.value}({format_operand(s.arg1)}, {format_operand(s.arg2)}) = {format_result(v)}"
             for i, (s, v) in enumerate(zip(program.steps, values), start=1)]
    lines.append(f"Answer: {format_result(values[-1])}")
    return "\n".join(lines)


