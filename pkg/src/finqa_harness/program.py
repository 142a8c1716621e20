"""Arithmetic step programs: ``op(a, b)[, op(a, b)]*`` with ``#k`` step references.

``#k`` is 0-based, so ``subtract(10, 4), divide(#0, 3)`` divides the result of
the first step by 3. Every operator is binary.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from typing import Callable, Union

from .numerals import NotANumber, normalize_numeral


class Operator(str, Enum):
    ADD = "add"
    SUBTRACT = "subtract"
    MULTIPLY = "multiply"
    DIVIDE = "divide"
    MAX = "max"
    MIN = "min"

    @classmethod
    def lookup(cls, name: str) -> "Operator | None":
        try:
            return cls(name.strip().lower())
        except ValueError:
            return None


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class StepRef:
    index: int


Operand = Union[Constant, StepRef]


@dataclass(frozen=True)
class Step:
    op: Operator
    arg1: Operand
    arg2: Operand


@dataclass(frozen=True)
class StepProgram:
    steps: tuple[Step, ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a step program needs at least one step")
        object.__setattr__(self, "steps", tuple(self.steps))
        for i, step in enumerate(self.steps):
            for arg in (step.arg1, step.arg2):
                if isinstance(arg, StepRef) and not 0 <= arg.index < i:
                    raise ForwardReference(i, arg.index)

    def __len__(self) -> int:
        return len(self.steps)


class ProgramError(ValueError):
    pass


class ParseError(ProgramError):
    def __init__(self, position: int, expected: str, text: str = ""):
        self.position = position
        self.expected = expected
        near = text[position:position + 20]
        super().__init__(f"expected {expected} at position {position}" + (f" near {near!r}" if near else ""))


class UnsupportedOperator(ProgramError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unsupported operator or token: {name!r}")


class ForwardReference(ProgramError):
    def __init__(self, step_index: int, ref: int):
        self.step_index = step_index
        self.ref = ref
        super().__init__(f"step {step_index + 1} references #{ref}, which is not an earlier step")


class DivisionByZero(ProgramError):
    def __init__(self, step: int):
        self.step = step  # 1-based
        super().__init__(f"division by zero at step {step}")


class NonFiniteResult(ProgramError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite result at step {step}")


# --- scanning --------------------------------------------------------------

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_WS_RE = re.compile(r"\s*")
_GROUP_RE = re.compile(r",\d{3}(?!\d)")
_GROUPED_HEAD_RE = re.compile(r"\s*[+-]?[$€£¥]?\s*\d{1,3}(?:,\d{3})*\s*$")
_REF_RE = re.compile(r"#(\d+)")


def _skip_ws(text: str, pos: int) -> int:
    return _WS_RE.match(text, pos).end()


def _arg_candidates(text: str, pos: int) -> list[int]:
    """End positions at which an argument starting at ``pos`` may stop.

    A comma directly followed by three digits may be a thousands separator
    rather than the argument separator, so every such split is a candidate.
    """
    ends = []
    end = pos
    while True:
        while end < len(text) and text[end] not in ",()":
            end += 1
        ends.append(end)
        if end < len(text) and text[end] == "," and _GROUPED_HEAD_RE.match(text[pos:end]) \
                and _GROUP_RE.match(text, end):
            end += 1
            continue
        return ends


def _scan_arg(text: str, pos: int, delimiter: str) -> tuple[str, int]:
    for end in reversed(_arg_candidates(text, pos)):
        after = _skip_ws(text, end)
        if after < len(text) and text[after] == delimiter:
            raw = text[pos:end].strip()
            if raw:
                return raw, after + 1
    raise ParseError(pos, f"argument followed by {delimiter!r}", text)


def scan_call(text: str, pos: int = 0) -> tuple[str, str, str, int]:
    """Scan ``name(a, b)`` at ``pos``; returns the raw pieces and the end offset."""
    pos = _skip_ws(text, pos)
    m = _NAME_RE.match(text, pos)
    if not m:
        raise ParseError(pos, "operator name", text)
    name = m.group(0)
    pos = _skip_ws(text, m.end())
    if pos >= len(text) or text[pos] != "(":
        raise ParseError(pos, "'('", text)
    arg1, pos = _scan_arg(text, pos + 1, ",")
    arg2, pos = _scan_arg(text, _skip_ws(text, pos), ")")
    return name, arg1, arg2, pos


def read_operand(raw: str) -> Operand:
    """Interpret a raw argument token. Raises NotANumber or UnsupportedOperator."""
    raw = raw.strip()
    m = _REF_RE.fullmatch(raw)
    if m:
        return StepRef(int(m.group(1)))
    if raw.lower().startswith("const_"):
        raise UnsupportedOperator(raw)
    return Constant(normalize_numeral(raw))


def parse_program(text: str) -> StepProgram:
    steps: list[Step] = []
    pos = 0
    while True:
        start = _skip_ws(text, pos)
        name, raw1, raw2, pos = _scan_call_checked(text, start)
        args = []
        for raw in (raw1, raw2):
            try:
                arg = read_operand(raw)
            except NotANumber:
                raise ParseError(text.find(raw, start), "numeral or #k", text) from None
            if isinstance(arg, StepRef) and arg.index >= len(steps):
                raise ForwardReference(len(steps), arg.index)
            args.append(arg)
        steps.append(Step(Operator(name.lower()), args[0], args[1]))

        pos = _skip_ws(text, pos)
        if pos == len(text):
            return StepProgram(tuple(steps))
        if text[pos] != ",":
            raise ParseError(pos, "',' or end of program", text)
        pos += 1


def _scan_call_checked(text: str, pos: int) -> tuple[str, str, str, int]:
    m = _NAME_RE.match(text, pos)
    if m and Operator.lookup(m.group(0)) is None:
        raise UnsupportedOperator(m.group(0))
    return scan_call(text, pos)


# --- formatting ------------------------------------------------------------

def format_number(value: float) -> str:
    """Shortest round-tripping decimal, never in exponent form, no trailing ``.0``."""
    if value == 0:
        return "0"
    s = format(Decimal(repr(float(value))), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


def format_operand(arg: Operand) -> str:
    if isinstance(arg, StepRef):
        return f"#{arg.index}"
    return format_number(arg.value)


def format_step(step: Step) -> str:
    return f"{step.op.value}({format_operand(step.arg1)}, {format_operand(step.arg2)})"


def format_program(program: StepProgram) -> str:
    return ", ".join(format_step(s) for s in program.steps)


def format_result(value: float) -> str:
    """Six significant digits, the precision the calculator reports in text."""
    return f"{value:.6g}"


# --- evaluation ------------------------------------------------------------

OPERATIONS: dict[Operator, Callable[[float, float], float]] = {
    Operator.ADD: lambda a, b: a + b,
    Operator.SUBTRACT: lambda a, b: a - b,
    Operator.MULTIPLY: lambda a, b: a * b,
    Operator.DIVIDE: lambda a, b: a / b,
    Operator.MAX: max,
    Operator.MIN: min,
}


def execute_steps(program: StepProgram) -> list[float]:
    """Value of every step, in order."""
    values: list[float] = []
    for i, step in enumerate(program.steps, start=1):
        a, b = (values[x.index] if isinstance(x, StepRef) else x.value for x in (step.arg1, step.arg2))
        if step.op is Operator.DIVIDE and b == 0:
            raise DivisionByZero(i)
        try:
            v = OPERATIONS[step.op](a, b)
        except OverflowError:
            raise NonFiniteResult(i) from None
        if not math.isfinite(v):
            raise NonFiniteResult(i)
        values.append(v)
    return values


def execute(program: StepProgram) -> float:
    return execute_steps(program)[-1]
