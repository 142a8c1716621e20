"""Numeral normalization shared by the DSL parser and the answer post-processor."""

from __future__ import annotations

import re

CURRENCY_SYMBOLS = "$€£¥"

_NUMERAL_RE = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")


class NotANumber(ValueError):
    """Raised when a token cannot be read as a numeral."""


def normalize_numeral(token: str) -> float:
    """Read a financial-report numeral as a float.

    Commas and currency symbols are stripped, accounting parentheses mean
    negation and a trailing ``%`` divides by 100::

        >>> normalize_numeral("$5,829")
        5829.0
        >>> normalize_numeral("(5.2)")
        -5.2
        >>> normalize_numeral("12%")
        0.12
    """
    if token is None:
        raise NotANumber("empty numeral")
    s = token.strip().replace("−", "-")
    if not s:
        raise NotANumber("empty numeral")

    negative = False
    if s.startswith("(") and s.endswith(")"):
        negative = True
        s = s[1:-1].strip()

    percent = s.endswith("%")
    if percent:
        s = s[:-1].strip()

    sign = ""
    if s[:1] and s[0] in "+-":
        sign, s = s[0], s[1:].lstrip()
    s = s.lstrip(CURRENCY_SYMBOLS).strip()
    # "-$5" and "$-5" are both seen in the wild
    if not sign and s[:1] and s[0] in "+-":
        sign, s = s[0], s[1:].lstrip()

    s = s.replace(",", "")
    if not _NUMERAL_RE.fullmatch(sign + s):
        raise NotANumber(f"not a numeral: {token!r}")
    value = float(sign + s)
    if percent:
        value /= 100.0
    return -value if negative else value


def is_numeral(token: str) -> bool:
    try:
        normalize_numeral(token)
    except NotANumber:
        return False
    return True
