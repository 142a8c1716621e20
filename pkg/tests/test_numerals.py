from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from finqa_harness.numerals import NotANumber, is_numeral, normalize_numeral


@pytest.mark.parametrize("token, value", [
    ("5,829", 5829.0),
    ("$ 5,829", 5829.0),
    ("$5,829.50", 5829.5),
    ("€12", 12.0),
    ("(5.2)", -5.2),
    ("($1,000)", -1000.0),
    ("12%", 0.12),
    ("-3.5%", -0.035),
    ("−7", -7.0),
    ("-$5", -5.0),
    ("$-5", -5.0),
    (".5", 0.5),
    ("1e3", 1000.0),
])
def test_normalize(token, value):
    assert normalize_numeral(token) == pytest.approx(value)


@pytest.mark.parametrize("token", ["", "  ", "%", "()", "abc", "1.2.3", "n/a", "$", "inf", "nan", "1-2"])
def test_rejects(token):
    with pytest.raises(NotANumber):
        normalize_numeral(token)
    assert not is_numeral(token)


@given(st.integers(-10**12, 10**12))
def test_grouped_integers(n):
    assert normalize_numeral(f"{n:,}") == n
    assert normalize_numeral(f"${n:,}") == n


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_repr_round_trip(x):
    assert normalize_numeral(repr(x)) == x
