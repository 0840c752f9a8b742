"""Answer canonicalization and scoring.

Scoring compares canonical forms, never raw strings. Each answer type has
its own normalization; a string with no canonical form raises
Unnormalizable, which scoring treats as simply incorrect. Exact-match
conventions differ across published evaluations, so absolute scores are a
function of the rules written down here.
"""
from __future__ import annotations

import datetime
import re
from decimal import Decimal, InvalidOperation
from enum import Enum

from .errors import Unnormalizable


class AnswerType(Enum):
    NUMERIC = "numeric"
    MULTIPLE_CHOICE = "multiple_choice"
    FREE_TEXT = "free_text"
    DATE = "date"

    @classmethod
    def parse(cls, name: str) -> "AnswerType":
        wanted = name.strip().casefold()
        for member in cls:
            if member.value == wanted:
                return member
        raise ValueError(f"unknown answer type: {name!r}")


def format_decimal(value: Decimal) -> str:
    """Shortest plain decimal string: no exponent, no trailing zeros."""
    text = format(value, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if text in ("", "-0"):
        text = "0"
    return text


# First number in the text: optional sign, digit grouping commas, optional
# fraction or bare ".5" form, optional exponent.
_NUMBER_RE = re.compile(r"-?(?:\d[\d,]*(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?")

_MC_RE = re.compile(r"\(([A-Ea-e])\)|(?<![A-Za-z])([A-Ea-e])(?![A-Za-z])")

_ARTICLES = {"a", "an", "the"}

_MONTHS: dict[str, int] = {}
for _i, _name in enumerate(
    [
        "January", "February", "March", "April", "May", "June",
        "July", "August", "September", "October", "November", "December",
    ],
    start=1,
):
    _MONTHS[_name.casefold()] = _i
    _MONTHS[_name[:3].casefold()] = _i

_DATE_ISO_RE = re.compile(r"(\d{4})-(\d{1,2})-(\d{1,2})")
_DATE_SLASH_RE = re.compile(r"(\d{1,2})/(\d{1,2})/(\d{4})")
_DATE_MONTH_FIRST_RE = re.compile(
    r"([A-Za-z]{3,9})\.?\s+(\d{1,2})(?:st|nd|rd|th)?\s*,?\s+(\d{4})"
)
_DATE_DAY_FIRST_RE = re.compile(
    r"(\d{1,2})(?:st|nd|rd|th)?\s+(?:of\s+)?([A-Za-z]{3,9})\.?\s*,?\s+(\d{4})"
)


def _normalize_numeric(raw: str) -> str:
    m = _NUMBER_RE.search(raw)
    if m is None:
        raise Unnormalizable(f"no number found in {raw!r}")
    try:
        value = Decimal(m.group(0).replace(",", ""))
    except InvalidOperation as exc:  # pragma: no cover - regex should prevent this
        raise Unnormalizable(f"unparseable number in {raw!r}") from exc
    return format_decimal(value)


def _normalize_multiple_choice(raw: str) -> str:
    m = _MC_RE.search(raw)
    if m is None:
        raise Unnormalizable(f"no option letter found in {raw!r}")
    return (m.group(1) or m.group(2)).upper()


def _normalize_free_text(raw: str) -> str:
    text = raw.casefold().strip()
    text = text.rstrip(".!?").strip()
    tokens = [t for t in text.split() if t not in _ARTICLES]
    if not tokens:
        raise Unnormalizable(f"no content tokens in {raw!r}")
    return " ".join(tokens)


def _checked_date(year: int, month: int, day: int) -> str:
    try:
        return datetime.date(year, month, day).isoformat()
    except ValueError as exc:
        raise Unnormalizable(f"impossible date {year}-{month}-{day}") from exc


def _normalize_date(raw: str) -> str:
    m = _DATE_ISO_RE.search(raw)
    if m:
        return _checked_date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    m = _DATE_SLASH_RE.search(raw)
    if m:
        # Slash dates are read month-first.
        return _checked_date(int(m.group(3)), int(m.group(1)), int(m.group(2)))
    m = _DATE_MONTH_FIRST_RE.search(raw)
    if m and m.group(1).casefold() in _MONTHS:
        return _checked_date(
            int(m.group(3)), _MONTHS[m.group(1).casefold()], int(m.group(2))
        )
    m = _DATE_DAY_FIRST_RE.search(raw)
    if m and m.group(2).casefold() in _MONTHS:
        return _checked_date(
            int(m.group(3)), _MONTHS[m.group(2).casefold()], int(m.group(1))
        )
    raise Unnormalizable(f"no recognizable date in {raw!r}")


_NORMALIZERS = {
    AnswerType.NUMERIC: _normalize_numeric,
    AnswerType.MULTIPLE_CHOICE: _normalize_multiple_choice,
    AnswerType.FREE_TEXT: _normalize_free_text,
    AnswerType.DATE: _normalize_date,
}


def normalize_answer(raw: str, answer_type: AnswerType) -> str:
    """Canonicalize an answer string for its type.

    Numeric strips currency, commas, and unit words down to the shortest
    exact decimal; multiple choice keeps the first standalone A-E letter,
    uppercased; free text casefolds, collapses whitespace, and drops
    articles and terminal punctuation; dates come out ISO (YYYY-MM-DD).
    """
    return _NORMALIZERS[answer_type](raw)


def score_prediction(predicted: str, gold: str, answer_type: AnswerType) -> bool:
    """Exact match on canonical forms; unnormalizable answers score False."""
    try:
        return normalize_answer(predicted, answer_type) == normalize_answer(
            gold, answer_type
        )
    except Unnormalizable:
        return False


def _whole_number(text: str) -> Decimal | None:
    """The value of text when the entire trimmed string is one number."""
    try:
        return Decimal(text.strip())
    except (InvalidOperation, ValueError):
        return None


def vote_keys(values: list[str]) -> list[str]:
    """Equivalence keys for vote counting.

    When every compared string parses as a number, keys are canonical
    decimals (so "230" and "230." agree); otherwise keys are case-folded
    trimmed text.
    """
    numbers = [_whole_number(v) for v in values]
    if values and all(n is not None for n in numbers):
        return [format_decimal(n) for n in numbers]  # type: ignore[arg-type]
    return [v.strip().casefold() for v in values]


def auto_canonical(raw: str) -> str:
    """Single-value canonical form under the vote-key convention."""
    number = _whole_number(raw)
    if number is not None:
        return format_decimal(number)
    return raw.strip().casefold()
