"""Temporal service: rule-based time expression tagging and mapped-date resolution."""
import calendar
import logging
import re
from datetime import timedelta
from typing import List, NamedTuple, Tuple

from dateutil.relativedelta import relativedelta

from models.corpus import DateStamp, DocumentTimeline
from models.temporal import TimeBucket, TimeExpression
from services.corpus_service import split_sentences

logger = logging.getLogger(__name__)

MONTHS = {
    "january": 1, "jan": 1, "february": 2, "feb": 2, "march": 3, "mar": 3,
    "april": 4, "apr": 4, "may": 5, "june": 6, "jun": 6, "july": 7, "jul": 7,
    "august": 8, "aug": 8, "september": 9, "sept": 9, "sep": 9,
    "october": 10, "oct": 10, "november": 11, "nov": 11, "december": 12, "dec": 12,
}
WEEKDAYS = {
    "monday": 0, "tuesday": 1, "wednesday": 2, "thursday": 3,
    "friday": 4, "saturday": 5, "sunday": 6,
}
SPELLED_NUMBERS = {
    "a": 1, "an": 1, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
}

_MONTH = r"(?:" + "|".join(sorted(MONTHS, key=len, reverse=True)) + r")"
_WEEKDAY = r"(?:" + "|".join(WEEKDAYS) + r")"
_COUNT = r"(?:\d{1,3}|" + "|".join(sorted(SPELLED_NUMBERS, key=len, reverse=True)) + r")"
_UNIT = r"(?:day|week|month)s?"


class _Rule(NamedTuple):
    bucket: TimeBucket
    pattern: "re.Pattern"


# Pattern table; overlaps across rules are resolved longest-first, then leftmost
PATTERN_TABLE: Tuple[_Rule, ...] = (
    _Rule(TimeBucket.EXPLICIT_DATE, re.compile(r"(?<![\w/])\d{1,2}/\d{1,2}/(?:\d{4}|\d{2})(?![\w/])")),
    _Rule(TimeBucket.EXPLICIT_DATE, re.compile(r"(?<![\w/])\d{1,2}/\d{1,2}(?![\w/])")),
    _Rule(TimeBucket.EXPLICIT_DATE, re.compile(r"(?<![\w-])\d{4}-\d{2}-\d{2}(?![\w-])")),
    _Rule(
        TimeBucket.EXPLICIT_DATE,
        re.compile(r"\b" + _MONTH + r"\.?\s+\d{1,2}(?:st|nd|rd|th)?(?:,?\s+\d{4})?(?![\w])", re.IGNORECASE),
    ),
    _Rule(TimeBucket.MONTH_YEAR, re.compile(r"\b" + _MONTH + r"\.?\s+\d{4}(?!\w)", re.IGNORECASE)),
    _Rule(TimeBucket.MONTH_YEAR, re.compile(r"\bin\s+" + _MONTH + r"\b(?!\.?\s+\d)", re.IGNORECASE)),
    _Rule(TimeBucket.RELATIVE_DAY, re.compile(r"\b(?:today|yesterday)\b", re.IGNORECASE)),
    _Rule(TimeBucket.RELATIVE_DAY, re.compile(r"\blast\s+" + _WEEKDAY + r"\b", re.IGNORECASE)),
    _Rule(TimeBucket.DURATION_AGO, re.compile(r"\b" + _COUNT + r"\s+" + _UNIT + r"\s+ago\b", re.IGNORECASE)),
    _Rule(TimeBucket.DURATION_FOR, re.compile(r"\bfor\s+" + _COUNT + r"\s+" + _UNIT + r"\b", re.IGNORECASE)),
)

_NUMERIC_DATE = re.compile(r"^(\d{1,2})/(\d{1,2})(?:/(\d{2}|\d{4}))?$")
_ISO_DATE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")
_MONTH_NAME_DATE = re.compile(r"^(" + _MONTH + r")\.?\s+(\d{1,2})(?:st|nd|rd|th)?(?:,?\s+(\d{4}))?$", re.IGNORECASE)
_MONTH_NAME_YEAR = re.compile(r"^(" + _MONTH + r")\.?\s+(\d{4})$", re.IGNORECASE)
_IN_MONTH = re.compile(r"^in\s+(" + _MONTH + r")$", re.IGNORECASE)
_LAST_WEEKDAY = re.compile(r"^last\s+(" + _WEEKDAY + r")$", re.IGNORECASE)
_DURATION = re.compile(r"^(?:for\s+)?(" + _COUNT + r")\s+(day|week|month)s?(?:\s+ago)?$", re.IGNORECASE)


def expand_two_digit_year(year: int) -> int:
    """00-69 map to the 2000s, 70-99 to the 1900s."""
    return 2000 + year if year < 70 else 1900 + year


def _most_recent(month: int, day: int, anchor: DateStamp) -> DateStamp:
    """Latest valid month/day on or before anchor."""
    if day > 31 or day < 1:
        raise ValueError(f"day {day} out of range")
    for year in range(anchor.year, anchor.year - 9, -1):
        if day <= calendar.monthrange(year, month)[1]:
            candidate = DateStamp(year, month, day)
            if candidate <= anchor:
                return candidate
    raise ValueError(f"no valid occurrence of {month}/{day} before {anchor}")


def _count(token: str) -> int:
    token = token.lower()
    if token in SPELLED_NUMBERS:
        return SPELLED_NUMBERS[token]
    return int(token)


def _shift_back(anchor: DateStamp, amount: int, unit: str) -> DateStamp:
    unit = unit.lower()
    if unit == "day":
        return anchor - timedelta(days=amount)
    if unit == "week":
        return anchor - timedelta(weeks=amount)
    # relativedelta clamps the day to the target month's length
    return anchor - relativedelta(months=amount)


def resolve_mapped_date(surface: str, bucket: TimeBucket, anchor: DateStamp) -> DateStamp:
    """Resolve an expression to the calendar date it refers to, relative to anchor.

    Raises ValueError when the surface does not fit the bucket's rule or names
    an impossible calendar date.
    """
    text = " ".join(surface.split())
    if bucket == TimeBucket.EXPLICIT_DATE:
        match = _NUMERIC_DATE.match(text)
        if match:
            month, day = int(match.group(1)), int(match.group(2))
            if not 1 <= month <= 12:
                raise ValueError(f"month {month} out of range in '{surface}'")
            if match.group(3) is None:
                return _most_recent(month, day, anchor)
            year = int(match.group(3))
            year = expand_two_digit_year(year) if len(match.group(3)) == 2 else year
            return DateStamp(year, month, day)
        match = _ISO_DATE.match(text)
        if match:
            return DateStamp(int(match.group(1)), int(match.group(2)), int(match.group(3)))
        match = _MONTH_NAME_DATE.match(text)
        if match:
            month, day = MONTHS[match.group(1).lower()], int(match.group(2))
            if match.group(3) is None:
                return _most_recent(month, day, anchor)
            return DateStamp(int(match.group(3)), month, day)
    elif bucket == TimeBucket.MONTH_YEAR:
        match = _MONTH_NAME_YEAR.match(text)
        if match:
            return DateStamp(int(match.group(2)), MONTHS[match.group(1).lower()], 1)
        match = _IN_MONTH.match(text)
        if match:
            return _most_recent(MONTHS[match.group(1).lower()], 1, anchor)
    elif bucket == TimeBucket.RELATIVE_DAY:
        lowered = text.lower()
        if lowered == "today":
            return anchor
        if lowered == "yesterday":
            return anchor - timedelta(days=1)
        match = _LAST_WEEKDAY.match(text)
        if match:
            # strictly before the anchor: 1..7 days back
            back = (anchor.weekday() - WEEKDAYS[match.group(1).lower()]) % 7 or 7
            return anchor - timedelta(days=back)
    elif bucket in (TimeBucket.DURATION_AGO, TimeBucket.DURATION_FOR):
        match = _DURATION.match(text)
        if match:
            return _shift_back(anchor, _count(match.group(1)), match.group(2))
    raise ValueError(f"'{surface}' does not match the {bucket.value} rules")


class _Match(NamedTuple):
    start: int
    end: int
    bucket: TimeBucket


def _candidate_matches(sentence: str) -> List[_Match]:
    candidates = []
    for rule in PATTERN_TABLE:
        for match in rule.pattern.finditer(sentence):
            candidates.append(_Match(match.start(), match.end(), rule.bucket))
    # longest first, then leftmost; earlier rules win exact ties
    candidates.sort(key=lambda m: (-(m.end - m.start), m.start))
    chosen: List[_Match] = []
    for candidate in candidates:
        if all(candidate.end <= c.start or candidate.start >= c.end for c in chosen):
            chosen.append(candidate)
    return sorted(chosen, key=lambda m: m.start)


def tag_sentence(sentence: str, anchor: DateStamp, doc_index: int = 0, sentence_index: int = 0) -> List[TimeExpression]:
    """Tag one sentence; matches naming impossible dates are skipped."""
    expressions = []
    for match in _candidate_matches(sentence):
        surface = sentence[match.start:match.end]
        try:
            mapped = resolve_mapped_date(surface, match.bucket, anchor)
        except (ValueError, OverflowError) as e:
            logger.debug(f"Skipping '{surface}' anchored at {anchor}: {e}")
            continue
        expressions.append(
            TimeExpression(
                doc_index=doc_index,
                sentence_index=sentence_index,
                char_span=(match.start, match.end),
                surface=surface,
                bucket=match.bucket,
                mapped_date=mapped,
            )
        )
    return expressions


def tag_time_expressions(timeline: DocumentTimeline) -> List[TimeExpression]:
    """Tag every sentence of the timeline, in document order then span order."""
    expressions = []
    for doc_index, doc in enumerate(timeline.docs):
        for sentence_index, sentence in enumerate(doc.sentences):
            expressions.extend(tag_sentence(sentence, doc.timestamp, doc_index, sentence_index))
    return expressions


def tag_text(text: str, anchor: DateStamp) -> List[TimeExpression]:
    """Split a free-text snippet into sentences and tag each against anchor."""
    expressions = []
    for sentence_index, sentence in enumerate(split_sentences(text)):
        expressions.extend(tag_sentence(sentence, anchor, 0, sentence_index))
    return expressions

