"""Time expression models."""
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

from models.corpus import DateStamp


class TimeBucket(str, Enum):
    EXPLICIT_DATE = "EXPLICIT-DATE"
    MONTH_YEAR = "MONTH-YEAR"
    RELATIVE_DAY = "RELATIVE-DAY"
    DURATION_AGO = "DURATION-AGO"
    DURATION_FOR = "DURATION-FOR"


@dataclass(frozen=True)
class TimeExpression:
    """A tagged span inside a timeline sentence with its mapped date.

    char_span is a half-open [start, end) range of string offsets.
    """
    doc_index: int
    sentence_index: int
    char_span: Tuple[int, int]
    surface: str
    bucket: TimeBucket
    mapped_date: DateStamp

    @property
    def expression_id(self) -> str:
        return f"{self.doc_index}:{self.sentence_index}:{self.char_span[0]}"


TIME_PLACEHOLDER = "TIME"
# Same word boundary as the tagger rules: "TIME EXPLICIT-DATE-present" holds one placeholder
_PLACEHOLDER_RUN = re.compile(r"(?<!\w)" + TIME_PLACEHOLDER + r" (?:" + "|".join(b.value for b in TimeBucket) + r")(?!\w)")


@dataclass(frozen=True)
class RevisedSentence:
    """A sentence with one time expression replaced by "TIME <bucket>"."""
    text: str
    mapped_date: DateStamp
    expression_id: str
    bucket: TimeBucket
    doc_timestamp: Optional[DateStamp] = None

    def __post_init__(self):
        count = len(_PLACEHOLDER_RUN.findall(self.text))
        if count != 1:
            raise ValueError(f"Revised sentence must hold exactly one TIME placeholder, found {count}: '{self.text}'")
