"""Label and prediction models shared by the labelers, the cascade and evaluation."""
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, Optional, Tuple

from models.corpus import DateStamp


class DocLabel(IntEnum):
    """Document label relative to the regimen; PRE < MID < POST."""
    PRE = 0
    MID = 1
    POST = 2


class ExprClass(IntEnum):
    START = 0
    END = 1
    NEITHER = 2


class Evidence(str, Enum):
    EXPRESSION = "EXPRESSION"
    TIMELINE = "TIMELINE"


@dataclass(frozen=True)
class LabelDistribution:
    p_pre: float
    p_mid: float
    p_post: float

    def __post_init__(self):
        values = (self.p_pre, self.p_mid, self.p_post)
        if any(p < 0.0 or p > 1.0 for p in values):
            raise ValueError(f"Label probabilities out of range: {values}")
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValueError(f"Label probabilities do not sum to 1: {values}")

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.p_pre, self.p_mid, self.p_post


@dataclass(frozen=True)
class ExprScore:
    """Probability that an expression marks a start, an end, or neither."""
    start: float
    end: float
    neither: float

    def argmax(self) -> ExprClass:
        values = (self.start, self.end, self.neither)
        return ExprClass(max(range(3), key=lambda i: (values[i], -i)))


@dataclass(frozen=True)
class DecodedDocument:
    """Audit entry: one timeline document and the label decoded for it."""
    timestamp: DateStamp
    label: DocLabel
    is_pseudo: bool


@dataclass(frozen=True)
class IntervalPrediction:
    """Predicted regimen; an absent end with taken=True means ongoing."""
    taken: bool
    start: Optional[DateStamp] = None
    end: Optional[DateStamp] = None
    evidence: Dict[str, Evidence] = field(default_factory=dict)
    decoded: Tuple[DecodedDocument, ...] = ()

    def __post_init__(self):
        if not self.taken and (self.start is not None or self.end is not None):
            raise ValueError("Prediction with taken=false must not carry dates")
        if self.taken and self.start is None:
            raise ValueError("Prediction with taken=true must carry a start date")
        if self.start is not None and self.end is not None and self.start > self.end:
            raise ValueError(f"Predicted start {self.start} is after end {self.end}")

    @property
    def ongoing(self) -> bool:
        return self.taken and self.end is None

    @classmethod
    def not_taken(cls, decoded: Tuple[DecodedDocument, ...] = ()) -> "IntervalPrediction":
        return cls(taken=False, decoded=decoded)

