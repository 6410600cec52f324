"""Evaluation report model."""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple


@dataclass(frozen=True)
class AgreementRow:
    """Start(t)/Stop(t) at one window; None when there are no true positives."""
    t: int
    start_agreement: Optional[float]
    stop_agreement: Optional[float]


@dataclass(frozen=True)
class EvalReport:
    f1: float
    precision: float
    recall: float
    n_true_positive: int
    agreement: Tuple[AgreementRow, ...] = field(default_factory=tuple)

    def at(self, t: int) -> AgreementRow:
        for row in self.agreement:
            if row.t == t:
                return row
        raise KeyError(f"No agreement row for t={t}")

    def windows(self) -> List[int]:
        return [row.t for row in self.agreement]
