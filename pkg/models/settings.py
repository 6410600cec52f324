"""Cascade and synthetic-corpus settings."""
from dataclasses import dataclass
from enum import Enum
from typing import Tuple


class Method(str, Enum):
    """The four ablation variants."""
    TIMELINE = "TIMELINE"
    SIM_TIMELINE = "SIM-TIMELINE"
    EXPR_TIMELINE = "EXPR+TIMELINE"
    FULL_TIFTI = "FULL-TIFTI"

    @property
    def uses_simulated_timeline(self) -> bool:
        return self in (Method.SIM_TIMELINE, Method.FULL_TIFTI)

    @property
    def uses_expression_gate(self) -> bool:
        return self in (Method.EXPR_TIMELINE, Method.FULL_TIFTI)


# CLI spellings of the methods
METHOD_FLAGS = {
    "timeline": Method.TIMELINE,
    "sim": Method.SIM_TIMELINE,
    "expr-timeline": Method.EXPR_TIMELINE,
    "full": Method.FULL_TIFTI,
}

ALL_METHODS = (Method.TIMELINE, Method.SIM_TIMELINE, Method.EXPR_TIMELINE, Method.FULL_TIFTI)


@dataclass(frozen=True)
class CascadeConfig:
    tau: float = 0.9
    method: Method = Method.FULL_TIFTI

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")


@dataclass(frozen=True)
class GenConfig:
    n_examples: int = 2000
    taken_fraction: float = 0.53
    explicit_start_prob: float = 0.5
    explicit_end_prob: float = 0.5
    start_on_visit_prob: float = 0.55
    end_on_visit_prob: float = 0.77
    copy_forward_prob: float = 0.3
    visits_per_example: Tuple[int, int] = (4, 12)
    lexicon: str = "rcc"
    style_profiles: int = 5
    seed: int = 7

    def __post_init__(self):
        probabilities = {
            "taken_fraction": self.taken_fraction,
            "explicit_start_prob": self.explicit_start_prob,
            "explicit_end_prob": self.explicit_end_prob,
            "start_on_visit_prob": self.start_on_visit_prob,
            "end_on_visit_prob": self.end_on_visit_prob,
            "copy_forward_prob": self.copy_forward_prob,
        }
        for name, value in probabilities.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.n_examples < 1:
            raise ValueError(f"n_examples must be >= 1, got {self.n_examples}")
        low, high = self.visits_per_example
        if low < 3 or high < low:
            raise ValueError(f"visits_per_example must satisfy 3 <= low <= high, got {self.visits_per_example}")
        if self.style_profiles < 1:
            raise ValueError(f"style_profiles must be >= 1, got {self.style_profiles}")
