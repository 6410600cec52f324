"""Feature, training and trained-model types."""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet

import numpy as np


@dataclass(frozen=True)
class FeatureConfig:
    ngram_orders: FrozenSet[int] = frozenset({1, 2})
    dim: int = 2 ** 18
    lowercase: bool = True

    def __post_init__(self):
        object.__setattr__(self, "ngram_orders", frozenset(self.ngram_orders))
        if not self.ngram_orders or min(self.ngram_orders) < 1:
            raise ValueError(f"ngram_orders must be non-empty and >= 1, got {sorted(self.ngram_orders)}")
        if self.dim < 2 or self.dim & (self.dim - 1):
            raise ValueError(f"dim must be a power of two >= 2, got {self.dim}")

    def to_dict(self) -> Dict:
        return {"ngram_orders": sorted(self.ngram_orders), "dim": self.dim, "lowercase": self.lowercase}

    @classmethod
    def from_dict(cls, data: Dict) -> "FeatureConfig":
        return cls(
            ngram_orders=frozenset(int(n) for n in data["ngram_orders"]),
            dim=int(data["dim"]),
            lowercase=bool(data["lowercase"]),
        )


@dataclass(frozen=True)
class FeatureVector:
    """Sparse hashed n-gram counts with strictly increasing indices."""
    dim: int
    indices: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    def entries(self):
        return list(zip(self.indices.tolist(), self.weights.tolist()))


class SeqVariant(str, Enum):
    INDEPENDENT_LOGISTIC = "INDEPENDENT-LOGISTIC"
    BIRNN = "BIRNN"


class TimelineKind(str, Enum):
    ORIGINAL = "ORIGINAL"
    SIMULATED = "SIMULATED"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs <= 0:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be non-negative, got {self.l2}")


@dataclass
class SequenceLabelerModel:
    """Document-timeline labeler.

    INDEPENDENT-LOGISTIC params: W (3 x dim), b (3).
    BIRNN params: W_in (dim x d_in), b_in (d_in); per direction d in {f, b}:
    W{z,r,n}_d (d_in x h), U{z,r,n}_d (h x h), b{z,r,n}_d (h); output V (2h x 3), c (3).
    """
    variant: SeqVariant
    feature_config: FeatureConfig
    params: Dict[str, np.ndarray]
    trained_on: TimelineKind = TimelineKind.ORIGINAL
    seed: int = 0
    d_in: int = 64
    hidden: int = 32

    def check_shapes(self) -> None:
        expected = sequence_param_shapes(self.variant, self.feature_config.dim, self.d_in, self.hidden)
        if set(expected) != set(self.params):
            raise ValueError(f"Parameter names {sorted(self.params)} do not match variant {self.variant.value}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ValueError(f"Parameter {name} has shape {self.params[name].shape}, expected {shape}")
            if not np.all(np.isfinite(self.params[name])):
                raise ValueError(f"Parameter {name} has non-finite values")


@dataclass
class ExprModel:
    """Multinomial logistic START/END/NEITHER classifier over revised sentences."""
    W: np.ndarray
    b: np.ndarray
    feature_config: FeatureConfig
    delta_days: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.delta_days < 0:
            raise ValueError(f"delta_days must be >= 0, got {self.delta_days}")
        if self.W.shape != (3, self.feature_config.dim) or self.b.shape != (3,):
            raise ValueError(
                f"Expression model shapes {self.W.shape}/{self.b.shape} do not match dim {self.feature_config.dim}"
            )
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValueError("Expression model has non-finite parameters")

    @property
    def params(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


GRU_GATES = ("z", "r", "n")
DIRECTIONS = ("f", "b")


def sequence_param_shapes(variant: SeqVariant, dim: int, d_in: int, hidden: int) -> Dict[str, tuple]:
    """Parameter names and shapes for a labeler variant, in file order."""
    if variant == SeqVariant.INDEPENDENT_LOGISTIC:
        return {"W": (3, dim), "b": (3,)}
    shapes = {"W_in": (dim, d_in), "b_in": (d_in,)}
    for direction in DIRECTIONS:
        for gate in GRU_GATES:
            shapes[f"W{gate}_{direction}"] = (d_in, hidden)
            shapes[f"U{gate}_{direction}"] = (hidden, hidden)
            shapes[f"b{gate}_{direction}"] = (hidden,)
    shapes["V"] = (2 * hidden, 3)
    shapes["c"] = (3,)
    return shapes
