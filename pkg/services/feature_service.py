"""Feature service: tokenization and hashed n-gram featurization.

Hash: FNV-1a, 64-bit, over the UTF-8 bytes of "<order>\\x1f<tokens joined by one space>",
offset basis 0xcbf29ce484222325, prime 0x100000001b3; index = hash mod dim.
Tokens: placeholders kept verbatim, other alphanumeric runs lowercased;
everything else is a boundary and dropped.
"""
import logging
import re
from functools import lru_cache
from typing import Dict, List, Sequence

import numpy as np
import scipy.sparse as ssp

from models.corpus import DRUG_PLACEHOLDER, OTHER_DRUG_PLACEHOLDER
from models.learning import FeatureConfig, FeatureVector
from models.temporal import TIME_PLACEHOLDER, TimeBucket

logger = logging.getLogger(__name__)

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

PLACEHOLDERS = (OTHER_DRUG_PLACEHOLDER, DRUG_PLACEHOLDER, TIME_PLACEHOLDER) + tuple(b.value for b in TimeBucket)

_TOKEN = re.compile(
    r"(?<!\w)(" + "|".join(re.escape(p) for p in sorted(PLACEHOLDERS, key=len, reverse=True)) + r")(?!\w)"
    r"|([^\W_]+)"
)

HASH_SPEC: Dict[str, object] = {
    "name": "fnv1a-64",
    "offset_basis": FNV_OFFSET_BASIS,
    "prime": FNV_PRIME,
    "key": "<order>\\x1f<space-joined tokens>, utf-8",
    "tokens": "placeholders verbatim; [^\\W_]+ runs lowercased; punctuation dropped",
    "placeholders": list(PLACEHOLDERS),
}


def fnv1a_64(data: bytes) -> int:
    value = FNV_OFFSET_BASIS
    for byte in data:
        value ^= byte
        value = (value * FNV_PRIME) & _MASK64
    return value


@lru_cache(maxsize=1 << 20)
def ngram_hash(order: int, joined: str) -> int:
    return fnv1a_64(f"{order}\x1f{joined}".encode("utf-8"))


def tokenize(text: str, lowercase: bool = True) -> List[str]:
    """Split text into tokens; placeholders such as DRUG survive verbatim."""
    tokens = []
    for match in _TOKEN.finditer(text):
        placeholder, word = match.groups()
        if placeholder is not None:
            tokens.append(placeholder)
        else:
            tokens.append(word.lower() if lowercase else word)
    return tokens


def featurize(text: str, config: FeatureConfig) -> FeatureVector:
    """Hashed n-gram counts of text; colliding n-grams add up."""
    tokens = tokenize(text, lowercase=config.lowercase)
    indices = []
    for order in sorted(config.ngram_orders):
        for i in range(len(tokens) - order + 1):
            indices.append(ngram_hash(order, " ".join(tokens[i:i + order])) % config.dim)
    if not indices:
        return FeatureVector(dim=config.dim, indices=np.zeros(0, dtype=np.int64), weights=np.zeros(0))
    unique, counts = np.unique(np.asarray(indices, dtype=np.int64), return_counts=True)
    return FeatureVector(dim=config.dim, indices=unique, weights=counts.astype(np.float64))


def design_matrix(texts: Sequence[str], config: FeatureConfig, normalize: bool = True) -> ssp.csr_matrix:
    """Stack featurized texts into a CSR matrix; rows are L2-normalized when normalize is set."""
    indptr = [0]
    indices = []
    data = []
    for text in texts:
        vector = featurize(text, config)
        weights = vector.weights
        if normalize and len(weights):
            weights = weights / np.sqrt(np.dot(weights, weights))
        indices.append(vector.indices)
        data.append(weights)
        indptr.append(indptr[-1] + len(vector))
    matrix = ssp.csr_matrix(
        (
            np.concatenate(data) if data else np.zeros(0),
            np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(len(texts), config.dim),
    )
    return matrix
