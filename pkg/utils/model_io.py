"""Model files.

Line 1 is a JSON header (format, version, variant, parameter order and shapes,
feature config, hash spec, seed and variant-specific fields). Line 2 is a JSON
array with every parameter flattened in header order, row-major. Floats are
written with repr precision, so a save/load cycle is bit-exact.
"""
import json
import logging
import os
from typing import Dict, List, Tuple

import numpy as np

from config import EXPR_MODEL, SEQ_ORIGINAL_MODEL, SEQ_SIMULATED_MODEL
from models.learning import ExprModel, FeatureConfig, SequenceLabelerModel, SeqVariant, TimelineKind
from services.cascade_service import CascadeModels
from services.feature_service import HASH_SPEC

logger = logging.getLogger(__name__)

MODEL_FORMAT = "tifti-model"
MODEL_VERSION = 1
EXPR_VARIANT = "EXPR"


def _write(path: str, header: Dict, params: Dict[str, np.ndarray]) -> None:
    flat: List[float] = []
    for name in header["param_order"]:
        value = params[name]
        if not np.all(np.isfinite(value)):
            raise ValueError(f"Refusing to save non-finite parameter {name}")
        flat.extend(value.ravel().tolist())
    header = dict(header, format=MODEL_FORMAT, version=MODEL_VERSION, hash=HASH_SPEC,
                  shapes={name: list(params[name].shape) for name in header["param_order"]})
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        handle.write(json.dumps(flat) + "\n")
    logger.info(f"Saved {header['variant']} model ({len(flat)} parameters) to {path}")


def _read(path: str) -> Tuple[Dict, Dict[str, np.ndarray]]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Model file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        header_line = handle.readline()
        values_line = handle.readline()
    try:
        header = json.loads(header_line)
        values = json.loads(values_line)
    except json.JSONDecodeError as e:
        raise ValueError(f"Malformed model file {path}: {e}")
    if header.get("format") != MODEL_FORMAT or header.get("version") != MODEL_VERSION:
        raise ValueError(f"{path} is not a version {MODEL_VERSION} {MODEL_FORMAT} file")
    if header.get("hash") != HASH_SPEC:
        raise ValueError(f"{path} was written with a different feature hash: {header.get('hash')}")

    params = {}
    offset = 0
    flat = np.asarray(values, dtype=np.float64)
    for name in header["param_order"]:
        shape = tuple(header["shapes"][name])
        size = int(np.prod(shape)) if shape else 1
        if offset + size > len(flat):
            raise ValueError(f"{path}: parameter array is too short for {name}")
        params[name] = flat[offset:offset + size].reshape(shape).copy()
        offset += size
    if offset != len(flat):
        raise ValueError(f"{path}: {len(flat) - offset} trailing parameter values")
    return header, params


def save_sequence_model(model: SequenceLabelerModel, path: str) -> None:
    model.check_shapes()
    header = {
        "variant": model.variant.value,
        "param_order": list(model.params),
        "feature_config": model.feature_config.to_dict(),
        "seed": model.seed,
        "trained_on": model.trained_on.value,
        "d_in": model.d_in,
        "hidden": model.hidden,
    }
    _write(path, header, model.params)


def load_sequence_model(path: str) -> SequenceLabelerModel:
    header, params = _read(path)
    if header["variant"] == EXPR_VARIANT:
        raise ValueError(f"{path} holds an expression model, not a sequence labeler")
    model = SequenceLabelerModel(
        variant=SeqVariant(header["variant"]),
        feature_config=FeatureConfig.from_dict(header["feature_config"]),
        params=params,
        trained_on=TimelineKind(header["trained_on"]),
        seed=int(header["seed"]),
        d_in=int(header["d_in"]),
        hidden=int(header["hidden"]),
    )
    model.check_shapes()
    return model


def save_expr_model(model: ExprModel, path: str) -> None:
    header = {
        "variant": EXPR_VARIANT,
        "param_order": ["W", "b"],
        "feature_config": model.feature_config.to_dict(),
        "seed": model.seed,
        "delta_days": model.delta_days,
    }
    _write(path, header, model.params)


def load_expr_model(path: str) -> ExprModel:
    header, params = _read(path)
    if header["variant"] != EXPR_VARIANT:
        raise ValueError(f"{path} holds a {header['variant']} labeler, not an expression model")
    return ExprModel(
        W=params["W"],
        b=params["b"],
        feature_config=FeatureConfig.from_dict(header["feature_config"]),
        delta_days=int(header["delta_days"]),
        seed=int(header["seed"]),
    )


def save_models(models: CascadeModels, model_dir: str) -> List[str]:
    """Write whichever models are present; returns the written paths."""
    os.makedirs(model_dir, exist_ok=True)
    written = []
    if models.seq_original is not None:
        written.append(os.path.join(model_dir, SEQ_ORIGINAL_MODEL))
        save_sequence_model(models.seq_original, written[-1])
    if models.seq_simulated is not None:
        written.append(os.path.join(model_dir, SEQ_SIMULATED_MODEL))
        save_sequence_model(models.seq_simulated, written[-1])
    if models.expr is not None:
        written.append(os.path.join(model_dir, EXPR_MODEL))
        save_expr_model(models.expr, written[-1])
    return written


def load_models(model_dir: str) -> CascadeModels:
    """Load every model file found in model_dir; at least one must exist."""
    if not os.path.isdir(model_dir):
        raise FileNotFoundError(f"Model directory not found: {model_dir}")
    models = CascadeModels()
    paths = {name: os.path.join(model_dir, name) for name in (SEQ_ORIGINAL_MODEL, SEQ_SIMULATED_MODEL, EXPR_MODEL)}
    if os.path.exists(paths[SEQ_ORIGINAL_MODEL]):
        models.seq_original = load_sequence_model(paths[SEQ_ORIGINAL_MODEL])
    if os.path.exists(paths[SEQ_SIMULATED_MODEL]):
        models.seq_simulated = load_sequence_model(paths[SEQ_SIMULATED_MODEL])
    if os.path.exists(paths[EXPR_MODEL]):
        models.expr = load_expr_model(paths[EXPR_MODEL])
    if models.seq_original is None and models.seq_simulated is None and models.expr is None:
        raise FileNotFoundError(f"No model files in {model_dir}")
    return models
