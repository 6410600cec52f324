"""Multinomial logistic regression on sparse hashed features, trained by full-batch gradient descent."""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as ssp

logger = logging.getLogger(__name__)


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max for stability."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def init_uniform(rng: np.random.Generator, shape: tuple, scale: float = 0.1) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def softmax_regression_loss_and_grad(
    params: Dict[str, np.ndarray],
    X: ssp.csr_matrix,
    y: np.ndarray,
    l2: float,
    sample_weight: Optional[np.ndarray] = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean (weighted) cross-entropy + l2 * (||W||^2 + ||b||^2) and its gradient.

    params: W (k x dim), b (k).
    """
    W, b = params["W"], params["b"]
    n = X.shape[0]
    weights = np.ones(n) if sample_weight is None else sample_weight
    scores = np.asarray(X @ W.T) + b
    log_p = log_softmax(scores)
    loss = -np.sum(weights * log_p[np.arange(n), y]) / n + l2 * (np.sum(W * W) + np.sum(b * b))

    delta = np.exp(log_p)
    delta[np.arange(n), y] -= 1.0
    delta *= (weights / n)[:, None]
    grad_W = np.asarray((X.T @ delta).T) + 2.0 * l2 * W
    grad_b = delta.sum(axis=0) + 2.0 * l2 * b
    return float(loss), {"W": grad_W, "b": grad_b}


def fit_softmax_regression(
    X: ssp.csr_matrix,
    y: np.ndarray,
    n_classes: int,
    learning_rate: float,
    epochs: int,
    l2: float,
    seed: int,
    sample_weight: Optional[np.ndarray] = None,
    label: str = "softmax regression",
) -> Tuple[Dict[str, np.ndarray], List[float]]:
    """Full-batch gradient descent from a seeded uniform(-0.1, 0.1) start.

    Returns the parameters and the loss recorded before each update.
    """
    rng = np.random.default_rng(seed)
    params = {
        "W": init_uniform(rng, (n_classes, X.shape[1])),
        "b": init_uniform(rng, (n_classes,)),
    }
    X = X.tocsr()
    history = []
    for epoch in range(epochs):
        loss, grads = softmax_regression_loss_and_grad(params, X, y, l2, sample_weight)
        history.append(loss)
        for name in params:
            params[name] -= learning_rate * grads[name]
        logger.debug(f"{label} epoch {epoch + 1}/{epochs}: loss {loss:.6f}")
    logger.info(f"Trained {label} on {X.shape[0]} rows, final loss {history[-1]:.6f}")
    return params, history
