"""Central finite-difference gradient checking."""
from typing import Callable, Dict, Optional

import numpy as np


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-3, abs(analytic) + abs(numeric))


def check_gradients(
    loss_fn: Callable[[Dict[str, np.ndarray]], float],
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    eps: float = 1e-5,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Largest relative error between grads and central differences of loss_fn.

    params are perturbed in place and restored. With max_entries, a seeded
    sample of entries per parameter is checked instead of all of them.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, value in params.items():
        flat = value.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = rng.choice(flat.size, size=max_entries, replace=False)
        for i in indices:
            original = flat[i]
            flat[i] = original + eps
            plus = loss_fn(params)
            flat[i] = original - eps
            minus = loss_fn(params)
            flat[i] = original
            numeric = (plus - minus) / (2 * eps)
            worst = max(worst, relative_error(float(grads[name].reshape(-1)[i]), numeric))
    return worst
