"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def finite_difference_check(f: Callable[[Sequence[np.ndarray]], float], params: Sequence[np.ndarray],
                            analytic: Sequence[np.ndarray], eps: float = 1e-5,
                            probes: int | None = None, seed: int = 0) -> float:
    """Max relative error between ``analytic`` and central differences of ``f``.

    ``f`` takes the full parameter list. With ``probes`` set, that many
    coordinates are sampled uniformly (without replacement) across all
    parameters; otherwise every coordinate is checked.
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    if probes is not None and probes < len(coords):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=probes, replace=False)
        coords = [coords[k] for k in np.sort(pick)]
    worst = 0.0
    for i, j in coords:
        flat = params[i].reshape(-1)
        orig = flat[j]
        flat[j] = orig + eps
        up = f(params)
        flat[j] = orig - eps
        down = f(params)
        flat[j] = orig
        fd = (up - down) / (2 * eps)
        worst = max(worst, relative_error(float(np.asarray(analytic[i]).reshape(-1)[j]), fd))
    return worst
