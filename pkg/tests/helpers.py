"""Shared oracles and fixture builders for the test suite."""

import numpy as np

from memocl.model import Gradient, ModelParams


def random_fixture(rng: np.random.Generator, V: int, d: int, C: int, N: int, max_len: int = 5):
    params = ModelParams(
        rng.normal(0.0, 1.0, size=(V, d)),
        rng.normal(0.0, 1.0, size=(d, C)),
        rng.normal(0.0, 0.5, size=C),
    )
    batch = [list(rng.integers(0, V, size=int(rng.integers(1, max_len + 1)))) for _ in range(N)]
    return params, batch


def finite_difference_grad(loss_fn, params: ModelParams, step: float = 1e-5) -> Gradient:
    """Central differences, one coordinate at a time."""
    arrays = [a.copy() for a in params.arrays()]
    out = []
    for k, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            up = loss_fn(ModelParams(*arrays))
            arr[idx] = orig - step
            down = loss_fn(ModelParams(*arrays))
            arr[idx] = orig
            g[idx] = (up - down) / (2 * step)
        out.append(g)
    return Gradient(*out)


def max_rel_error(a: Gradient, b: Gradient) -> float:
    worst = 0.0
    for x, y in zip(a.arrays(), b.arrays()):
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), 1e-8)
        worst = max(worst, float(np.max(np.abs(x - y) / denom)))
    return worst
