"""Shared builders for randomized test problems."""

import numpy as np

from usvr.cccp import UniversumSet, UsvrHyperParams, build_augmented_problem
from usvr.data import Dataset
from usvr.kernel import KernelSpec
from usvr.svr import SvrHyperParams


def random_tiny_problem(rng: np.random.Generator, kernel: str | None = None):
    """A shifted-box dual with 1..6 training rows and 0..3 universum rows."""
    n = int(rng.integers(1, 7))
    m = int(rng.integers(0, 4))
    d = int(rng.integers(1, 4))
    kind = kernel or rng.choice(["linear", "rbf"])
    spec = KernelSpec.linear() if kind == "linear" else KernelSpec.rbf(float(rng.uniform(0.1, 2.0)))
    train = Dataset(rng.normal(size=(n, d)), rng.normal(scale=2.0, size=n))
    univ = UniversumSet(rng.normal(size=(m, d)), rng.normal(scale=2.0, size=m))
    C = float(rng.uniform(0.1, 10.0))
    params = UsvrHyperParams(
        SvrHyperParams(C, float(rng.uniform(0.0, 1.0)), spec),
        float(rng.uniform(0.0, 5.0)),
        float(rng.uniform(0.0, 2.0)),
    )
    side = rng.integers(-1, 2, size=m)  # -1 below, +1 above, 0 tie
    flags = (np.where(side < 0, params.cstar, 0.0), np.where(side > 0, params.cstar, 0.0))
    return build_augmented_problem(train, univ, params, flags)


def linear_toy(n: int, rng: np.random.Generator, noise: float = 0.1, d: int = 2):
    X = rng.uniform(-1, 1, size=(n, d))
    w = np.arange(1, d + 1, dtype=float)
    return Dataset(X, X @ w + 0.5 + noise * rng.normal(size=n))
