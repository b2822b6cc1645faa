"""Synthetic universum generators.

All draws are with replacement. Each generator uses independent child
streams for row selection, feature permutations and target resampling, so
the first ``k`` rows of a size-``m`` draw equal a size-``k`` draw with the
same seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cccp import UniversumSet
from .data import HYPERCUBE_DIM, Dataset, hypercube_signs


class UniversumError(ValueError):
    pass


@dataclass(frozen=True)
class YStats:
    mean: float
    std: float

    @classmethod
    def of(cls, train: Dataset) -> "YStats":
        # population std (ddof=0)
        return cls(float(np.mean(train.targets)), float(np.std(train.targets)))


def _streams(seed, k: int) -> list[np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(c) for c in ss.spawn(k)]


def _permute_rows(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.array([row[rng.permutation(row.size)] for row in X]).reshape(X.shape)


def strategy1_swap(train: Dataset, m: int, seed=None) -> UniversumSet:
    """Swap targets between an above-mean and a below-mean training sample.

    Each draw picks ``(x1, y1)`` with ``y1 >= mean`` and ``(x2, y2)`` with
    ``y2 <= mean`` and emits ``(x1, y2)`` then ``(x2, y1)``; for odd ``m``
    the final pair contributes only ``(x1, y2)``.
    """
    mu = float(np.mean(train.targets))
    hi = np.flatnonzero(train.targets >= mu)
    lo = np.flatnonzero(train.targets <= mu)
    if hi.size == 0 or lo.size == 0:
        raise UniversumError("strategy 1 needs samples on both sides of the target mean")
    rng_hi, rng_lo = _streams(seed, 2)
    pairs = (m + 1) // 2
    i1 = hi[rng_hi.integers(0, hi.size, size=pairs)]
    i2 = lo[rng_lo.integers(0, lo.size, size=pairs)]
    rows = np.empty(2 * pairs, dtype=int)
    ys = np.empty(2 * pairs, dtype=int)
    rows[0::2], ys[0::2] = i1, i2
    rows[1::2], ys[1::2] = i2, i1
    return UniversumSet(train.inputs[rows[:m]], train.targets[ys[:m]])


def strategy2_resample_y(train: Dataset, m: int, seed=None) -> UniversumSet:
    """Random training inputs with targets redrawn from N(mean_y, std_y)."""
    if train.n < 2:
        raise UniversumError("strategy 2 needs at least two training samples")
    st = YStats.of(train)
    rng_rows, rng_y = _streams(seed, 2)
    rows = rng_rows.integers(0, train.n, size=m)
    return UniversumSet(train.inputs[rows], rng_y.normal(st.mean, st.std, size=m))


def strategy3_permute_x(train: Dataset, m: int, seed=None) -> UniversumSet:
    """Random training samples with their feature coordinates shuffled."""
    if train.d < 2:
        raise UniversumError("strategy 3 needs at least two features")
    rng_rows, rng_perm = _streams(seed, 2)
    rows = rng_rows.integers(0, train.n, size=m)
    return UniversumSet(_permute_rows(train.inputs[rows], rng_perm), train.targets[rows])


def strategy4_both(train: Dataset, m: int, seed=None) -> UniversumSet:
    """Strategies 2 and 3 combined: shuffled features and redrawn targets."""
    if train.n < 2:
        raise UniversumError("strategy 4 needs at least two training samples")
    st = YStats.of(train)
    rng_rows, rng_perm, rng_y = _streams(seed, 3)
    rows = rng_rows.integers(0, train.n, size=m)
    X = _permute_rows(train.inputs[rows], rng_perm)
    return UniversumSet(X, rng_y.normal(st.mean, st.std, size=m))


def hypercube_universum1(m: int, seed=None) -> UniversumSet:
    """Hypercube inputs with the sign-flipped (noise-free) target."""
    if m < 1:
        raise UniversumError("m must be >= 1")
    X = np.random.default_rng(seed).random((m, HYPERCUBE_DIM))
    return UniversumSet(X, -(X @ hypercube_signs()))


STRATEGIES = {
    "1": strategy1_swap,
    "2": strategy2_resample_y,
    "3": strategy3_permute_x,
    "4": strategy4_both,
}


def generate(strategy: str, m: int, seed=None, train: Dataset | None = None) -> UniversumSet:
    """Dispatch by name: ``"1"``..``"4"`` or ``"hypercube1"``."""
    strategy = str(strategy)
    if strategy == "hypercube1":
        return hypercube_universum1(m, seed)
    if strategy not in STRATEGIES:
        raise UniversumError(f"unknown strategy {strategy!r}")
    if train is None:
        raise UniversumError(f"strategy {strategy} needs training data")
    return STRATEGIES[strategy](train, m, seed)
