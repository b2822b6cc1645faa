"""Residual histograms and universum-contradiction measures."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .svr import Model

DEFAULT_BINS = 25
_PAD = 0.05


def residuals(model: Model, ds: Dataset) -> np.ndarray:
    """``y - f(x)`` for every sample of ``ds``."""
    return ds.targets - model.decision(ds.inputs)


@dataclass(frozen=True)
class ResidualHistogram:
    edges: np.ndarray
    train_counts: np.ndarray
    universum_counts: np.ndarray
    epsilon: float
    delta: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# epsilon={float(self.epsilon)!r}\n# delta={float(self.delta)!r}\n")
        buf.write("bin_left,bin_right,train_count,universum_count\n")
        for k in range(self.train_counts.size):
            buf.write(
                f"{float(self.edges[k])!r},{float(self.edges[k + 1])!r},"
                f"{int(self.train_counts[k])},{int(self.universum_counts[k])}\n"
            )
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "ResidualHistogram":
        meta = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = float(value)
            elif line and not line.startswith("bin_left"):
                rows.append([float(v) for v in line.split(",")])
        a = np.array(rows).reshape(-1, 4)
        edges = np.append(a[:, 0], a[-1, 1]) if len(a) else np.zeros(1)
        return cls(edges, a[:, 2].astype(int), a[:, 3].astype(int), meta["epsilon"], meta["delta"])


def histogram(
    train_res,
    univ_res=(),
    bins: int = DEFAULT_BINS,
    epsilon: float = 0.0,
    delta: float = 0.0,
) -> ResidualHistogram:
    """Equal-width bins over the union of both residual sets, padded 5% each side."""
    train_res = np.asarray(train_res, dtype=float).reshape(-1)
    univ_res = np.asarray(univ_res, dtype=float).reshape(-1)
    if train_res.size == 0:
        raise ValueError("no training residuals")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    both = np.concatenate([train_res, univ_res])
    lo, hi = float(both.min()), float(both.max())
    pad = _PAD * (hi - lo) if hi > lo else max(_PAD * abs(lo), 0.5)
    edges = np.linspace(lo - pad, hi + pad, bins + 1)
    tc, _ = np.histogram(train_res, edges)
    uc, _ = np.histogram(univ_res, edges)
    return ResidualHistogram(edges, tc, uc, float(epsilon), float(delta))


def fraction_within_delta(univ_res, delta: float) -> float:
    """Share of universum residuals with ``|r| <= Delta``."""
    r = np.asarray(univ_res, dtype=float).reshape(-1)
    if r.size == 0:
        raise ValueError("no universum residuals")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    return float(np.mean(np.abs(r) <= delta))


def data_piling_index(train_res, epsilon: float, tol: float | None = None) -> float:
    """Share of training residuals sitting on the tube boundary, ``||r| - eps| <= tol``.

    Not a quantity from the literature: a simple summary of how strongly
    residuals pile up at ``+-eps``. ``tol`` defaults to ``max(1e-6, 0.01 eps)``.
    """
    r = np.asarray(train_res, dtype=float).reshape(-1)
    if r.size == 0:
        return 0.0
    if tol is None:
        tol = max(1e-6, 0.01 * epsilon)
    return float(np.mean(np.abs(np.abs(r) - epsilon) <= tol))
