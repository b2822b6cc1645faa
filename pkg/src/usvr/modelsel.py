"""NRMS and two-step model selection (SVR first, then universum parameters)."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qp
from .cccp import UsvrHyperParams, fit_usvr
from .data import Dataset
from .kernel import KernelSpec, gram
from .svr import SvrHyperParams, fit_svr

log = logging.getLogger(__name__)

DEFAULT_EPSILONS = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)
DEFAULT_RATIOS = tuple(2.0**k for k in range(-4, 5))
DEFAULT_DELTAS = tuple(2.0**k for k in range(-4, 5))
DEFAULT_RBF_GAMMAS = tuple(2.0**k for k in range(-6, 1))


class MetricError(ValueError):
    pass


class SelectionError(RuntimeError):
    pass


def nrms(y_true, y_pred) -> float:
    """Root mean squared error over the population std of ``y_true``, in percent."""
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise MetricError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size < 2:
        raise MetricError("NRMS needs at least two samples")
    sd = float(np.std(y_true))
    if sd == 0:
        raise MetricError("NRMS is undefined for constant targets")
    return 100.0 * float(np.sqrt(np.mean((y_true - y_pred) ** 2))) / sd


def mse(y_true, y_pred) -> float:
    return float(np.mean((np.asarray(y_true, float) - np.asarray(y_pred, float)) ** 2))


def default_c(train: Dataset) -> float:
    return float(np.max(train.targets) - np.min(train.targets))


@dataclass(frozen=True)
class GridSpec:
    epsilons: Sequence[float] = DEFAULT_EPSILONS
    kernels: Sequence[KernelSpec] = (KernelSpec.linear(),)
    cstar_ratios: Sequence[float] = DEFAULT_RATIOS
    deltas: Sequence[float] = DEFAULT_DELTAS

    def __post_init__(self) -> None:
        for name in ("epsilons", "kernels", "cstar_ratios", "deltas"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"grid {name} is empty")
            object.__setattr__(self, name, values)
        for name in ("epsilons", "cstar_ratios", "deltas"):
            if min(getattr(self, name)) < 0:
                raise ValueError(f"grid {name} has negative entries")

    def to_dict(self) -> dict:
        return {
            "epsilons": list(self.epsilons),
            "kernels": [k.to_dict() for k in self.kernels],
            "cstar_ratios": list(self.cstar_ratios),
            "deltas": list(self.deltas),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GridSpec":
        base = cls()
        return cls(
            doc.get("epsilons", base.epsilons),
            tuple(KernelSpec.from_dict(k) for k in doc["kernels"]) if "kernels" in doc else base.kernels,
            doc.get("cstar_ratios", base.cstar_ratios),
            doc.get("deltas", base.deltas),
        )


@dataclass
class SelectionReport:
    chosen: object
    rows: list = field(default_factory=list)  # dicts: grid point + val_nrms (None if failed)
    ties: int = 0
    failures: int = 0

    @property
    def best_score(self) -> float:
        return min(r["val_nrms"] for r in self.rows if r["val_nrms"] is not None)

    def to_csv(self) -> str:
        buf = io.StringIO()
        keys = list(self.rows[0].keys()) if self.rows else ["val_nrms"]
        w = csv.DictWriter(buf, fieldnames=keys)
        w.writeheader()
        for r in self.rows:
            w.writerow(r)
        return buf.getvalue()

    def to_json(self) -> str:
        chosen = self.chosen.to_dict() if hasattr(self.chosen, "to_dict") else self.chosen
        return json.dumps({"chosen": chosen, "ties": self.ties, "failures": self.failures,
                           "table": self.rows}, indent=1)


def _argmin(scores: list) -> tuple[int, int]:
    valid = [(s, k) for k, s in enumerate(scores) if s is not None]
    if not valid:
        raise SelectionError("every grid point failed")
    best = min(s for s, _ in valid)
    winners = [k for s, k in valid if s == best]
    return winners[0], len(winners) - 1


def select_svr(
    train: Dataset, val: Dataset, grid: GridSpec, tol: float = qp.DEFAULT_TOL
) -> tuple[SvrHyperParams, SelectionReport]:
    """Fix ``C`` at the target range, pick ``epsilon`` and kernel by validation NRMS."""
    C = default_c(train)
    candidates, scores, rows = [], [], []
    failures = 0
    for kernel in grid.kernels:
        K = gram(kernel, train.inputs)
        for eps in grid.epsilons:
            params = SvrHyperParams(C, float(eps), kernel)
            try:
                model, _ = fit_svr(train, params, tol, K=K)
                score = nrms(val.targets, model.decision(val.inputs))
            except (qp.QpError, MetricError) as exc:
                log.warning("SVR fit failed at %s: %s", params, exc)
                score = None
                failures += 1
            candidates.append(params)
            scores.append(score)
            rows.append({"kernel": str(kernel), "C": C, "epsilon": float(eps), "val_nrms": score})
    k, ties = _argmin(scores)
    return candidates[k], SelectionReport(candidates[k], rows, ties, failures)


def select_usvr(
    train: Dataset,
    val: Dataset,
    universum: Dataset,
    fixed: SvrHyperParams,
    grid: GridSpec,
    tol: float = qp.DEFAULT_TOL,
    max_outer: int = 50,
) -> tuple[UsvrHyperParams, SelectionReport]:
    """Grid over ``C*/C`` and ``Delta`` with the SVR parameters held fixed."""
    X = np.vstack([train.inputs, universum.inputs]) if universum.n else train.inputs
    K = gram(fixed.kernel, X)
    # same call as a plain SVR fit, so the reduction point reproduces it exactly
    init = fit_svr(train, fixed, tol)
    candidates, scores, rows = [], [], []
    failures = 0
    for ratio in grid.cstar_ratios:
        for delta in grid.deltas:
            params = UsvrHyperParams(fixed, float(ratio) * fixed.C, float(delta))
            row = {"cstar_ratio": float(ratio), "cstar": params.cstar, "delta": float(delta),
                   "outer_iterations": None, "status": "failed", "max_increase": None}
            try:
                model, _, state = fit_usvr(train, universum, params, tol, max_outer, K=K, init=init)
                score = nrms(val.targets, model.decision(val.inputs))
                trace = np.asarray(state.objective_trace)
                row["outer_iterations"] = state.iteration
                row["status"] = state.status
                row["max_increase"] = float(np.max(np.diff(trace))) if trace.size > 1 else 0.0
            except (qp.QpError, MetricError) as exc:
                log.warning("U-SVR fit failed at %s: %s", params, exc)
                score = None
                failures += 1
            row["val_nrms"] = score
            candidates.append(params)
            scores.append(score)
            rows.append(row)
    k, ties = _argmin(scores)
    return candidates[k], SelectionReport(candidates[k], rows, ties, failures)
