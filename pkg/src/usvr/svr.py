"""Standard epsilon-insensitive support vector regression."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import qp
from .data import Dataset
from .kernel import KernelSpec, gram

SV_THRESHOLD = 1e-12


@dataclass(frozen=True)
class SvrHyperParams:
    C: float
    epsilon: float
    kernel: KernelSpec = field(default_factory=KernelSpec.linear)

    def __post_init__(self) -> None:
        if self.C < 0 or self.epsilon < 0:
            raise ValueError(f"need C >= 0 and epsilon >= 0, got C={self.C}, epsilon={self.epsilon}")

    def to_dict(self) -> dict:
        return {"C": self.C, "epsilon": self.epsilon, "kernel": self.kernel.to_dict()}


@dataclass(frozen=True)
class Model:
    """``f(x) = sum_i coef_i K(support_i, x) + bias``."""

    kernel: KernelSpec
    support: np.ndarray
    coef: np.ndarray
    bias: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_features(self) -> int:
        return self.support.shape[1]

    @property
    def n_support(self) -> int:
        return self.coef.shape[0]

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} features, got {X.shape[1]}")
        if self.n_support == 0:
            return np.full(X.shape[0], self.bias)
        return gram(self.kernel, X, self.support) @ self.coef + self.bias

    def norm_sq(self) -> float:
        """``||w||^2 = coef' K coef`` over the support rows."""
        if self.n_support == 0:
            return 0.0
        return float(self.coef @ gram(self.kernel, self.support) @ self.coef)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "support": self.support.tolist(),
            "coef": self.coef.tolist(),
            "bias": self.bias,
            "n_features": self.n_features,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Model":
        d = int(doc["n_features"])
        support = np.asarray(doc["support"], dtype=float).reshape(-1, d)
        return cls(
            KernelSpec.from_dict(doc["kernel"]),
            support,
            np.asarray(doc["coef"], dtype=float).reshape(-1),
            float(doc["bias"]),
            dict(doc.get("meta", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict(model: Model, X) -> np.ndarray:
    return model.decision(X)


@dataclass
class FitDiagnostics:
    """Slacks at the fitted model.

    ``train_slacks`` are the epsilon-insensitive losses xi_i + xi*_i;
    ``universum_slacks`` the Delta-zone losses (empty for plain SVR).
    """

    train_slacks: np.ndarray
    universum_slacks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    solver: dict = field(default_factory=dict)

    @property
    def empirical_risk(self) -> float:
        return float(np.sum(self.train_slacks))


def epsilon_loss(residual, epsilon: float):
    """``max(|r| - epsilon, 0)``; elementwise for arrays."""
    out = np.maximum(np.abs(residual) - epsilon, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def model_from_dual(
    X: np.ndarray, kernel: KernelSpec, sol: qp.DualSolution, meta: dict | None = None
) -> Model:
    theta = sol.theta
    keep = np.abs(theta) > SV_THRESHOLD
    return Model(kernel, np.array(X[keep]), theta[keep].copy(), float(sol.bias), dict(meta or {}))


def svr_problem(train: Dataset, params: SvrHyperParams, K: np.ndarray | None = None) -> qp.QpProblem:
    n = train.n
    if K is None:
        K = gram(params.kernel, train.inputs)
    return qp.QpProblem(K, train.targets, np.full(n, params.epsilon), np.full(n, params.C))


def fit_svr(
    train: Dataset,
    params: SvrHyperParams,
    tol: float = qp.DEFAULT_TOL,
    *,
    K: np.ndarray | None = None,
) -> tuple[Model, FitDiagnostics]:
    """Fit through the dual. ``K`` may pass a precomputed training Gram matrix."""
    if train.n < 1:
        raise ValueError("cannot fit on an empty dataset")
    problem = svr_problem(train, params, K)
    sol = qp.solve(problem, tol)
    model = model_from_dual(
        train.inputs,
        params.kernel,
        sol,
        {"method": "svr", "params": params.to_dict(), "iterations": sol.iterations,
         "kkt_violation": sol.kkt_violation},
    )
    res = train.targets - model.decision(train.inputs)
    diag = FitDiagnostics(
        epsilon_loss(res, params.epsilon),
        solver={"iterations": sol.iterations, "kkt_violation": sol.kkt_violation,
                "objective": sol.objective, "alpha": sol.alpha, "beta": sol.beta},
    )
    return model, diag


def svr_primal_objective(model: Model, train: Dataset, params: SvrHyperParams) -> float:
    res = train.targets - model.decision(train.inputs)
    return 0.5 * model.norm_sq() + params.C * float(np.sum(epsilon_loss(res, params.epsilon)))
