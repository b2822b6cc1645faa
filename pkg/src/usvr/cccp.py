"""Universum SVR trained with the concave-convex procedure.

Universum samples carry a tent-shaped loss ``max(0, Delta - |r|)`` that
rewards keeping them at least ``Delta`` away from the regression function.
The loss is split into a convex part and a concave part ``-C* |r|``; each
outer iteration linearizes the concave part at the current model and solves
the resulting convex problem, which in dual form is the shifted-box QP of
:mod:`usvr.qp`:

* training rows: ``rho = eps``, box ``[0, C]``;
* universum rows: ``rho = -Delta``, box ``[0, C*]`` shifted down by ``C*``
  for ``alpha`` when ``y* > f(x*)`` and for ``beta`` when ``y* < f(x*)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import qp
from .data import Dataset
from .kernel import gram
from .svr import FitDiagnostics, Model, SvrHyperParams, epsilon_loss, fit_svr, model_from_dual

log = logging.getLogger(__name__)

DEFAULT_MAX_OUTER = 50
DESCENT_SLACK = 1e-9  # objective increase tolerated between accepted iterates
REFINE_STEPS = 3  # subproblem tolerance may shrink to tol * 10**-REFINE_STEPS


class UniversumSet(Dataset):
    """Labelled samples the regressor should *not* explain."""


@dataclass(frozen=True)
class UsvrHyperParams:
    base: SvrHyperParams
    cstar: float
    delta: float

    def __post_init__(self) -> None:
        if self.cstar < 0 or self.delta < 0:
            raise ValueError(f"need C* >= 0 and Delta >= 0, got {self.cstar}, {self.delta}")

    @property
    def C(self) -> float:
        return self.base.C

    @property
    def epsilon(self) -> float:
        return self.base.epsilon

    @property
    def kernel(self):
        return self.base.kernel

    def to_dict(self) -> dict:
        return {**self.base.to_dict(), "cstar": self.cstar, "delta": self.delta}


@dataclass
class CccpState:
    iteration: int = 0
    delta_flags: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gamma_flags: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_trace: list = field(default_factory=list)
    flag_changes: list = field(default_factory=list)
    solver_iterations: list = field(default_factory=list)
    status: str = "running"
    rejected: int = 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "iterations": self.iteration,
            "status": self.status,
            "rejected_steps": int(self.rejected),
            "objective": list(map(float, self.objective_trace)),
            "flag_changes": list(map(int, self.flag_changes)),
            "solver_iterations": list(map(int, self.solver_iterations)),
            "n_delta": int(np.count_nonzero(self.delta_flags)),
            "n_gamma": int(np.count_nonzero(self.gamma_flags)),
        }


def universum_loss(residual, delta: float):
    """``max(0, Delta - |r|)``; elementwise for arrays."""
    out = np.maximum(delta - np.abs(residual), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def cccp_update(model: Model, universum: Dataset, cstar: float) -> tuple[np.ndarray, np.ndarray]:
    """Box shifts for the next convex subproblem.

    ``delta = C*`` where the universum target lies below the model,
    ``gamma = C*`` where it lies above; exact ties get neither.
    """
    f = model.decision(universum.inputs)
    y = universum.targets
    delta_flags = np.where(y < f, cstar, 0.0)
    gamma_flags = np.where(y > f, cstar, 0.0)
    return delta_flags, gamma_flags


def _stack(train: Dataset, universum: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if universum.n and universum.d != train.d:
        raise ValueError(f"universum has {universum.d} features, training data {train.d}")
    if universum.n == 0:
        return train.inputs, train.targets
    return np.vstack([train.inputs, universum.inputs]), np.concatenate([train.targets, universum.targets])


def build_augmented_problem(
    train: Dataset,
    universum: Dataset,
    params: UsvrHyperParams,
    flags: tuple[np.ndarray, np.ndarray],
    *,
    K: np.ndarray | None = None,
) -> qp.QpProblem:
    """Stack training and universum rows into one shifted-box dual problem."""
    n, m = train.n, universum.n
    delta_flags, gamma_flags = (np.asarray(f, dtype=float).reshape(-1) for f in flags)
    if delta_flags.shape != (m,) or gamma_flags.shape != (m,):
        raise ValueError(f"flags must have length {m}")
    X, y = _stack(train, universum)
    if K is None:
        K = gram(params.kernel, X)
    return qp.QpProblem(
        K,
        y,
        np.concatenate([np.full(n, params.epsilon), np.full(m, -params.delta)]),
        np.concatenate([np.full(n, params.C), np.full(m, params.cstar)]),
        shift_alpha=np.concatenate([np.zeros(n), gamma_flags]),
        shift_beta=np.concatenate([np.zeros(n), delta_flags]),
    )


def usvr_objective(model: Model, train: Dataset, universum: Dataset, params: UsvrHyperParams) -> float:
    """Primal objective tracked by CCCP (the per-sample constant Delta is dropped).

    ``1/2 ||w||^2 + C sum eps-loss(train) + C* sum U_Delta(universum)``.
    """
    value = 0.5 * model.norm_sq()
    if train.n:
        r = train.targets - model.decision(train.inputs)
        value += params.C * float(np.sum(epsilon_loss(r, params.epsilon)))
    if universum.n and params.cstar > 0:
        r = universum.targets - model.decision(universum.inputs)
        value += params.cstar * float(np.sum(universum_loss(r, params.delta)))
    return value


def _signature(delta_flags: np.ndarray, gamma_flags: np.ndarray) -> bytes:
    return (np.sign(gamma_flags) - np.sign(delta_flags)).astype(np.int8).tobytes()


def _solve(problem: qp.QpProblem, tol: float, alpha, beta, refined: bool) -> qp.DualSolution:
    # a refined solve that stalls still yields an iterate at least as good as the caller's tolerance
    try:
        return qp.solve(problem, tol, alpha0=alpha, beta0=beta, check=False)
    except qp.NonConvergenceError as exc:
        if not refined:
            raise
        return exc.best


def fit_usvr(
    train: Dataset,
    universum: Dataset,
    params: UsvrHyperParams,
    tol: float = qp.DEFAULT_TOL,
    max_outer: int = DEFAULT_MAX_OUTER,
    *,
    K: np.ndarray | None = None,
    init: tuple[Model, FitDiagnostics] | None = None,
) -> tuple[Model, FitDiagnostics, CccpState]:
    """Fit a universum SVR by CCCP, starting from the plain SVR solution.

    Iterates until the box shifts repeat (a fixed point), a previously seen
    shift pattern recurs even with subproblems solved to ``tol * 10**-REFINE_STEPS``
    (cycle), or ``max_outer`` subproblems were solved;
    the latter two return the lowest-objective iterate. A step that fails to
    lower the objective even after tightening the subproblem tolerance is
    rejected and the run ends as "stalled" at the previous iterate. ``K`` may supply the
    Gram matrix of the stacked ``[train; universum]`` inputs and ``init`` a
    plain SVR fit on ``train`` with ``params.base``.
    """
    if max_outer < 1:
        raise ValueError("max_outer must be >= 1")
    n, m = train.n, universum.n
    X, _ = _stack(train, universum)
    if K is None:
        K = gram(params.kernel, X)
    qp.QpProblem(K, np.zeros(n + m), np.zeros(n + m), np.zeros(n + m)).check_gram()

    # the plain fit, exactly as fit_svr computes it, is the starting point
    model, diag0 = init if init is not None else fit_svr(train, params.base, tol)
    alpha = np.concatenate([diag0.solver["alpha"], np.zeros(m)])
    beta = np.concatenate([diag0.solver["beta"], np.zeros(m)])

    state = CccpState()
    J = usvr_objective(model, train, universum, params)
    state.objective_trace.append(J)
    best = (J, model, alpha, beta)
    seen: set[bytes] = set()
    prev = None
    level = 0  # refinement level of the subproblem tolerance
    state.status = "max_outer"
    if m == 0 or params.cstar == 0 or params.delta == 0:
        # the universum term vanishes identically: the SVR solution is optimal
        state.delta_flags, state.gamma_flags = cccp_update(model, universum, params.cstar)
        state.status = "converged"
        max_outer = 0
    for _ in range(max_outer):
        delta_flags, gamma_flags = cccp_update(model, universum, params.cstar)
        sig = _signature(delta_flags, gamma_flags)
        if prev is not None:
            state.flag_changes.append(int(np.count_nonzero(np.frombuffer(sig, np.int8) != np.frombuffer(prev, np.int8))))
            if sig == prev:
                state.status = "converged"
                break
            if sig in seen:
                # With exact solves a recurring pattern means a true cycle;
                # with inexact ones it is usually noise near |r| = 0, so
                # sharpen the solves before concluding anything.
                if level == REFINE_STEPS:
                    state.status = "cycle"
                    break
                level += 1
                seen.clear()
        seen.add(sig)
        prev = sig
        state.delta_flags, state.gamma_flags = delta_flags, gamma_flags

        problem = build_augmented_problem(train, universum, params, (delta_flags, gamma_flags), K=K)
        J_prev = state.objective_trace[-1]
        step = level
        sol = _solve(problem, tol * 10.0**-step, alpha, beta, step > 0)
        cand = model_from_dual(X, params.kernel, sol)
        J = usvr_objective(cand, train, universum, params)
        # An inexact subproblem solve can lose the descent property; tighten
        # the tolerance from the current point before giving up on the step.
        while J > J_prev + DESCENT_SLACK and step < REFINE_STEPS:
            step += 1
            sol = _solve(problem, tol * 10.0**-step, sol.alpha, sol.beta, True)
            cand = model_from_dual(X, params.kernel, sol)
            J = usvr_objective(cand, train, universum, params)
        state.solver_iterations.append(sol.iterations)
        if J > J_prev + DESCENT_SLACK:
            state.rejected += 1
            state.status = "stalled"
            log.info("CCCP step rejected: objective %.10g after %.10g", J, J_prev)
            break
        alpha, beta, model = sol.alpha, sol.beta, cand
        state.iteration += 1
        state.objective_trace.append(J)
        if J < best[0]:
            best = (J, model, alpha, beta)

    if state.status not in ("converged", "stalled"):
        log.info("CCCP stopped (%s) after %d iterations", state.status, state.iteration)
        J, model, alpha, beta = best

    res_t = train.targets - model.decision(train.inputs)
    res_u = universum.targets - model.decision(universum.inputs) if m else np.zeros(0)
    model = Model(
        model.kernel, model.support, model.coef, model.bias,
        {"method": "usvr", "params": params.to_dict(), "cccp": state.to_dict()},
    )
    diag = FitDiagnostics(
        epsilon_loss(res_t, params.epsilon),
        universum_loss(res_u, params.delta) if m else np.zeros(0),
        solver={"alpha": alpha, "beta": beta, "objective": J},
    )
    return model, diag, state
