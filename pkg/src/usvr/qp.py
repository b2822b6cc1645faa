"""Shifted-box SVR dual and its solvers.

The problem, over paired multipliers ``alpha`` and ``beta`` with
``theta = alpha - beta``::

    min  1/2 theta' K theta + sum rho_i (alpha_i + beta_i) - sum y_i theta_i
    s.t. sum alpha_i = sum beta_i
         -ga_i <= alpha_i <= C_i - ga_i
         -gb_i <= beta_i  <= C_i - gb_i

The standard epsilon-SVR dual is the case ``rho = eps``, zero shifts.

:func:`solve` is an SMO solver (two-variable updates, second-order working
set selection) compiled with numba. :func:`reference_solve` is a slow,
independent accelerated projected-gradient method kept as a test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 10**7
_TAU = 1e-12


class QpError(RuntimeError):
    pass


class IllPosedProblemError(QpError):
    pass


class InconsistentSolutionError(QpError):
    pass


class NonConvergenceError(QpError):
    def __init__(self, message: str, best: "DualSolution"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class QpProblem:
    gram: np.ndarray
    y: np.ndarray
    rho: np.ndarray
    cost: np.ndarray
    shift_alpha: np.ndarray = None
    shift_beta: np.ndarray = None

    def __post_init__(self) -> None:
        K = np.asarray(self.gram, dtype=float)
        N = K.shape[0]
        if K.shape != (N, N):
            raise IllPosedProblemError(f"gram must be square, got {K.shape}")
        vecs = {}
        for name in ("y", "rho", "cost", "shift_alpha", "shift_beta"):
            v = getattr(self, name)
            v = np.zeros(N) if v is None else np.asarray(v, dtype=float).reshape(-1)
            if v.shape != (N,):
                raise IllPosedProblemError(f"{name} has length {v.size}, expected {N}")
            vecs[name] = v
        if np.any(vecs["cost"] < 0):
            raise IllPosedProblemError("negative cost")
        ga, gb, c = vecs["shift_alpha"], vecs["shift_beta"], vecs["cost"]
        if np.any(ga < 0) or np.any(gb < 0) or np.any(ga > c) or np.any(gb > c):
            raise IllPosedProblemError("shifts must lie in [0, C_i]")
        if np.any((ga > 0) & (gb > 0)):
            raise IllPosedProblemError("alpha and beta shifts are mutually exclusive")
        object.__setattr__(self, "gram", K)
        for name, v in vecs.items():
            object.__setattr__(self, name, v)

    @property
    def size(self) -> int:
        return self.gram.shape[0]

    @property
    def alpha_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return -self.shift_alpha, self.cost - self.shift_alpha

    @property
    def beta_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return -self.shift_beta, self.cost - self.shift_beta

    def objective(self, alpha, beta) -> float:
        theta = alpha - beta
        return float(
            0.5 * theta @ self.gram @ theta
            + self.rho @ (alpha + beta)
            - self.y @ theta
        )

    def check_gram(self, atol: float = 1e-8) -> None:
        """Raise :class:`IllPosedProblemError` unless the Gram matrix is symmetric PSD."""
        K = self.gram
        scale = max(1.0, float(np.max(np.abs(K)))) if K.size else 1.0
        if not np.allclose(K, K.T, rtol=0.0, atol=atol * scale):
            raise IllPosedProblemError("gram matrix is not symmetric")
        if K.size == 0:
            return
        try:
            np.linalg.cholesky(K + atol * scale * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            lmin = float(np.linalg.eigvalsh(K)[0])
            if lmin < -atol * scale:
                raise IllPosedProblemError(
                    f"gram matrix is not PSD (smallest eigenvalue {lmin:.3g})"
                ) from None


@dataclass
class DualSolution:
    alpha: np.ndarray
    beta: np.ndarray
    bias: float
    objective: float
    kkt_violation: float
    iterations: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def theta(self) -> np.ndarray:
        return self.alpha - self.beta


# -- KKT bookkeeping ----------------------------------------------------------
#
# With F = K theta, each alpha_i "votes" for the bias v = y_i - F_i - rho_i and
# each beta_i for v = y_i - F_i + rho_i. Variables that can still move in the
# direction that raises theta (alpha below upper, beta above lower) need
# b >= v; variables that can move the other way need b <= v. Optimality is
# max(up votes) <= min(low votes).


def _votes(problem: QpProblem, alpha, beta, F=None):
    if F is None:
        F = problem.gram @ (alpha - beta)
    la, ua = problem.alpha_bounds
    lb, ub = problem.beta_bounds
    base = problem.y - F
    va = base - problem.rho
    vb = base + problem.rho
    up = np.concatenate([alpha < ua, beta > lb])
    low = np.concatenate([alpha > la, beta < ub])
    votes = np.concatenate([va, vb])
    free = up & low
    return votes, up, low, free


def _gap(votes, up, low) -> tuple[float, float]:
    hi = float(np.max(votes[up])) if up.any() else -np.inf
    lo = float(np.min(votes[low])) if low.any() else np.inf
    return hi, lo


def kkt_violation(problem: QpProblem, alpha, beta=None) -> float:
    """Largest pairwise KKT violation; 0 exactly at an optimum.

    Accepts a :class:`DualSolution` in place of ``alpha``.
    """
    if isinstance(alpha, DualSolution):
        alpha, beta = alpha.alpha, alpha.beta
    votes, up, low, _ = _votes(problem, np.asarray(alpha, float), np.asarray(beta, float))
    hi, lo = _gap(votes, up, low)
    if not (np.isfinite(hi) and np.isfinite(lo)):
        return 0.0
    return max(0.0, hi - lo)


def compute_bias(problem: QpProblem, alpha, beta, tol: float = DEFAULT_TOL) -> float:
    """Bias from the KKT conditions.

    Averages the bias implied by every free variable; with none free, returns
    the midpoint of the feasible bias interval (a one-sided interval uses its
    finite end, an unconstrained one gives 0).
    """
    votes, up, low, free = _votes(problem, np.asarray(alpha, float), np.asarray(beta, float))
    if free.any():
        return float(np.mean(votes[free]))
    hi, lo = _gap(votes, up, low)
    if np.isfinite(hi) and np.isfinite(lo):
        if hi - lo > tol:
            raise InconsistentSolutionError(
                f"empty bias interval [{hi:.6g}, {lo:.6g}] (gap {hi - lo:.3g} > tol {tol:g})"
            )
        return 0.5 * (hi + lo)
    if np.isfinite(hi):
        return hi
    if np.isfinite(lo):
        return lo
    return 0.0


# -- SMO ----------------------------------------------------------------------


@numba.njit(cache=True)
def _smo(K, y, rho, la, ua, lb, ub, alpha, beta, F, tol, max_iter):  # pragma: no cover
    N = y.shape[0]
    it = 0
    gap = np.inf
    while it < max_iter:
        # i: largest "up" vote. Indices < N are alphas, >= N betas.
        i = -1
        vi = -np.inf
        for t in range(N):
            if alpha[t] < ua[t]:
                v = y[t] - F[t] - rho[t]
                if v > vi:
                    vi = v
                    i = t
        for t in range(N):
            if beta[t] > lb[t]:
                v = y[t] - F[t] + rho[t]
                if v > vi:
                    vi = v
                    i = N + t
        if i < 0:
            gap = 0.0
            break
        si = i if i < N else i - N
        # j: second-order choice among "low" variables with a smaller vote.
        j = -1
        vmin = np.inf
        best = np.inf
        for t in range(2 * N):
            s = t if t < N else t - N
            if t < N:
                if not alpha[s] > la[s]:
                    continue
                v = y[s] - F[s] - rho[s]
            else:
                if not beta[s] < ub[s]:
                    continue
                v = y[s] - F[s] + rho[s]
            if v < vmin:
                vmin = v
            d = vi - v
            if d > 0.0:
                eta = K[si, si] + K[s, s] - 2.0 * K[si, s]
                if eta <= 0.0:
                    eta = _TAU
                score = -d * d / eta
                if score < best:
                    best = score
                    j = t
        gap = vi - vmin
        if gap <= tol or j < 0:
            break
        sj = j if j < N else j - N
        vj = y[sj] - F[sj] + (-rho[sj] if j < N else rho[sj])
        eta = K[si, si] + K[sj, sj] - 2.0 * K[si, sj]
        if eta <= 0.0:
            eta = _TAU
        step = (vi - vj) / eta
        # Moving by `step` raises theta[si] and lowers theta[sj].
        if i < N:
            lim_i = ua[si] - alpha[si]
        else:
            lim_i = beta[si] - lb[si]
        if j < N:
            lim_j = alpha[sj] - la[sj]
        else:
            lim_j = ub[sj] - beta[sj]
        clip_i = step >= lim_i
        clip_j = step >= lim_j
        if clip_i or clip_j:
            step = min(lim_i, lim_j)
        if i < N:
            alpha[si] = ua[si] if clip_i and lim_i <= lim_j else alpha[si] + step
        else:
            beta[si] = lb[si] if clip_i and lim_i <= lim_j else beta[si] - step
        if j < N:
            alpha[sj] = la[sj] if clip_j and lim_j <= lim_i else alpha[sj] - step
        else:
            beta[sj] = ub[sj] if clip_j and lim_j <= lim_i else beta[sj] + step
        if si != sj:
            for t in range(N):
                F[t] += step * (K[t, si] - K[t, sj])
        it += 1
    return it, gap


def feasible_start(problem: QpProblem, alpha=None, beta=None) -> tuple[np.ndarray, np.ndarray]:
    """Clip a starting point into the box and restore ``sum alpha = sum beta``.

    The imbalance is removed greedily in index order, which keeps the result
    deterministic and close to the input.
    """
    la, ua = problem.alpha_bounds
    lb, ub = problem.beta_bounds
    N = problem.size
    a = np.clip(np.zeros(N) if alpha is None else np.asarray(alpha, float), la, ua)
    b = np.clip(np.zeros(N) if beta is None else np.asarray(beta, float), lb, ub)
    excess = a.sum() - b.sum()
    for k in range(N):
        if excess == 0.0:
            break
        if excess > 0:
            m = min(excess, a[k] - la[k])
            a[k] -= m
            excess -= m
            m = min(excess, ub[k] - b[k])
            b[k] += m
            excess -= m
        else:
            m = min(-excess, ua[k] - a[k])
            a[k] += m
            excess += m
            m = min(-excess, b[k] - lb[k])
            b[k] -= m
            excess += m
    return a, b


def solve(
    problem: QpProblem,
    tol: float = DEFAULT_TOL,
    *,
    alpha0=None,
    beta0=None,
    max_iter: int = DEFAULT_MAX_ITER,
    check: bool = True,
) -> DualSolution:
    """Solve the shifted-box dual to KKT violation ``<= tol``.

    ``alpha0``/``beta0`` warm-start the solver; they are clipped into the box
    and made to satisfy the equality constraint first. ``check=False`` skips
    the Gram PSD test (callers that already checked the same matrix).
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if check:
        problem.check_gram()
    alpha, beta = feasible_start(problem, alpha0, beta0)
    la, ua = problem.alpha_bounds
    lb, ub = problem.beta_bounds
    iters = 0
    # The running F = K theta drifts over long runs, so the violation is
    # recomputed from scratch and the loop restarted if it disagrees.
    for _ in range(3):
        F = problem.gram @ (alpha - beta)
        n, _gap = _smo(
            problem.gram, problem.y, problem.rho, la, ua, lb, ub,
            alpha, beta, F, float(tol), int(max_iter - iters),
        )
        iters += int(n)
        viol = kkt_violation(problem, alpha, beta)
        if viol <= tol or iters >= max_iter:
            break
    sol = DualSolution(
        alpha=alpha,
        beta=beta,
        bias=0.0,
        objective=problem.objective(alpha, beta),
        kkt_violation=viol,
        iterations=iters,
        stats={"solver": "smo", "tol": tol},
    )
    if viol > tol:
        sol.bias = compute_bias(problem, alpha, beta, tol=np.inf)
        raise NonConvergenceError(
            f"SMO stopped after {iters} iterations with KKT violation {viol:.3g} > {tol:g}", sol
        )
    sol.bias = compute_bias(problem, alpha, beta, tol=tol)
    return sol


# -- reference oracle ---------------------------------------------------------


def _project(v: np.ndarray, s: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{lo <= z <= hi, s'z = 0}`` with ``s`` in {+1, -1}.

    ``z(lam) = clip(v - lam*s)``; ``g(lam) = s'z(lam)`` is non-increasing and
    piecewise linear, so the root is found exactly between breakpoints.
    """
    bps = np.unique(np.concatenate([s * (v - lo), s * (v - hi)]))
    vals = np.clip(v[None, :] - bps[:, None] * s[None, :], lo, hi) @ s
    if vals[0] < 0:  # g is below zero everywhere
        return np.clip(v - bps[0] * s, lo, hi)
    if vals[-1] > 0:
        return np.clip(v - bps[-1] * s, lo, hi)
    k = int(np.searchsorted(-vals, 0.0))  # first breakpoint with g <= 0
    if vals[k] == 0 or k == 0:
        lam = bps[k]
    else:
        l0, l1, g0, g1 = bps[k - 1], bps[k], vals[k - 1], vals[k]
        lam = l0 + (l1 - l0) * g0 / (g0 - g1)
    return np.clip(v - lam * s, lo, hi)


def reference_solve(problem: QpProblem, iterations: int = 20000) -> DualSolution:
    """Accelerated projected gradient with adaptive restart, for small problems.

    Deterministic, slow, and independent of the SMO path; used as a test oracle.
    """
    problem.check_gram()
    N = problem.size
    K = problem.gram
    la, ua = problem.alpha_bounds
    lb, ub = problem.beta_bounds
    lo = np.concatenate([la, lb])
    hi = np.concatenate([ua, ub])
    s = np.concatenate([np.ones(N), -np.ones(N)])
    lin = np.concatenate([problem.rho - problem.y, problem.rho + problem.y])

    def grad(z):
        F = K @ (z[:N] - z[N:])
        return np.concatenate([F, -F]) + lin

    L = 2.0 * float(np.linalg.eigvalsh(K)[-1]) if N else 0.0
    step = 1.0 / L if L > 0 else 1.0
    z = _project(np.zeros(2 * N), s, lo, hi)
    w = z.copy()
    t = 1.0
    for k in range(iterations):
        z_new = _project(w - step * grad(w), s, lo, hi)
        if np.array_equal(z_new, z) and np.array_equal(w, z):
            break
        if (w - z_new) @ (z_new - z) > 0:  # momentum points uphill: restart
            t = 1.0
            w = z.copy()
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        w = z_new + ((t - 1.0) / t_new) * (z_new - z)
        z, t = z_new, t_new
    alpha, beta = z[:N].copy(), z[N:].copy()
    return DualSolution(
        alpha=alpha,
        beta=beta,
        bias=compute_bias(problem, alpha, beta, tol=np.inf),
        objective=problem.objective(alpha, beta),
        kkt_violation=kkt_violation(problem, alpha, beta),
        iterations=k + 1 if iterations else 0,
        stats={"solver": "reference"},
    )
