"""Repeated-trial comparisons of ridge, SVR and universum SVR.

Each trial draws its own data and universum from an independent RNG
substream keyed by the trial index, runs two-step model selection, and
scores the selected models. Every method in a trial sees the same data
(paired design). Synthetic test NRMS is measured against the noise-free
target; real-data NRMS/MSE against the observed targets.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diagnostics, qp
from .cccp import UsvrHyperParams, fit_usvr
from .data import (
    Dataset,
    DataError,
    HypercubeConfig,
    SplitSpec,
    hypercube_generate,
    load_cpu_performance,
    load_csv,
    log_transform_targets,
    scale_inputs,
    split,
    substream,
)
from .kernel import KernelSpec
from .modelsel import (
    DEFAULT_DELTAS,
    DEFAULT_EPSILONS,
    DEFAULT_RBF_GAMMAS,
    GridSpec,
    mse,
    nrms,
    select_svr,
    select_usvr,
)
from .svr import fit_svr
from .universum import generate as generate_universum

log = logging.getLogger(__name__)

RIDGE_LAMBDAS = tuple(2.0**k for k in range(-8, 9))
UNIVERSUM_KINDS = {"type1": "hypercube1", "type2": "2"}
FAILURE_LIMIT = 0.2

# substream slots inside one trial
_TRAIN, _VAL, _TEST, _SPLIT = 0, 1, 2, 3
_UNIV = {"type1": 10, "type2": 11, "s1": 12, "s2": 13, "s3": 14, "s4": 15}


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    n_train: int = 30
    sigma: float = 0.5
    universum: tuple = ("type1",)
    m: int = 300
    trials: int = 25
    n_test: int = 5000
    seed: int = 0
    grid: GridSpec = field(default_factory=GridSpec)
    n_val: int | None = None
    tol: float = qp.DEFAULT_TOL
    max_outer: int = 50
    ridge: bool = True
    bins: int = diagnostics.DEFAULT_BINS

    def __post_init__(self) -> None:
        if isinstance(self.universum, str):
            object.__setattr__(self, "universum", (self.universum,))
        object.__setattr__(self, "universum", tuple(self.universum))
        if self.trials < 1 or self.n_train < 1 or self.m < 1 or self.n_test < 1:
            raise ValueError("trials and all sample counts must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def validation_size(self) -> int:
        return self.n_train if self.n_val is None else self.n_val

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["grid"] = self.grid.to_dict()
        doc["universum"] = list(self.universum)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "grid" in doc:
            doc["grid"] = GridSpec.from_dict(doc["grid"])
        if "universum" in doc:
            u = doc["universum"]
            doc["universum"] = (u,) if isinstance(u, str) else tuple(u)
        return cls(**doc)


@dataclass
class ExperimentReport:
    config: dict
    rows: list = field(default_factory=list)  # one dict per trial, raw
    methods: list = field(default_factory=list)
    histograms: dict = field(default_factory=dict)  # (method) -> ResidualHistogram, representative trial
    selection: list = field(default_factory=list)  # per trial: U-SVR grid rows (for convergence stats)

    @property
    def ok_rows(self) -> list:
        return [r for r in self.rows if r.get("status") == "ok"]

    def values(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.ok_rows], dtype=float)

    def summary(self) -> dict:
        """Means and sample standard deviations recomputed from the raw rows."""
        out: dict = {}
        metrics = ("train_nrms", "test_nrms", "train_mse", "test_mse")
        for method in self.methods:
            stats = {}
            for metric in metrics:
                key = f"{method}_{metric}"
                if self.ok_rows and key in self.ok_rows[0]:
                    v = self.values(key)
                    stats[metric] = {
                        "mean": float(np.mean(v)),
                        "std": float(np.std(v, ddof=1)) if v.size > 1 else 0.0,
                    }
            out[method] = stats
        return out

    def convergence(self) -> dict:
        outer, statuses, worst = [], {}, -math.inf
        for grid_rows in self.selection:
            for r in grid_rows:
                statuses[r["status"]] = statuses.get(r["status"], 0) + 1
                if r["outer_iterations"] is not None:
                    outer.append(r["outer_iterations"])
                    worst = max(worst, r["max_increase"])
        return {
            "fits": len(outer),
            "median_outer_iterations": float(np.median(outer)) if outer else None,
            "max_outer_iterations": int(max(outer)) if outer else None,
            "status_counts": statuses,
            "max_objective_increase": worst if outer else None,
        }

    def to_csv(self) -> str:
        keys: list = []
        for r in self.rows:
            keys += [k for k in r if k not in keys]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys)
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "methods": self.methods,
                "trials": len(self.rows),
                "failed_trials": len(self.rows) - len(self.ok_rows),
                "summary": self.summary(),
                "convergence": self.convergence(),
            },
            indent=1,
        )

    def write(self, out_dir, stem: str | None = None) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or self.config.get("name", "experiment")
        paths = [out_dir / f"{stem}_raw.csv", out_dir / f"{stem}_summary.json"]
        paths[0].write_text(self.to_csv())
        paths[1].write_text(self.to_json())
        for method, hist in self.histograms.items():
            p = out_dir / f"{stem}_hist_{method}.csv"
            hist.save(p)
            paths.append(p)
        return paths


def raw_rows_from_csv(text: str) -> list[dict]:
    """Parse a raw per-trial CSV back into rows (numbers as floats)."""
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        parsed = {}
        for k, v in r.items():
            try:
                parsed[k] = float(v)
            except (TypeError, ValueError):
                parsed[k] = v
        rows.append(parsed)
    return rows


# -- baselines ----------------------------------------------------------------


def fit_ridge(train: Dataset, lam: float) -> tuple[np.ndarray, float]:
    """Ridge regression with an unpenalized intercept; returns ``(w, b)``."""
    xm = train.inputs.mean(axis=0)
    ym = float(train.targets.mean())
    Xc = train.inputs - xm
    w = np.linalg.solve(Xc.T @ Xc + lam * np.eye(train.d), Xc.T @ (train.targets - ym))
    return w, ym - float(xm @ w)


def select_ridge(train: Dataset, val: Dataset, lambdas=RIDGE_LAMBDAS) -> tuple[np.ndarray, float, float]:
    best = None
    for lam in lambdas:
        w, b = fit_ridge(train, lam)
        score = nrms(val.targets, val.inputs @ w + b)
        if best is None or score < best[0]:
            best = (score, w, b, lam)
    return best[1], best[2], best[3]


# -- one trial ----------------------------------------------------------------


@dataclass
class _TrialData:
    train: Dataset
    val: Dataset
    test: Dataset
    train_truth: np.ndarray  # targets used for train/test scoring
    test_truth: np.ndarray
    universa: dict  # kind -> full-size universum


def _score(row: dict, prefix: str, predict, data: _TrialData, with_mse: bool) -> None:
    p_tr, p_te = predict(data.train.inputs), predict(data.test.inputs)
    row[f"{prefix}_train_nrms"] = nrms(data.train_truth, p_tr)
    row[f"{prefix}_test_nrms"] = nrms(data.test_truth, p_te)
    if with_mse:
        row[f"{prefix}_train_mse"] = mse(data.train_truth, p_tr)
        row[f"{prefix}_test_mse"] = mse(data.test_truth, p_te)


def _evaluate_trial(
    data: _TrialData,
    cfg: ExperimentConfig,
    sizes: Sequence[int],
    *,
    with_mse: bool = False,
    keep_histograms: bool = False,
) -> dict:
    """Select and score every method; returns ``{size: (row, grid_rows, histograms)}``."""
    base: dict = {}
    if cfg.ridge:
        w, b, lam = select_ridge(data.train, data.val)
        base["ridge_lambda"] = lam
        _score(base, "ridge", lambda X: X @ w + b, data, with_mse)

    svr_params, svr_rep = select_svr(data.train, data.val, cfg.grid, cfg.tol)
    svr_model, _ = fit_svr(data.train, svr_params, cfg.tol)
    base.update(svr_C=svr_params.C, svr_epsilon=svr_params.epsilon, svr_kernel=str(svr_params.kernel),
                svr_n_support=svr_model.n_support)
    _score(base, "svr", svr_model.decision, data, with_mse)
    svr_res = diagnostics.residuals(svr_model, data.train)
    base["svr_piling"] = diagnostics.data_piling_index(svr_res, svr_params.epsilon)

    out = {}
    for size in sizes:
        row = dict(base)
        grid_rows = []
        hists = {}
        for kind, full in data.universa.items():
            U = full.subset(np.arange(size))
            params, rep = select_usvr(data.train, data.val, U, svr_params, cfg.grid, cfg.tol, cfg.max_outer)
            model, _, state = fit_usvr(data.train, U, params, cfg.tol, cfg.max_outer)
            key = f"usvr_{kind}"
            row[f"{key}_cstar_ratio"] = params.cstar / params.C if params.C > 0 else 0.0
            row[f"{key}_delta"] = params.delta
            row[f"{key}_outer"] = state.iteration
            row[f"{key}_cccp"] = state.status
            _score(row, key, model.decision, data, with_mse)
            u_svr = diagnostics.residuals(svr_model, U)
            u_usvr = diagnostics.residuals(model, U)
            row[f"{key}_frac_within_svr"] = diagnostics.fraction_within_delta(u_svr, params.delta)
            row[f"{key}_frac_within_usvr"] = diagnostics.fraction_within_delta(u_usvr, params.delta)
            grid_rows += rep.rows
            if keep_histograms:
                hists[key] = diagnostics.histogram(
                    diagnostics.residuals(model, data.train), u_usvr,
                    cfg.bins, svr_params.epsilon, params.delta)
                hists[f"svr_{kind}"] = diagnostics.histogram(
                    svr_res, u_svr, cfg.bins, svr_params.epsilon, params.delta)
        out[size] = (row, grid_rows, hists)
    return out


def _hypercube_trial(cfg: ExperimentConfig, trial: int, max_m: int) -> _TrialData:
    ss = lambda slot: substream(cfg.seed, trial, slot)  # noqa: E731
    train, t_train = hypercube_generate(HypercubeConfig(cfg.n_train, cfg.sigma, ss(_TRAIN)))
    val, _ = hypercube_generate(HypercubeConfig(cfg.validation_size, cfg.sigma, ss(_VAL)))
    test, t_test = hypercube_generate(HypercubeConfig(cfg.n_test, cfg.sigma, ss(_TEST)))
    universa = {}
    for kind in cfg.universum:
        if kind not in UNIVERSUM_KINDS:
            raise ValueError(f"unknown universum type {kind!r}; expected one of {sorted(UNIVERSUM_KINDS)}")
        universa[kind] = generate_universum(UNIVERSUM_KINDS[kind], max_m, ss(_UNIV[kind]), train)
    return _TrialData(train, val, test, t_train, t_test, universa)


def _run_hypercube_trial(args) -> dict:
    cfg, trial, sizes = args
    try:
        data = _hypercube_trial(cfg, trial, max(sizes))
        results = _evaluate_trial(data, cfg, sizes, keep_histograms=(trial == 0))
    except (qp.QpError, ValueError, RuntimeError) as exc:
        log.warning("trial %d failed: %s", trial, exc)
        return {size: ({"trial": trial, "status": "failed", "error": str(exc)}, [], {}) for size in sizes}
    for size, (row, _, _) in results.items():
        row.update(trial=trial, status="ok", m=size)
    return results


def _map(fn, items, jobs: int):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _methods(cfg: ExperimentConfig, kinds) -> list[str]:
    return (["ridge"] if cfg.ridge else []) + ["svr"] + [f"usvr_{k}" for k in kinds]


def _assemble(cfg: ExperimentConfig, kinds, per_trial: list, size: int) -> ExperimentReport:
    rep = ExperimentReport(config={**cfg.to_dict(), "m": size}, methods=_methods(cfg, kinds))
    for res in per_trial:  # already in trial order
        row, grid_rows, hists = res[size]
        rep.rows.append(row)
        rep.selection.append(grid_rows)
        if hists:
            rep.histograms = hists
    failed = len(rep.rows) - len(rep.ok_rows)
    if failed and failed >= FAILURE_LIMIT * len(rep.rows):
        raise ScenarioError(f"{cfg.name}: {failed} of {len(rep.rows)} trials failed")
    return rep


def run_universum_size_sweep(cfg: ExperimentConfig, sizes: Sequence[int], jobs: int = 1) -> list[ExperimentReport]:
    """One report per universum size; trials share data, universa are nested prefixes."""
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("sizes must be non-empty")
    per_trial = _map(_run_hypercube_trial, [(cfg, t, sizes) for t in range(cfg.trials)], jobs)
    return [_assemble(replace(cfg, m=s), cfg.universum, per_trial, s) for s in sizes]


def run_scenario(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    return run_universum_size_sweep(cfg, [cfg.m], jobs)[0]


# -- real data ----------------------------------------------------------------


@dataclass(frozen=True)
class RealDataSpec:
    """How to load and preprocess one real dataset."""

    name: str = "real"
    loader: str = "csv"  # "csv" or "cpu" (raw UCI machine.data)
    target_column: str = "y"
    categorical: tuple = ()
    drop: tuple = ()
    log_target: bool = False
    scale: tuple | None = (-1.0, 1.0)
    n_train: int = 50
    n_val: int = 50
    n_test: int = 109
    strategies: tuple = ("1", "2")
    m: int = 100

    def load(self, path) -> Dataset:
        if self.loader == "cpu":
            ds = load_cpu_performance(path)
        else:
            ds = load_csv(path, self.target_column, categorical=self.categorical, drop=self.drop)
        return log_transform_targets(ds) if self.log_target else ds


CPU_SPEC = RealDataSpec(name="cpu", loader="cpu", log_target=True, n_train=50, n_val=50, n_test=109, m=100)
RAT_SPEC = RealDataSpec(name="rat", target_column="age", n_train=40, n_val=40, n_test=88, m=200)


def _real_trial(args) -> dict:
    ds, spec, cfg, trial = args
    try:
        train, val, test = split(ds, SplitSpec(spec.n_train, spec.n_val, spec.n_test,
                                               substream(cfg.seed, trial, _SPLIT)))
        if spec.scale is not None:
            # fit on training inputs only, apply to the rest
            train, sp = scale_inputs(train, *spec.scale)
            val, test = sp.apply(val), sp.apply(test)
        universa = {
            f"s{s}": generate_universum(s, spec.m, substream(cfg.seed, trial, _UNIV[f"s{s}"]), train)
            for s in spec.strategies
        }
        data = _TrialData(train, val, test, train.targets, test.targets, universa)
        res = _evaluate_trial(data, cfg, [spec.m], with_mse=True, keep_histograms=(trial == 0))
    except (qp.QpError, ValueError, RuntimeError) as exc:
        log.warning("trial %d failed: %s", trial, exc)
        return {spec.m: ({"trial": trial, "status": "failed", "error": str(exc)}, [], {})}
    res[spec.m][0].update(trial=trial, status="ok", m=spec.m)
    return res


def run_real_dataset(path, spec: RealDataSpec, cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Repeated random partitions of a real dataset; NRMS and MSE on observed targets."""
    if not Path(path).is_file():
        hint = {
            "cpu": " (UCI Machine Learning Repository: 'Computer Hardware', machine.data)",
            "rat": " (Vilmann's rat skull landmarks, Bookstein 1991; CSV with an 'age' column)",
        }.get(spec.name, "")
        raise DataError(f"dataset file not found: {path}{hint}")
    ds = spec.load(path)
    per_trial = _map(_real_trial, [(ds, spec, cfg, t) for t in range(cfg.trials)], jobs)
    cfg = replace(cfg, name=spec.name, m=spec.m, n_train=spec.n_train, n_val=spec.n_val, n_test=spec.n_test,
                  universum=tuple(f"s{s}" for s in spec.strategies), sigma=0.0)
    rep = _assemble(cfg, cfg.universum, per_trial, spec.m)
    rep.config["dataset"] = {"path": str(path), **asdict(spec)}
    return rep


# -- presets ------------------------------------------------------------------

# C*/C reaches down to 2^-14 and Delta up to 2^6: the optima on the hypercube
# sit well below C*/C = 2^-4, especially without noise.
HYPERCUBE_RATIOS = tuple(2.0**k for k in range(-14, 5))
HYPERCUBE_DELTAS = tuple(2.0**k for k in range(-4, 7))
HYPERCUBE_GRID = GridSpec(DEFAULT_EPSILONS, (KernelSpec.linear(),), HYPERCUBE_RATIOS, HYPERCUBE_DELTAS)
RBF_GRID = GridSpec(
    (0.0,) + tuple(2.0**k for k in range(-4, 7)),
    tuple(KernelSpec.rbf(g) for g in DEFAULT_RBF_GAMMAS),
    (0.0,) + tuple(2.0**k for k in range(-7, 2)),
    tuple(2.0**k for k in range(-4, 7)),  # reaches 2^6, where rat optima were reported
)

PRESETS = {
    "table1-low-noise": ExperimentConfig("table1-low-noise", 30, 0.5, ("type1", "type2"), 300, grid=HYPERCUBE_GRID),
    "table1-high-noise": ExperimentConfig("table1-high-noise", 30, 2.0, ("type1", "type2"), 300, grid=HYPERCUBE_GRID),
    "table2": ExperimentConfig("table2", 150, 0.5, ("type1", "type2"), 300, grid=HYPERCUBE_GRID),
    "table3": ExperimentConfig("table3", 30, 0.0, ("type1", "type2"), 300, grid=HYPERCUBE_GRID),
    "table4": ExperimentConfig("table4", 30, 0.5, ("type1", "type2"), 500, grid=HYPERCUBE_GRID),
}
TABLE4_SIZES = (50, 100, 300, 500)
REAL_PRESETS = {
    "cpu": (CPU_SPEC, ExperimentConfig("cpu", grid=HYPERCUBE_GRID, ridge=False)),
    "rat": (RAT_SPEC, ExperimentConfig("rat", grid=RBF_GRID, ridge=False)),
}
