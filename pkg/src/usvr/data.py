"""Datasets, CSV ingestion, preprocessing and the hypercube benchmark."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

HYPERCUBE_DIM = 30
_BLOCK = 5


class DataError(ValueError):
    """Raised for malformed input files or infeasible data requests."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """``n`` samples of ``d``-dimensional inputs with real targets.

    Arrays are copied and made read-only on construction.
    """

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        X = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.targets, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DataError(f"inputs must be a matrix, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} input rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains NaN or infinite values")
        object.__setattr__(self, "inputs", _frozen(X))
        object.__setattr__(self, "targets", _frozen(y))

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return type(self)(self.inputs[idx], self.targets[idx])

    def with_targets(self, targets) -> "Dataset":
        return type(self)(self.inputs, targets)

    def with_inputs(self, inputs) -> "Dataset":
        return type(self)(inputs, self.targets)


# -- CSV ----------------------------------------------------------------------


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        rows = [row for row in reader if any(cell.strip() for cell in row)]
    return header, rows


def _is_missing(cell: str) -> bool:
    return cell.strip() in {"", "?", "NA", "NaN", "nan"}


def one_hot_columns(values: Sequence[str]) -> tuple[list[str], np.ndarray]:
    """One-hot encode a categorical column, levels in first-seen order."""
    levels: list[str] = []
    for v in values:
        if v not in levels:
            levels.append(v)
    out = np.zeros((len(values), len(levels)))
    for i, v in enumerate(values):
        out[i, levels.index(v)] = 1.0
    return levels, out


def load_csv(
    path,
    target_column: str,
    *,
    categorical: Sequence[str] = (),
    drop: Sequence[str] = (),
    drop_missing: bool = True,
) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    Every column other than ``target_column`` and ``drop`` becomes an input.
    Columns in ``categorical`` are one-hot expanded in place (levels in
    first-seen order). Rows with missing cells are dropped and counted in the
    log when ``drop_missing`` is true; otherwise they are an error.
    """
    path = Path(path)
    header, rows = _read_rows(path)
    if target_column not in header:
        raise DataError(f"{path}: target column {target_column!r} not in header {header}")
    for name in (*categorical, *drop):
        if name not in header:
            raise DataError(f"{path}: column {name!r} not in header")

    kept = []
    n_dropped = 0
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        used = [c for h, c in zip(header, row) if h not in drop]
        if any(_is_missing(c) for c in used):
            if not drop_missing:
                raise DataError(f"{path}:{lineno}: missing value")
            n_dropped += 1
            continue
        kept.append((lineno, row))
    if n_dropped:
        log.info("%s: dropped %d rows with missing values", path, n_dropped)
    if not kept:
        raise DataError(f"{path}: no usable data rows")

    blocks = []
    y = np.empty(len(kept))
    for col, name in enumerate(header):
        if name in drop:
            continue
        cells = [row[col].strip() for _, row in kept]
        if name in categorical:
            blocks.append(one_hot_columns(cells)[1])
            continue
        values = np.empty(len(cells))
        for k, (cell, (lineno, _)) in enumerate(zip(cells, kept)):
            try:
                values[k] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: column {name!r} has non-numeric value {cell!r}"
                ) from None
        if name == target_column:
            y = values
        else:
            blocks.append(values[:, None])
    X = np.hstack(blocks) if blocks else np.zeros((len(kept), 0))
    return Dataset(X, y)


def load_inputs(path, drop: Sequence[str] = ()) -> tuple[list[str], np.ndarray]:
    """Read a headered all-numeric CSV without a target; returns ``(names, X)``."""
    path = Path(path)
    header, rows = _read_rows(path)
    keep = [k for k, h in enumerate(header) if h not in drop]
    X = np.empty((len(rows), len(keep)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}:{i + 2}: expected {len(header)} cells, got {len(row)}")
        for j, k in enumerate(keep):
            try:
                X[i, j] = float(row[k])
            except ValueError:
                raise DataError(
                    f"{path}:{i + 2}: column {header[k]!r} has non-numeric value {row[k]!r}"
                ) from None
    return [header[k] for k in keep], X


def save_csv(ds: Dataset, path, target_column: str = "y", feature_names=None) -> None:
    names = list(feature_names) if feature_names else [f"x{j + 1}" for j in range(ds.d)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, target_column])
        for x, y in zip(ds.inputs, ds.targets):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


# UCI "Computer Hardware" (machine.data): vendor, model, MYCT, MMIN, MMAX, CACH,
# CHMIN, CHMAX, PRP, ERP. No header row.
CPU_COLUMNS = ["vendor", "model", "MYCT", "MMIN", "MMAX", "CACH", "CHMIN", "CHMAX", "PRP", "ERP"]


def load_cpu_performance(path) -> Dataset:
    """Load the raw UCI machine.data file: one-hot vendor, drop model/ERP.

    The result has 30 vendor indicators followed by 6 numeric inputs and PRP
    as the target (untransformed).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(
            f"no such file: {path} (download machine.data from the UCI Machine "
            "Learning Repository, 'Computer Hardware' dataset)"
        )
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows and rows[0][0].strip().lower() in {"vendor", "vendor_name"}:
        rows = rows[1:]
    for lineno, r in enumerate(rows, start=1):
        if len(r) != len(CPU_COLUMNS):
            raise DataError(f"{path}:{lineno}: expected {len(CPU_COLUMNS)} cells, got {len(r)}")
    _, vendors = one_hot_columns([r[0].strip() for r in rows])
    try:
        numeric = np.array([[float(c) for c in r[2:8]] for r in rows])
        y = np.array([float(r[8]) for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric value ({exc})") from None
    return Dataset(np.hstack([vendors, numeric]), y)


# -- preprocessing ------------------------------------------------------------


@dataclass(frozen=True)
class ScalingParams:
    """Per-feature affine map onto ``[low, high]``."""

    feature_min: np.ndarray
    feature_max: np.ndarray
    low: float = -1.0
    high: float = 1.0

    def __post_init__(self) -> None:
        lo = _frozen(self.feature_min)
        hi = _frozen(self.feature_max)
        if lo.shape != hi.shape:
            raise DataError("feature_min and feature_max differ in length")
        if np.any(hi < lo):
            raise DataError("feature_max below feature_min")
        if not self.high > self.low:
            raise DataError("scaling range needs high > low")
        object.__setattr__(self, "feature_min", lo)
        object.__setattr__(self, "feature_max", hi)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        span = self.feature_max - self.feature_min
        const = span == 0
        safe = np.where(const, 1.0, span)
        out = self.low + (X - self.feature_min) * (self.high - self.low) / safe
        return np.where(const, 0.5 * (self.low + self.high), out)

    def inverse(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        span = self.feature_max - self.feature_min
        X = self.feature_min + (Z - self.low) * span / (self.high - self.low)
        return np.where(span == 0, self.feature_min, X)

    def apply(self, ds: Dataset) -> Dataset:
        return ds.with_inputs(self.transform(ds.inputs))

    def to_dict(self) -> dict:
        return {
            "feature_min": self.feature_min.tolist(),
            "feature_max": self.feature_max.tolist(),
            "low": self.low,
            "high": self.high,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScalingParams":
        return cls(
            np.asarray(doc["feature_min"], dtype=float),
            np.asarray(doc["feature_max"], dtype=float),
            float(doc["low"]),
            float(doc["high"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ScalingParams":
        return cls.from_dict(json.loads(text))


def scale_inputs(ds: Dataset, low: float = -1.0, high: float = 1.0) -> tuple[Dataset, ScalingParams]:
    """Scale every feature of ``ds`` to ``[low, high]``; constant features go to the midpoint."""
    params = ScalingParams(ds.inputs.min(axis=0), ds.inputs.max(axis=0), low, high)
    return params.apply(ds), params


def log_transform_targets(ds: Dataset) -> Dataset:
    if np.any(ds.targets <= -1):
        raise DataError("log(1 + y) needs every target > -1")
    return ds.with_targets(np.log1p(ds.targets))


# -- hypercube benchmark ------------------------------------------------------


def hypercube_signs(dim: int = HYPERCUBE_DIM) -> np.ndarray:
    """Coefficients +1 x5, -1 x5, +1 x5, ... of the hypercube target."""
    return np.where((np.arange(dim) // _BLOCK) % 2 == 0, 1.0, -1.0)


def hypercube_target(x) -> np.ndarray | float:
    """Alternating five-block sum; accepts one vector or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != HYPERCUBE_DIM:
        raise DataError(f"hypercube inputs have {HYPERCUBE_DIM} coordinates, got {x.shape[-1]}")
    t = x @ hypercube_signs()
    return float(t) if x.ndim == 1 else t


@dataclass(frozen=True)
class HypercubeConfig:
    n: int
    sigma: float = 0.0
    seed: int | np.random.SeedSequence | None = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DataError("hypercube needs n >= 1")
        if self.sigma < 0:
            raise DataError("noise sigma must be >= 0")


def hypercube_generate(cfg: HypercubeConfig) -> tuple[Dataset, np.ndarray]:
    """Uniform ``[0, 1]^30`` inputs, noisy targets, plus the noise-free targets."""
    rng = np.random.default_rng(cfg.seed)
    X = rng.random((cfg.n, HYPERCUBE_DIM))
    t = X @ hypercube_signs()
    y = t + cfg.sigma * rng.standard_normal(cfg.n) if cfg.sigma > 0 else t.copy()
    return Dataset(X, y), _frozen(t)


# -- splitting ----------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    n_train: int
    n_val: int
    n_test: int
    seed: int | np.random.SeedSequence | None = 0


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    counts = (spec.n_train, spec.n_val, spec.n_test)
    if min(counts) < 0 or sum(counts) > n:
        raise DataError(f"cannot split {n} samples into {counts}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    a, b = spec.n_train, spec.n_train + spec.n_val
    return perm[:a], perm[a:b], perm[b : b + spec.n_test]


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint random train/validation/test partitions of the requested sizes."""
    tr, va, te = split_indices(ds.n, spec)
    return ds.subset(tr), ds.subset(va), ds.subset(te)


def substream(seed, *key: int) -> np.random.SeedSequence:
    """Independent child stream ``key`` of ``seed``; stable across platforms."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=(*seed.spawn_key, *key))
    return np.random.SeedSequence(seed, spawn_key=key)
