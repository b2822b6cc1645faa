"""Epsilon-insensitive support vector regression with optional universum data."""

from .cccp import UniversumSet, UsvrHyperParams, fit_usvr
from .data import Dataset, load_csv, save_csv
from .kernel import KernelSpec, gram
from .modelsel import GridSpec, nrms, select_svr, select_usvr
from .svr import Model, SvrHyperParams, fit_svr, predict

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "GridSpec",
    "KernelSpec",
    "Model",
    "SvrHyperParams",
    "UniversumSet",
    "UsvrHyperParams",
    "fit_svr",
    "fit_usvr",
    "gram",
    "load_csv",
    "nrms",
    "predict",
    "save_csv",
    "select_svr",
    "select_usvr",
]
