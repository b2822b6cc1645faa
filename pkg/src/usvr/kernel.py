"""Linear, polynomial and RBF kernels and dense Gram matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("linear", "poly", "rbf")


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    degree: int = 1
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise KernelError(f"unknown kernel {self.kind!r}; expected one of {KINDS}")
        if self.kind == "poly" and (int(self.degree) != self.degree or self.degree < 1):
            raise KernelError("polynomial degree must be a positive integer")
        if self.kind == "rbf" and not self.gamma > 0:
            raise KernelError("RBF gamma must be > 0")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def poly(cls, degree: int) -> "KernelSpec":
        return cls("poly", degree=int(degree))

    @classmethod
    def rbf(cls, gamma: float) -> "KernelSpec":
        return cls("rbf", gamma=float(gamma))

    def to_dict(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.kind == "poly":
            doc["degree"] = int(self.degree)
        elif self.kind == "rbf":
            doc["gamma"] = float(self.gamma)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "KernelSpec":
        kind = doc["kind"]
        if kind == "poly":
            return cls.poly(doc["degree"])
        if kind == "rbf":
            return cls.rbf(doc["gamma"])
        return cls(kind)

    def __str__(self) -> str:
        if self.kind == "poly":
            return f"poly(q={self.degree})"
        if self.kind == "rbf":
            return f"rbf(gamma={self.gamma:g})"
        return "linear"


def gram(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Kernel matrix with entry ``(i, j) = K(A[i], B[j])``.

    ``B=None`` means ``B = A``; the result is then exactly symmetric.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    same = B is None
    B = A if same else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise KernelError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]} columns")
    if spec.kind == "rbf":
        sq = (
            np.sum(A * A, axis=1)[:, None]
            + np.sum(B * B, axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        np.maximum(sq, 0.0, out=sq)
        if same:
            np.fill_diagonal(sq, 0.0)
        K = np.exp(-spec.gamma * sq)
    else:
        K = A @ B.T
        if spec.kind == "poly":
            K = (K + 1.0) ** spec.degree
    if same:
        K = 0.5 * (K + K.T)
    return K


def kernel_eval(spec: KernelSpec, x, z) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    if x.shape != z.shape:
        raise KernelError(f"dimension mismatch: {x.size} vs {z.size}")
    if spec.kind == "linear":
        return float(x @ z)
    if spec.kind == "poly":
        return float((x @ z + 1.0) ** spec.degree)
    diff = x - z
    return float(np.exp(-spec.gamma * (diff @ diff)))
