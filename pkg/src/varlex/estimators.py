"""scikit-learn style adapters: each row of ``X`` is one grid function, flattened."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .domain import Box, GridFunction
from .exceptions import DomainError
from .maximal import MaximalSpec, maximal
from .operators import apply_commutator
from .spaces import as_phi, batch_norms


def _rows_to_grid(X, box: Box, N: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != N**box.n:
        raise DomainError(f"expected rows of {N ** box.n} cell values, got shape {X.shape}")
    return X.reshape((X.shape[0],) + (N,) * box.n)


def _cells_per_side(X, n: int) -> int:
    k = np.asarray(X).shape[1]
    N = int(round(k ** (1.0 / n)))
    if N**n != k or N & (N - 1):
        raise DomainError(f"{k} cells do not form a power-of-two grid in dimension {n}")
    return N


class LuxemburgNormTransformer(TransformerMixin, BaseEstimator):
    """Maps each row to its Luxemburg norm under ``phi`` (one output column)."""

    def __init__(self, phi=None, box: Box = None, tol: float = 1e-10):
        self.phi = phi
        self.box = box
        self.tol = tol

    def fit(self, X, y=None):
        if self.phi is None or self.box is None:
            raise DomainError("set phi and box before fitting")
        self.cells_per_side_ = _cells_per_side(X, self.box.n)
        self.bound_ = as_phi(self.phi).bind_grid(self.cells_per_side_)
        return self

    def transform(self, X):
        if not hasattr(self, "bound_"):
            raise NotFittedError("LuxemburgNormTransformer is not fitted")
        N = self.cells_per_side_
        X = np.abs(_rows_to_grid(X, self.box, N).reshape(len(X), -1))
        idx = np.broadcast_to(np.arange(X.shape[1]), X.shape)
        w = self.box.volume / X.shape[1]
        vals, *_ = batch_norms(self.bound_.take(idx), X, w, self.tol)
        return vals[:, None]


class CommutatorTransformer(TransformerMixin, BaseEstimator):
    """Maps each row ``f`` to ``T^{b,m} f`` on the same grid."""

    def __init__(self, kernel=None, b=None, m: int = 0):
        self.kernel = kernel
        self.b = b
        self.m = m

    def fit(self, X, y=None):
        if self.kernel is None:
            raise DomainError("set a kernel before fitting")
        if self.m > 0 and self.b is None:
            raise DomainError("commutators of order m >= 1 need a symbol b")
        self.box_ = self.b.box if self.b is not None else Box.from_bounds(0.0, 1.0, self.kernel.n)
        self.cells_per_side_ = _cells_per_side(X, self.kernel.n)
        return self

    def transform(self, X):
        if not hasattr(self, "cells_per_side_"):
            raise NotFittedError("CommutatorTransformer is not fitted")
        grids = _rows_to_grid(X, self.box_, self.cells_per_side_)
        out = [apply_commutator(self.kernel, self.b, self.m, GridFunction(self.box_, g)).values.reshape(-1)
               for g in grids]
        return np.asarray(out)


class MaximalTransformer(TransformerMixin, BaseEstimator):
    """Maps each row to its lattice maximal function."""

    def __init__(self, spec: MaximalSpec = None):
        self.spec = spec

    def fit(self, X, y=None):
        if self.spec is None:
            raise DomainError("set a MaximalSpec before fitting")
        self.cells_per_side_ = _cells_per_side(X, self.spec.lattice.n)
        return self

    def transform(self, X):
        if not hasattr(self, "cells_per_side_"):
            raise NotFittedError("MaximalTransformer is not fitted")
        box = self.spec.lattice.box
        grids = _rows_to_grid(X, box, self.cells_per_side_)
        return np.asarray([maximal(self.spec, GridFunction(box, g)).values.reshape(-1) for g in grids])
