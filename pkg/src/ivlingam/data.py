"""Labelled data containers: covariance matrices and centered datasets."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import InputError


def _labels(names: Iterable[str]) -> tuple[str, ...]:
    out = tuple(names)
    if len(set(out)) != len(out):
        dup = sorted({n for n in out if out.count(n) > 1})
        raise InputError(f"duplicate variable names {dup}")
    return out


class CovMatrix:
    """Symmetric covariance matrix with variable labels.

    ``n`` is the sample size it was estimated from, or ``None`` for an exact
    (population) matrix.
    """

    def __init__(self, labels: Sequence[str], values, n: int | None = None):
        self.labels = _labels(labels)
        values = np.array(values, dtype=float)
        p = len(self.labels)
        if values.shape != (p, p):
            raise InputError(f"covariance shape {values.shape} does not match {p} labels")
        if np.max(np.abs(values - values.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(values), initial=0.0)):
            raise InputError("covariance matrix is not symmetric")
        if np.any(np.diag(values) <= 0):
            raise InputError("covariance matrix has a non-positive diagonal")
        self.values = (values + values.T) / 2
        self.values.setflags(write=False)
        self.n = n
        self._index = {v: i for i, v in enumerate(self.labels)}

    @property
    def is_population(self) -> bool:
        return self.n is None

    def idx(self, names: Iterable[str]) -> list[int]:
        try:
            return [self._index[v] for v in names]
        except KeyError as exc:
            raise InputError(f"unknown variable {exc.args[0]!r}") from None

    def __getitem__(self, key: tuple[str, str]) -> float:
        a, b = key
        i, j = self.idx((a, b))
        return float(self.values[i, j])

    def block(self, rows: Sequence[str], cols: Sequence[str]) -> np.ndarray:
        return self.values[np.ix_(self.idx(rows), self.idx(cols))]

    def restrict(self, names: Sequence[str]) -> "CovMatrix":
        return CovMatrix(names, self.block(names, names), self.n)

    def __repr__(self):
        kind = "population" if self.n is None else f"n={self.n}"
        return f"CovMatrix({len(self.labels)} vars, {kind})"


class Dataset:
    """An n x p matrix of observations with named columns, centered on construction."""

    def __init__(self, columns: Sequence[str], values, center: bool = True):
        self.columns = _labels(columns)
        values = np.array(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise InputError(f"data shape {values.shape} does not match {len(self.columns)} columns")
        if not np.all(np.isfinite(values)):
            raise InputError("data contains missing or non-finite values")
        if center:
            values = values - values.mean(axis=0)
        self.values = values
        self.values.setflags(write=False)
        self._index = {v: i for i, v in enumerate(self.columns)}

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def idx(self, names: Iterable[str]) -> list[int]:
        try:
            return [self._index[v] for v in names]
        except KeyError as exc:
            raise InputError(f"unknown column {exc.args[0]!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.idx([name])[0]]

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        return self.values[:, self.idx(names)]

    def subset(self, names: Sequence[str]) -> "Dataset":
        return Dataset(names, self.matrix(names), center=False)

    def rows(self, index) -> "Dataset":
        """Resampled/held-out rows, re-centered."""
        return Dataset(self.columns, self.values[index])

    def cov(self, names: Sequence[str] | None = None) -> CovMatrix:
        names = self.columns if names is None else tuple(names)
        m = self.matrix(names)
        return CovMatrix(names, m.T @ m / self.n, n=self.n)

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p})"
