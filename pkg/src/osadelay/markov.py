"""Finite Markov chain containers and the stationary-distribution solver."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .core import NonConvergenceError

ROW_ATOL = 1e-10
DENSE_LIMIT = 2000
POWER_TOL = 1e-12
POWER_MAX_ITER = 10**6


class ReducibleChainError(ValueError):
    """The chain has more than one closed communicating class."""


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic matrix together with the ordered state labels."""

    states: tuple
    matrix: object  # np.ndarray or scipy sparse matrix
    name: str = "P"

    def __post_init__(self):
        n = len(self.states)
        if self.matrix.shape != (n, n):
            raise ValueError(f"{self.name}: matrix shape {self.matrix.shape} does not match {n} states")

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.states)}

    def dense(self) -> np.ndarray:
        m = self.matrix
        return m.toarray() if sp.issparse(m) else np.asarray(m)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def __getitem__(self, pair):
        idx = self.index()
        a, b = pair
        return float(self.matrix[idx[a], idx[b]])

    def dump_triples(self, path) -> None:
        """Write non-zero entries as ``row col prob`` lines."""
        coo = sp.coo_matrix(self.matrix)
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            for i in order:
                fh.write(f"{coo.row[i]} {coo.col[i]} {float(coo.data[i])!r}\n")


def check_stochastic(P, name="P", atol=ROW_ATOL) -> None:
    if sp.issparse(P):
        data = P.data
    else:
        data = np.asarray(P)
    if np.any(data < -atol):
        raise ValueError(f"{name}: negative transition probability")
    rows = np.asarray(P.sum(axis=1)).ravel()
    bad = np.flatnonzero(np.abs(rows - 1.0) > atol)
    if bad.size:
        raise ValueError(f"{name}: row {bad[0]} sums to {rows[bad[0]]!r}")


def closed_classes(P) -> list[np.ndarray]:
    """Closed communicating classes (recurrent classes of a finite chain)."""
    graph = sp.csr_matrix(P)
    graph.eliminate_zeros()
    ncomp, labels = connected_components(graph, directed=True, connection="strong")
    coo = graph.tocoo()
    leaves = labels[coo.row] != labels[coo.col]
    open_labels = set(labels[coo.row[leaves]].tolist())
    return [np.flatnonzero(labels == c) for c in range(ncomp) if c not in open_labels]


def steady_state(P, name: str | None = None, method: str = "auto") -> np.ndarray:
    """Stationary vector pi with pi P = pi and sum(pi) = 1.

    Dense direct solve up to ``DENSE_LIMIT`` states, power iteration above
    (or when ``method="power"``). Raises ReducibleChainError when more than
    one closed class exists and NonConvergenceError if power iteration
    exhausts its budget.
    """
    if isinstance(P, TransitionMatrix):
        name = name or P.name
        P = P.matrix
    name = name or "P"
    n = P.shape[0]
    check_stochastic(P, name)
    classes = closed_classes(P)
    if len(classes) != 1:
        raise ReducibleChainError(f"{name}: {len(classes)} closed classes, stationary law not unique")

    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "power"
    if method == "dense":
        A = (P.toarray() if sp.issparse(P) else np.array(P, dtype=float)).T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = np.linalg.solve(A, b)
    elif method == "power":
        pi = _power_iteration(sp.csr_matrix(P), name)
    else:
        raise ValueError(f"unknown method {method!r}")

    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.abs(pi @ P - pi).max()
    if resid > ROW_ATOL:
        raise NonConvergenceError(f"{name}: stationary residual {resid:.3g}")
    return pi


def _power_iteration(P: sp.csr_matrix, name: str) -> np.ndarray:
    n = P.shape[0]
    PT = P.T.tocsr()
    pi = np.full(n, 1.0 / n)
    for _ in range(POWER_MAX_ITER):
        nxt = PT @ pi
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() < POWER_TOL:
            return nxt
        pi = nxt
    raise NonConvergenceError(f"{name}: power iteration did not converge in {POWER_MAX_ITER} steps")


def csr_from_rows(rows: Sequence[dict], n: int) -> sp.csr_matrix:
    """Assemble a CSR matrix from per-row {col: prob} dictionaries."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for row in rows:
        cols = sorted(row)
        indices.extend(cols)
        data.extend(row[c] for c in cols)
        indptr.append(len(indices))
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))
