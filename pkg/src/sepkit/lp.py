"""Dense two-phase simplex method with Bland's anti-cycling rule.

The problems solved in this package are tiny (at most a few hundred
constraints and a handful of free variables), so a dense tableau kept in a
numpy array is both fast enough and easy to audit.  Every variable of the
user-facing problem is free; internally each one is split into a positive
and a negative part.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCellError, SolverError, UnboundedDirectionError

__all__ = ["LPResult", "linprog_max", "InfeasibleLPError", "UnboundedLPError"]


class InfeasibleLPError(EmptyCellError):
    """The constraint set of the linear program is empty."""


class UnboundedLPError(UnboundedDirectionError):
    """The objective is unbounded above on the feasible set."""


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    value: float
    iterations: int


def _pivot(T: np.ndarray, r: np.ndarray, basis: list[int], i: int, j: int) -> None:
    T[i] /= T[i, j]
    col = T[:, j].copy()
    col[i] = 0.0
    T -= np.outer(col, T[i])
    r -= r[j] * T[i]
    basis[i] = j


def _entering(r: np.ndarray, ncols: int, tol: float) -> int:
    idx = np.flatnonzero(r[:ncols] > tol)
    return int(idx[0]) if idx.size else -1


def _leaving(T: np.ndarray, basis: list[int], j: int, tol: float) -> int:
    col = T[:, j]
    rows = np.flatnonzero(col > tol)
    if rows.size == 0:
        return -1
    ratios = T[rows, -1] / col[rows]
    best = ratios.min()
    ties = rows[ratios <= best + tol * max(1.0, abs(best))]
    # Bland: smallest basic variable index among the tied rows
    return int(min(ties, key=lambda k: basis[k]))


def _run(T, r, basis, ncols, tol, max_iter, it):
    while True:
        j = _entering(r, ncols, tol)
        if j < 0:
            return it
        i = _leaving(T, basis, j, tol)
        if i < 0:
            raise UnboundedLPError(f"objective unbounded along column {j}")
        _pivot(T, r, basis, i, j)
        it += 1
        if it > max_iter:
            raise SolverError(f"simplex exceeded {max_iter} pivots")


def linprog_max(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    *,
    tol: float = 1e-9,
    max_iter: int | None = None,
) -> LPResult:
    """Maximise ``c @ x`` over free ``x`` with ``A_ub x <= b_ub``, ``A_eq x == b_eq``.

    Raises
    ------
    InfeasibleLPError
        If no point satisfies the constraints.
    UnboundedLPError
        If the objective is unbounded above.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    if A_ub.shape != (b_ub.size, n) or A_eq.shape != (b_eq.size, n):
        raise ValueError("constraint shapes do not match the objective")

    m_ub, m_eq = b_ub.size, b_eq.size
    m = m_ub + m_eq
    # columns: x+ (n), x- (n), slacks (m_ub), artificials (n_art)
    A = np.zeros((m, 2 * n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:2 * n] = -A_ub
    A[:m_ub, 2 * n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    A[m_ub:, n:2 * n] = -A_eq
    b = np.concatenate([b_ub, b_eq])
    flip = b < 0
    A[flip] *= -1.0
    b = np.where(flip, -b, b)

    needs_art = np.ones(m, dtype=bool)
    needs_art[:m_ub] = flip[:m_ub]
    art_rows = np.flatnonzero(needs_art)
    n_struct = A.shape[1]
    n_art = art_rows.size

    T = np.zeros((m, n_struct + n_art + 1))
    T[:, :n_struct] = A
    T[art_rows, n_struct + np.arange(n_art)] = 1.0
    T[:, -1] = b
    basis = [2 * n + i for i in range(m)]
    for k, i in enumerate(art_rows):
        basis[i] = n_struct + k

    if max_iter is None:
        max_iter = 50 * (m + n_struct + 10)
    it = 0

    if n_art:
        r = np.zeros(T.shape[1])
        r[n_struct:n_struct + n_art] = -1.0
        for i in art_rows:
            r += T[i]
        r[n_struct:n_struct + n_art] = 0.0
        it = _run(T, r, basis, n_struct + n_art, tol, max_iter, it)
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        if -r[-1] < -1e-9 * scale:
            raise InfeasibleLPError("linear program is infeasible")
        keep = []
        for i in range(m):
            if basis[i] >= n_struct:
                cand = np.flatnonzero(np.abs(T[i, :n_struct]) > tol)
                if cand.size == 0:
                    continue  # redundant equality row
                _pivot(T, r, basis, i, int(cand[0]))
            keep.append(i)
        T = np.delete(T[keep], np.s_[n_struct:n_struct + n_art], axis=1)
        basis = [basis[i] for i in keep]
        A, b = A[keep], b[keep]

    cost = np.zeros(n_struct)
    cost[:n] = c
    cost[n:2 * n] = -c
    r = np.zeros(T.shape[1])
    r[:n_struct] = cost
    for i, bi in enumerate(basis):
        if cost[bi] != 0.0:
            r -= cost[bi] * T[i]
    it = _run(T, r, basis, n_struct, tol, max_iter, it)

    z = np.zeros(n_struct)
    z[basis] = T[:, -1]
    x = z[:n] - z[n:2 * n]
    x = _polish(x, basis, n, m_ub, A_ub, b_ub, A_eq, b_eq)
    return LPResult(x=x, value=float(c @ x), iterations=it)


def _polish(x, basis, n, m_ub, A_ub, b_ub, A_eq, b_eq):
    """Recompute the vertex from its tight constraints to shed tableau drift."""
    basic = set(basis)
    J = [j for j in range(n) if j in basic or (n + j) in basic]
    if not J:
        return np.zeros(n)
    tight = [i for i in range(m_ub) if (2 * n + i) not in basic]
    M = np.vstack([A_ub[tight], A_eq])[:, J]
    rhs = np.concatenate([b_ub[tight], b_eq])
    if M.shape[0] < len(J):
        return x
    sol, _, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
    if rank < len(J):
        return x
    out = np.zeros(n)
    out[J] = sol
    # keep the tableau answer if polishing moved it off the vertex
    if np.abs(out - x).max(initial=0.0) > 1e-6 * max(1.0, np.abs(x).max(initial=0.0)):
        return x
    return out
