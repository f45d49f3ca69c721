"""Linear programming backends.

Every LP in the package goes through :func:`solve_lp`, which minimizes
``c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq`` and box bounds.
Two backends are available:

* ``"simplex"``: a dense two-phase tableau simplex using Bland's rule. It has no
  dependency beyond numpy and is guaranteed to terminate on degenerate problems.
* ``"highs"``: scipy's HiGHS interface, much faster on the larger sequence-form
  programs.

The active backend is held in a :class:`contextvars.ContextVar`, so switching it
with :func:`use_method` is local to the current thread or task.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import LPError

TOL = 1e-9

_METHOD: contextvars.ContextVar[str] = contextvars.ContextVar("lp_method", default="highs")


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    fun: float
    method: str


def current_method() -> str:
    return _METHOD.get()


@contextlib.contextmanager
def use_method(method: str) -> Iterator[None]:
    """Temporarily select the LP backend (``"highs"`` or ``"simplex"``)."""
    if method not in ("highs", "simplex"):
        raise ValueError(f"unknown LP method {method!r}")
    token = _METHOD.set(method)
    try:
        yield
    finally:
        _METHOD.reset(token)


def solve_lp(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    lb=0.0,
    ub=None,
    method: str | None = None,
) -> LPResult:
    """Minimize ``c @ x`` under linear constraints.

    Args:
        c: Cost vector of length n.
        A_ub, b_ub: Inequality constraints ``A_ub @ x <= b_ub``.
        A_eq, b_eq: Equality constraints.
        lb: Lower bounds, scalar or length-n array; ``-np.inf`` marks a free side.
        ub: Upper bounds, scalar or array; ``None`` means unbounded above.
        method: Backend override; defaults to :func:`current_method`.

    Raises:
        LPError: when the program is infeasible or unbounded.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    lb = np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy()
    ub = np.full(n, np.inf) if ub is None else np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy()
    method = method or current_method()
    if method == "highs":
        return _solve_highs(c, A_ub, b_ub, A_eq, b_eq, lb, ub)
    if method == "simplex":
        return _solve_simplex(c, A_ub, b_ub, A_eq, b_eq, lb, ub)
    raise ValueError(f"unknown LP method {method!r}")


def _solve_highs(c, A_ub, b_ub, A_eq, b_eq, lb, ub) -> LPResult:
    from scipy.optimize import linprog

    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi) for lo, hi in zip(lb, ub)]
    res = linprog(
        c,
        A_ub=A_ub if A_ub.size else None,
        b_ub=b_ub if b_ub.size else None,
        A_eq=A_eq if A_eq.size else None,
        b_eq=b_eq if b_eq.size else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        raise LPError("infeasible", res.message)
    if res.status == 3:
        raise LPError("unbounded", res.message)
    if res.status != 0:
        raise LPError("failed", res.message)
    return LPResult(np.asarray(res.x, dtype=float), float(res.fun), "highs")


# --------------------------------------------------------------------------
# Dense simplex with Bland's rule


def _solve_simplex(c, A_ub, b_ub, A_eq, b_eq, lb, ub) -> LPResult:
    n = c.size
    # Column map from the original variables to nonnegative ones:
    # x = offset + T @ y, y >= 0.
    cols = []  # (original index, sign)
    offset = np.zeros(n)
    extra_ub_rows = []
    for v in range(n):
        lo, hi = lb[v], ub[v]
        if np.isfinite(lo):
            offset[v] = lo
            cols.append((v, 1.0))
            if np.isfinite(hi):
                extra_ub_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[v] = hi
            cols.append((v, -1.0))
        else:
            cols.append((v, 1.0))
            cols.append((v, -1.0))
    m_cols = len(cols)
    T = np.zeros((n, m_cols))
    for col, (v, s) in enumerate(cols):
        T[v, col] = s

    c_y = c @ T
    const = float(c @ offset)
    Aub_y = A_ub @ T
    bub_y = b_ub - A_ub @ offset
    if extra_ub_rows:
        rows = np.zeros((len(extra_ub_rows), m_cols))
        rhs = np.zeros(len(extra_ub_rows))
        for r, (col, bound) in enumerate(extra_ub_rows):
            rows[r, col] = 1.0
            rhs[r] = bound
        Aub_y = np.vstack([Aub_y, rows])
        bub_y = np.concatenate([bub_y, rhs])
    Aeq_y = A_eq @ T
    beq_y = b_eq - A_eq @ offset

    # Standard form with slacks: [Aub I; Aeq 0] z = b, z >= 0.
    m_ub, m_eq = Aub_y.shape[0], Aeq_y.shape[0]
    A = np.zeros((m_ub + m_eq, m_cols + m_ub))
    A[:m_ub, :m_cols] = Aub_y
    A[:m_ub, m_cols:] = np.eye(m_ub)
    A[m_ub:, :m_cols] = Aeq_y
    b = np.concatenate([bub_y, beq_y])
    cost = np.concatenate([c_y, np.zeros(m_ub)])

    z = _two_phase(cost, A, b)
    y = z[:m_cols]
    x = offset + T @ y
    return LPResult(x, float(c_y @ y) + const, "simplex")


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    col_vals = tab[:, col].copy()
    col_vals[row] = 0.0
    tab -= np.outer(col_vals, tab[row])


def _run_bland(tab: np.ndarray, basis: list[int], n_allowed: int, max_iter: int) -> None:
    # Objective row is the last row; reduced costs in tab[-1, :-1].
    m = len(basis)
    for _ in range(max_iter):
        red = tab[-1, :n_allowed]
        entering = np.flatnonzero(red < -TOL)
        if entering.size == 0:
            return
        col = int(entering[0])
        column = tab[:m, col]
        pos = column > TOL
        if not pos.any():
            raise LPError("unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + TOL * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(tab, row, col)
        basis[row] = col
    raise LPError("failed", "iteration limit reached")


def _two_phase(cost: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, n = A.shape
    A = A.copy()
    b = b.copy()
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    max_iter = 50_000 + 200 * (m + n)

    # Phase 1: artificials on every row.
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n : n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[-1, :n] = -A.sum(axis=0)
    tab[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _run_bland(tab, basis, n + m, max_iter)
    if -tab[-1, -1] > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
        raise LPError("infeasible")

    # Drive artificials out of the basis; drop redundant rows.
    keep = []
    for r in range(m):
        if basis[r] >= n:
            nz = np.flatnonzero(np.abs(tab[r, :n]) > TOL)
            if nz.size:
                _pivot(tab, r, int(nz[0]))
                basis[r] = int(nz[0])
                keep.append(r)
        else:
            keep.append(r)
    tab = np.vstack([tab[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
    basis = [basis[r] for r in keep]

    # Phase 2.
    tab[-1, :n] = cost
    tab[-1, -1] = 0.0
    for r, bvar in enumerate(basis):
        if tab[-1, bvar] != 0.0:
            tab[-1] -= tab[-1, bvar] * tab[r]
    _run_bland(tab, basis, n, max_iter)
    z = np.zeros(n)
    for r, bvar in enumerate(basis):
        z[bvar] = tab[r, -1]
    return np.maximum(z, 0.0)
