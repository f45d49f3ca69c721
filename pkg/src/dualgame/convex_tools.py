"""Piecewise-linear convex analysis on the probability simplex.

A concave function on the simplex is represented by samples on a barycentric
grid (:class:`ConcaveModel`). Its upper conjugate

    f#(x) = sup_p f(p) - <p, x>

is then exactly the maximum of one affine piece per sample (:class:`ConvexModel`),
and every downstream optimization is a linear program. Approximation error
against the underlying true function is tracked through the sample mesh and an
l1-Lipschitz constant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Callable, Sequence

import numpy as np

from .errors import InvariantError, LPError
from .lp import solve_lp

FEAS_TOL = 1e-9


# --------------------------------------------------------------------------
# Grids


@lru_cache(maxsize=None)
def _compositions(K: int, r: int) -> tuple[tuple[int, ...], ...]:
    if K == 1:
        return ((r,),)
    out = []
    for first in range(r, -1, -1):
        for rest in _compositions(K - 1, r - first):
            out.append((first,) + rest)
    return tuple(out)


def simplex_grid(K: int, resolution: int) -> np.ndarray:
    """All points of the simplex in R^K whose coordinates are multiples of 1/resolution.

    Points are listed in reverse lexicographic order of their integer coordinates,
    starting from the first vertex.
    """
    if K < 1 or resolution < 1:
        raise ValueError("need K >= 1 and resolution >= 1")
    pts = np.array(_compositions(K, resolution), dtype=float) / resolution
    pts.setflags(write=False)
    return pts


def grid_size(K: int, resolution: int) -> int:
    return comb(resolution + K - 1, K - 1)


def covering_radius(K: int, resolution: int) -> float:
    """l1 distance within which every simplex point has a grid point.

    Largest-remainder rounding moves at most ``2 floor(K/2) ceil(K/2) / (K r)``
    of mass.
    """
    if K == 1:
        return 0.0
    return 2.0 * (K // 2) * ((K + 1) // 2) / (K * resolution)


def default_resolution(K: int) -> int:
    return 1 if K == 1 else 16 if K == 2 else 8


def spread(x: np.ndarray) -> float:
    """``min_c ||x - c 1||_inf``, the part of x that conjugation error sees."""
    x = np.asarray(x, dtype=float)
    return 0.5 * float(x.max() - x.min()) if x.size else 0.0


# --------------------------------------------------------------------------
# Models


@dataclass(frozen=True, eq=False)
class ConcaveModel:
    """Samples ``(points[g], values[g])`` of a concave function on the simplex.

    ``lipschitz`` is an l1-Lipschitz constant of the underlying function and
    ``mesh`` the l1 covering radius of the sample points.
    """

    points: np.ndarray
    values: np.ndarray
    lipschitz: float
    mesh: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        vals = np.array(self.values, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InvariantError("model needs at least one sample")
        if pts.shape[0] != vals.size:
            raise InvariantError("one value per sample point required")
        if np.any(pts < -FEAS_TOL) or np.any(np.abs(pts.sum(axis=1) - 1) > 1e-9):
            raise InvariantError("sample points must lie in the simplex")
        if self.lipschitz < 0 or self.mesh < 0:
            raise InvariantError("lipschitz and mesh must be nonnegative")
        pts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @property
    def K(self) -> int:
        return self.points.shape[1]

    @classmethod
    def from_function(
        cls, fn: Callable[[np.ndarray], float], K: int, resolution: int, lipschitz: float
    ) -> "ConcaveModel":
        pts = simplex_grid(K, resolution)
        vals = np.array([fn(p) for p in pts])
        return cls(pts, vals, lipschitz, covering_radius(K, resolution))

    def scaled(self, alpha: float) -> "ConcaveModel":
        return ConcaveModel(self.points, alpha * self.values, abs(alpha) * self.lipschitz, self.mesh)

    def lipschitz_excess(self) -> float:
        """Largest amount by which a pairwise sample slope exceeds ``lipschitz``."""
        d = np.abs(self.points[:, None, :] - self.points[None, :, :]).sum(axis=2)
        dv = np.abs(self.values[:, None] - self.values[None, :])
        return float(np.max(dv - self.lipschitz * d))

    def envelope(self, p) -> float:
        """Least concave majorant of the samples, evaluated at p."""
        return lower_conjugate(upper_conjugate(self), p)


@dataclass(frozen=True, eq=False)
class ConvexModel:
    """``w(x) = max_g (intercepts[g] + slopes[g] @ x)``.

    When built by :func:`upper_conjugate` every slope is minus a simplex point,
    so ``w(x + c 1) = w(x) - c``.
    """

    slopes: np.ndarray
    intercepts: np.ndarray
    lipschitz: float = 0.0
    mesh: float = 0.0

    def __post_init__(self):
        s = np.array(self.slopes, dtype=float)
        b = np.array(self.intercepts, dtype=float).ravel()
        if s.ndim != 2 or s.shape[0] == 0 or s.shape[0] != b.size:
            raise InvariantError("convex model needs matching slopes and intercepts")
        s.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "slopes", s)
        object.__setattr__(self, "intercepts", b)

    @property
    def K(self) -> int:
        return self.slopes.shape[1]

    @property
    def simplex_supported(self) -> bool:
        return bool(np.all(np.abs(self.slopes.sum(axis=1) + 1.0) <= 1e-12) and np.all(self.slopes <= FEAS_TOL))

    def __call__(self, x) -> float:
        return float(np.max(self.intercepts + self.slopes @ np.asarray(x, dtype=float)))

    def active_point(self, x) -> np.ndarray:
        """Simplex point attaining the max at x (a minus-subgradient)."""
        g = int(np.argmax(self.intercepts + self.slopes @ np.asarray(x, dtype=float)))
        return -self.slopes[g]

    def error_bound(self, x) -> float:
        """Bound on ``true_conjugate(x) - self(x)`` (never negative)."""
        return (self.lipschitz + spread(x)) * self.mesh

    def scaled_intercepts(self, alpha: float) -> "ConvexModel":
        return ConvexModel(self.slopes, alpha * self.intercepts, alpha * self.lipschitz, self.mesh)


@dataclass(frozen=True)
class Supergradient:
    x: np.ndarray
    value: float


@dataclass(frozen=True)
class InfConvolution:
    value: float
    splits: np.ndarray


# --------------------------------------------------------------------------
# Operations


def upper_conjugate(f: ConcaveModel) -> ConvexModel:
    """Exact conjugate of the sampled function: one piece ``f(p_g) - <p_g, x>`` per sample.

    It under-approximates the conjugate of the true function by at most
    ``(lipschitz + spread(x)) * mesh`` at x; see :meth:`ConvexModel.error_bound`.
    """
    if f.points.shape[0] == 0:
        raise InvariantError("empty model")
    return ConvexModel(-f.points, f.values, f.lipschitz, f.mesh)


def zero_conjugate(K: int) -> ConvexModel:
    """Conjugate of the zero function: ``x -> -min_k x^k``."""
    return ConvexModel(-np.eye(K), np.zeros(K))


def lower_conjugate(w: ConvexModel, p) -> float:
    """``inf_x w(x) + <x, p>`` for a simplex-supported model.

    Solved through the dual program ``max sum_g lam_g b_g`` over convex
    combinations of the slope points that reproduce p. When p lies outside their
    convex hull the infimum is minus infinity and :class:`LPError` is raised.
    """
    p = np.asarray(p, dtype=float)
    pts = -w.slopes
    n = pts.shape[0]
    A_eq = np.vstack([pts.T, np.ones((1, n))])
    b_eq = np.concatenate([p, [1.0]])
    try:
        res = solve_lp(-w.intercepts, A_eq=A_eq, b_eq=b_eq)
    except LPError as exc:
        if exc.status == "infeasible":
            raise LPError("unbounded", "point outside the hull of the model's slopes") from None
        raise
    return -res.fun


def supergradient(f: ConcaveModel, p) -> Supergradient:
    """Minimal-norm supergradient of the sampled envelope at p.

    Returns x with ``fhat(p) + <x, p_g - p> >= f(p_g)`` for every sample, where
    ``fhat`` is the least concave majorant. Among all such x the one of least
    Euclidean norm is returned, which is also orthogonal to the all-ones vector.
    """
    p = np.asarray(p, dtype=float)
    K = f.K
    top = f.envelope(p)
    if K == 1:
        return Supergradient(np.zeros(1), top)
    # Orthonormal basis of the sum-zero hyperplane.
    basis = np.linalg.svd(np.eye(K) - 1.0 / K)[0][:, : K - 1]
    A = (f.points - p) @ basis
    r = f.values - top
    keep = np.linalg.norm(A, axis=1) > 1e-14
    A, r = A[keep], r[keep]
    d = K - 1
    n = A.shape[0]

    def feasible(y):
        return bool(np.all(A @ y >= r - FEAS_TOL * max(1.0, np.abs(r).max(initial=0.0))))

    best = None
    if feasible(np.zeros(d)):
        best = np.zeros(d)
    else:
        n_subsets = sum(comb(n, s) for s in range(1, d + 1))
        if n_subsets <= 200_000:
            for size in range(1, d + 1):
                for S in itertools.combinations(range(n), size):
                    AS = A[list(S)]
                    gram = AS @ AS.T
                    if abs(np.linalg.det(gram)) < 1e-14:
                        continue
                    y = AS.T @ np.linalg.solve(gram, r[list(S)])
                    if (best is None or y @ y < best @ best - 1e-15) and feasible(y):
                        best = y
        else:
            best = _min_norm_qp(A, r)
    if best is None:
        raise InvariantError("no supporting plane found; samples are not consistent with concavity")
    return Supergradient(basis @ best, top)


def _min_norm_qp(A: np.ndarray, r: np.ndarray) -> np.ndarray:
    from scipy.optimize import minimize

    res = minimize(
        lambda y: y @ y,
        np.linalg.lstsq(A, r, rcond=None)[0],
        jac=lambda y: 2 * y,
        constraints=[{"type": "ineq", "fun": lambda y: A @ y - r, "jac": lambda y: A}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    return res.x


def inf_convolution(ws: Sequence[ConvexModel], z, weights: Sequence[float] | None = None) -> InfConvolution:
    """``min sum_j w_j(x_j)`` over splittings with ``sum_j x_j = z``.

    With ``weights`` a the program is ``min sum_j a_j w_j(y_j)`` subject to
    ``sum_j a_j y_j = z`` (models with ``a_j = 0`` are dropped and receive a zero
    split). The returned splits are the ``x_j`` (or ``y_j`` when weighted). The
    minimizing splitting is made unique up to the LP vertex by fixing the
    coordinate sum of every split but the first.
    """
    z = np.asarray(z, dtype=float)
    J = len(ws)
    if J == 0:
        raise InvariantError("inf_convolution needs at least one model")
    if weights is None:
        a = np.ones(J)
    else:
        a = np.asarray(weights, dtype=float)
        if np.any(a < 0):
            raise InvariantError("weights must be nonnegative")
    active = [j for j in range(J) if a[j] > 0]
    if not active:
        raise InvariantError("all weights are zero")
    K = z.size
    for j in active:
        if ws[j].K != K:
            raise InvariantError("model dimension mismatch")
        if not ws[j].simplex_supported:
            raise InvariantError("inf_convolution needs simplex-supported models")
    models = [ws[j].scaled_intercepts(a[j]) for j in active]
    n_act = len(models)
    splits = np.zeros((J, K))

    if n_act == 1:
        j = active[0]
        splits[j] = z / a[j]
        return InfConvolution(models[0](z), splits)

    nx = n_act * K
    nvar = nx + n_act
    rows, rhs = [], []
    for jj, m in enumerate(models):
        for s, b in zip(m.slopes, m.intercepts):
            row = np.zeros(nvar)
            row[jj * K : (jj + 1) * K] = s
            row[nx + jj] = -1.0
            rows.append(row)
            rhs.append(-b)
    eq_rows, eq_rhs = [], []
    for k in range(K):
        row = np.zeros(nvar)
        row[[jj * K + k for jj in range(n_act)]] = 1.0
        eq_rows.append(row)
        eq_rhs.append(z[k])
    for jj in range(1, n_act):
        row = np.zeros(nvar)
        row[jj * K : (jj + 1) * K] = 1.0
        eq_rows.append(row)
        eq_rhs.append(z.sum() / n_act)
    c = np.concatenate([np.zeros(nx), np.ones(n_act)])
    res = solve_lp(c, np.array(rows), np.array(rhs), np.array(eq_rows), np.array(eq_rhs), lb=-np.inf)
    xs = res.x[:nx].reshape(n_act, K)
    # Put the LP residual on the first split so the constraint holds to rounding.
    xs[0] += z - xs.sum(axis=0)
    value = float(sum(m(x) for m, x in zip(models, xs)))
    for jj, j in enumerate(active):
        splits[j] = xs[jj] / a[j]
    return InfConvolution(value, splits)


def scale_check(f: ConcaveModel, alpha: float, x, tol: float = 1e-9) -> bool:
    """Check ``(alpha f)#(x) == alpha f#(x / alpha)`` on the sampled models."""
    if alpha <= 0:
        raise InvariantError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    lhs = upper_conjugate(f.scaled(alpha))(x)
    rhs = alpha * upper_conjugate(f)(x / alpha)
    return abs(lhs - rhs) <= tol * max(1.0, abs(lhs))
