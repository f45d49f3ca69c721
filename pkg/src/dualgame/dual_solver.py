"""Recursive computation of the dual game's value with the auxiliary weight.

The dual value satisfies

    w_theta(x, Q; zeta) = (1 - theta_1) min_tau min_(x_ij) max_i sum_j w_theta+(x_ij, Q_j; zeta_j)

over splittings with ``sum_j x_ij = (x - theta_1 zeta * G^Q_(i tau)) / (1 - theta_1)``,
where ``zeta * G`` is the coordinatewise product. The minimum over player 2's
first-stage strategy tau is searched on a barycentric grid over ``Delta(J)^L``
followed by one local refinement pass. Each continuation value
``w_theta+(., Q_j; zeta_j)`` is represented by the exact conjugate of sampled
primal values, and the inner minimum over splittings is one linear program
(an infimal convolution).

Error accounting. Let ``R`` be the computed right-hand side.

* Conjugation: continuation models under-approximate their targets, so the true
  right-hand side at the returned tau exceeds ``R`` by at most ``conjugation``.
* tau-grid: the right-hand side is Lipschitz in tau with constant
  ``payoff_bound * max|zeta|`` (rowwise l1), hence the true minimum is at least
  ``R - tau_grid``.

The true value therefore lies in ``[R - tau_grid, R + conjugation]`` and
``error_bound`` is their sum. No x-grid is used, so that term is zero.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import game_core as gc
from .convex_tools import (
    ConcaveModel,
    ConvexModel,
    covering_radius,
    default_resolution,
    inf_convolution,
    simplex_grid,
    spread,
    upper_conjugate,
    zero_conjugate,
)
from .errors import InvariantError, ResourceCapError
from .game_core import AuxWeight, Evaluation, GameSpec, JointBelief
from .oracle import dual_game_value, value_only

DEFAULT_TAU_CAP = 20_000
_KEY_DIGITS = 12


def default_tau_resolution(J: int) -> int:
    return 8 if J <= 2 else 4


@dataclass(frozen=True, eq=False)
class DualState:
    x: np.ndarray
    Q: np.ndarray
    zeta: AuxWeight
    theta: Evaluation

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        Q = np.array(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != x.size:
            raise InvariantError(f"Q must be K x L with K = {x.size}")
        if np.any(Q < -gc.PROB_TOL) or np.any(np.abs(Q.sum(axis=1) - 1.0) > 1e-9):
            raise InvariantError("Q rows must lie in the simplex")
        if self.zeta.zeta.size != x.size:
            raise InvariantError("zeta must have one entry per type of player 1")
        x.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "Q", Q)

    @classmethod
    def root(cls, x, Q, theta: Evaluation) -> "DualState":
        return cls(x, Q, AuxWeight.ones(len(np.ravel(x))), theta)


@dataclass(frozen=True)
class ChildState:
    Q: np.ndarray
    zeta: AuxWeight
    prob: np.ndarray  # P(j | k), i.e. zeta_j / zeta where zeta > 0
    degenerate: bool


@dataclass(frozen=True, eq=False)
class DualSolution:
    state: DualState
    value: float
    tau: np.ndarray  # (L, J)
    splits: np.ndarray | None  # (I, J, K); None at a one-stage node
    targets: np.ndarray | None  # (I, K)
    children: tuple[ChildState, ...]
    error_bound: float
    errors: dict = field(default_factory=dict)
    candidates: int = 0

    @property
    def lower(self) -> float:
        """Certified lower bound on the true dual value."""
        return self.value - self.errors.get("tau_grid", 0.0)

    @property
    def upper(self) -> float:
        """Certified upper bound on the true dual value."""
        return self.value + self.errors.get("conjugation", 0.0)


@dataclass(frozen=True)
class NonRevealing:
    rhs: float
    recursive: float
    holds: bool
    equality: bool
    tau_bar: np.ndarray
    slack: float
    error_bound: float


# --------------------------------------------------------------------------
# Continuation models


class ModelCache:
    """Memo of continuation models keyed by rounded (Q, zeta, tail, resolution).

    Values are deterministic, so concurrent writers can only store equal
    models; the last write wins.
    """

    def __init__(self):
        self._store: dict = {}
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(Q, zeta, theta: Evaluation, resolution: int) -> tuple:
        r = lambda a: tuple(np.round(np.asarray(a, dtype=float).ravel(), _KEY_DIGITS))
        return (r(Q), r(zeta), r(theta.weights), resolution)

    def get(self, key):
        out = self._store.get(key)
        if out is None:
            self.misses += 1
        else:
            self.hits += 1
        return out

    def put(self, key, model):
        self._store[key] = model

    def __len__(self) -> int:
        return len(self._store)


def continuation_model(
    g: GameSpec, Q, zeta: AuxWeight, theta: Evaluation, resolution: int, cache: ModelCache | None = None
) -> ConvexModel:
    """Conjugate model of ``p -> v_theta(p (x) Q; zeta)`` sampled on the p-grid."""
    if not np.any(zeta.zeta):
        return zero_conjugate(g.K)
    key = ModelCache.key(Q, zeta.zeta, theta, resolution)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    Q = np.asarray(Q, dtype=float)
    f = ConcaveModel.from_function(
        lambda p: value_only(g, JointBelief.product(p, Q), theta, zeta),
        g.K, resolution, g.payoff_bound * zeta.max_abs,
    )
    model = upper_conjugate(f)
    if cache is not None:
        cache.put(key, model)
    return model


def children_of(Q: np.ndarray, zeta: AuxWeight, tau: np.ndarray) -> tuple[ChildState, ...]:
    """Per-j updated kernels and auxiliary weights after player 2 plays tau."""
    pjk = gc.prob_j_given_k(Q, tau)
    out = []
    for j in range(tau.shape[1]):
        Q_j, _ = gc.update_Q(Q, tau, j)
        z_j = AuxWeight(zeta.zeta * pjk[:, j])
        out.append(ChildState(Q_j, z_j, pjk[:, j].copy(), not np.any(z_j.zeta)))
    return tuple(out)


def split_targets(g: GameSpec, state: DualState, tau: np.ndarray) -> np.ndarray:
    """``(x - theta_1 zeta * G^Q_(i tau)) / (1 - theta_1)`` for every i, shape (I, K)."""
    th1 = state.theta.head
    G_Q = gc.conditional_payoffs(g, state.Q, tau)  # (I, K)
    return (state.x[None, :] - th1 * state.zeta.zeta[None, :] * G_Q) / (1.0 - th1)


# --------------------------------------------------------------------------
# tau search


def _tau_grid(L: int, J: int, resolution: int, cap: int) -> list[np.ndarray]:
    rows = simplex_grid(J, resolution)
    count = rows.shape[0] ** L
    if count > cap:
        raise ResourceCapError("tau-grid candidates", count, cap)
    return [np.array(c) for c in itertools.product(rows, repeat=L)]


def _refinements(tau: np.ndarray, resolution: int) -> list[np.ndarray]:
    """Moves of +-1/(2r) along simplex edges in every row, all combinations."""
    L, J = tau.shape
    step = 1.0 / (2 * resolution)
    per_row = []
    for l in range(L):
        opts = [tau[l]]
        for a in range(J):
            for b in range(J):
                if a == b:
                    continue
                row = tau[l].copy()
                row[a] += step
                row[b] -= step
                if row[b] >= -1e-15:
                    opts.append(np.clip(row, 0.0, None))
        per_row.append(opts)
    out = [np.array(c) for c in itertools.product(*per_row)]
    return out[1:]  # the first combination is tau itself


class _Evaluator:
    """Evaluates the right-hand side at a tau, sharing continuation models."""

    def __init__(self, g: GameSpec, state: DualState, p_resolution: int, cache: ModelCache):
        self.g = g
        self.state = state
        self.tail = state.theta.tail()
        self.r = p_resolution
        self.cache = cache

    def __call__(self, tau: np.ndarray):
        st = self.state
        kids = children_of(st.Q, st.zeta, tau)
        models = [continuation_model(self.g, c.Q, c.zeta, self.tail, self.r, self.cache) for c in kids]
        targets = split_targets(self.g, st, tau)
        vals, splits = [], []
        for z in targets:
            res = inf_convolution(models, z)
            vals.append(res.value)
            splits.append(res.splits)
        scale = 1.0 - st.theta.head
        return scale * max(vals), np.array(splits), targets, kids


def dual_base(g: GameSpec, state: DualState) -> DualSolution:
    """One-stage dual value, exactly, by a single linear program.

    ``w(x) = min_tau max_(k, i) [zeta^k sum_(l, j) Q(l|k) tau[l, j] G[k, l, i, j] - x^k]``.
    """
    if not state.theta.is_terminal:
        raise InvariantError("dual_base needs a one-stage evaluation")
    value, s2 = dual_game_value(g, state.x, state.Q, state.theta, state.zeta)
    tau = s2.at(())
    return DualSolution(state, value, tau, None, None, (), 0.0, {"conjugation": 0.0, "tau_grid": 0.0, "x_grid": 0.0})


def dual_recursive(
    g: GameSpec,
    state: DualState,
    tau_resolution: int | None = None,
    p_resolution: int | None = None,
    refine: bool = True,
    cache: ModelCache | None = None,
    tau_cap: int = DEFAULT_TAU_CAP,
) -> DualSolution:
    """Right-hand side of the dual recursive formula, with its minimizers.

    Ties between tau candidates go to the earliest in lexicographic grid order.
    """
    if state.theta.is_terminal:
        return dual_base(g, state)
    K, L, I, J = g.shape
    if state.Q.shape != (K, L):
        raise InvariantError("Q shape does not match the game")
    r_tau = default_tau_resolution(J) if tau_resolution is None else tau_resolution
    r_p = default_resolution(K) if p_resolution is None else p_resolution
    cache = ModelCache() if cache is None else cache
    ev = _Evaluator(g, state, r_p, cache)

    best = None
    n_cand = 0
    for tau in _tau_grid(L, J, r_tau, tau_cap):
        out = ev(tau)
        n_cand += 1
        if best is None or out[0] < best[1][0] - 1e-12:
            best = (tau, out)
    if refine:
        for tau in _refinements(best[0], r_tau):
            out = ev(tau)
            n_cand += 1
            if out[0] < best[1][0] - 1e-12:
                best = (tau, out)

    tau, (value, splits, targets, kids) = best
    lip = g.payoff_bound * state.zeta.max_abs
    mesh_p = covering_radius(K, r_p)
    conj = (1.0 - state.theta.head) * max((lip + spread(z)) * mesh_p for z in targets)
    tau_err = lip * covering_radius(J, r_tau)
    errors = {"conjugation": conj, "tau_grid": tau_err, "x_grid": 0.0}
    return DualSolution(state, value, tau, splits, targets, kids, conj + tau_err, errors, n_cand)


def nonrevealing_bound(
    g: GameSpec,
    x,
    Q,
    theta: Evaluation,
    zeta: AuxWeight | None = None,
    tau_resolution: int | None = None,
    p_resolution: int | None = None,
    recursive: DualSolution | None = None,
    cache: ModelCache | None = None,
) -> NonRevealing:
    """Right-hand side restricted to type-independent first moves.

    With ``tau[l] = tau_bar`` for all l the kernel is unchanged and the split
    minimum collapses (by convexity and homogeneity) to
    ``(1 - theta_1) min_tau_bar max_i w_theta+(target_i, Q; zeta)``.
    """
    state = DualState(x, Q, AuxWeight.ones(len(np.ravel(x))) if zeta is None else zeta, theta)
    if theta.is_terminal:
        raise InvariantError("the non-revealing bound needs at least two stages")
    K, L, I, J = g.shape
    r_tau = default_tau_resolution(J) if tau_resolution is None else tau_resolution
    r_p = default_resolution(K) if p_resolution is None else p_resolution
    cache = ModelCache() if cache is None else cache
    if recursive is None:
        recursive = dual_recursive(g, state, r_tau, r_p, cache=cache)
    model = continuation_model(g, state.Q, state.zeta, theta.tail(), r_p, cache)
    best_val, best_tau = np.inf, None
    for row in simplex_grid(J, r_tau):
        tau = np.tile(row, (L, 1))
        targets = split_targets(g, state, tau)
        val = (1.0 - theta.head) * max(model(z) for z in targets)
        if val < best_val - 1e-12:
            best_val, best_tau = val, row
    slack = best_val - recursive.value
    tol = recursive.error_bound + 1e-9
    return NonRevealing(
        rhs=best_val,
        recursive=recursive.value,
        holds=bool(recursive.value <= best_val + 1e-9),
        equality=bool(abs(slack) <= tol),
        tau_bar=best_tau,
        slack=slack,
        error_bound=recursive.error_bound,
    )


def independent_recursive(
    g: GameSpec,
    x,
    q,
    theta: Evaluation,
    tau_resolution: int | None = None,
    p_resolution: int | None = None,
    refine: bool = True,
    cache: ModelCache | None = None,
    tau_cap: int = DEFAULT_TAU_CAP,
) -> DualSolution:
    """Independent-prior specialization with weighted splittings.

    Solves ``(1 - theta_1) min_tau max_i min sum_j tau_bar(j) w_theta+(y_ij, q_j)``
    subject to ``sum_j tau_bar(j) y_ij = target_i``, where ``tau_bar`` is the
    marginal of ``q (x) tau``. No auxiliary weight is carried. The returned
    splits are the ``y_ij``; ``x_ij = tau_bar(j) y_ij``.
    """
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float).ravel()
    K, L, I, J = g.shape
    if q.size != L or np.any(q < -gc.PROB_TOL) or abs(q.sum() - 1.0) > 1e-9:
        raise InvariantError("q must be a distribution over player 2's types")
    Q = np.tile(q, (K, 1))
    state = DualState.root(x, Q, theta)
    if theta.is_terminal:
        return dual_base(g, state)
    r_tau = default_tau_resolution(J) if tau_resolution is None else tau_resolution
    r_p = default_resolution(K) if p_resolution is None else p_resolution
    cache = ModelCache() if cache is None else cache
    tail = theta.tail()
    ones = AuxWeight.ones(K)

    def evaluate(tau):
        tau_bar = q @ tau
        models = []
        kids = []
        for j in range(J):
            if tau_bar[j] > 0:
                q_j = q * tau[:, j] / tau_bar[j]
            else:
                q_j = q.copy()
            Q_j = np.tile(q_j, (K, 1))
            kids.append(ChildState(Q_j, AuxWeight(np.full(K, tau_bar[j])), np.full(K, tau_bar[j]), tau_bar[j] <= 0))
            models.append(continuation_model(g, Q_j, ones, tail, r_p, cache) if tau_bar[j] > 0 else zero_conjugate(K))
        targets = split_targets(g, state, tau)
        vals, splits = [], []
        for z in targets:
            res = inf_convolution(models, z, weights=tau_bar)
            vals.append(res.value)
            splits.append(res.splits)
        return (1.0 - theta.head) * max(vals), np.array(splits), targets, tuple(kids)

    best = None
    n_cand = 0
    for tau in _tau_grid(L, J, r_tau, tau_cap):
        out = evaluate(tau)
        n_cand += 1
        if best is None or out[0] < best[1][0] - 1e-12:
            best = (tau, out)
    if refine:
        for tau in _refinements(best[0], r_tau):
            out = evaluate(tau)
            n_cand += 1
            if out[0] < best[1][0] - 1e-12:
                best = (tau, out)
    tau, (value, splits, targets, kids) = best
    lip = g.payoff_bound
    conj = (1.0 - theta.head) * max((lip + spread(z)) * covering_radius(K, r_p) for z in targets)
    tau_err = lip * covering_radius(J, r_tau)
    errors = {"conjugation": conj, "tau_grid": tau_err, "x_grid": 0.0}
    return DualSolution(state, value, tau, splits, targets, kids, conj + tau_err, errors, n_cand)
