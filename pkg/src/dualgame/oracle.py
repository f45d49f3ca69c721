"""Ground-truth computations at desk scale.

Two exact routes to the value of the repeated game are provided:

* ``method="sequence"`` (default) solves the sequence-form linear program, whose
  size is linear in the number of public histories;
* ``method="normal"`` enumerates reduced pure strategies and solves the
  normal-form matrix game. It is exponentially larger and guarded by a cap.

The exact value of the dual game is computed by a separate program built from
the dual game's definition, so that conjugate-based quantities can be checked
against it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import game_core as gc
from .convex_tools import ConcaveModel, covering_radius, default_resolution, simplex_grid, spread, upper_conjugate
from .errors import InvariantError, ResourceCapError
from .game_core import AuxWeight, BehaviorStrategy, Evaluation, GameSpec, JointBelief
from .lp import solve_lp

DEFAULT_STRATEGY_CAP = 4096
DEFAULT_GRID_CAP = 10**7


@dataclass(frozen=True, eq=False)
class PrimalSolution:
    value: float
    s1: BehaviorStrategy
    s2: BehaviorStrategy
    method: str
    # Normal-form only: mixed strategies over enumerated reduced plans.
    mixed1: np.ndarray | None = field(default=None, repr=False)
    mixed2: np.ndarray | None = field(default=None, repr=False)
    gap: float = 0.0


@dataclass(frozen=True, eq=False)
class BestResponse:
    value: float
    reply: BehaviorStrategy


@dataclass(frozen=True)
class RecursionCheck:
    value: float
    rhs_maxmin: float
    rhs_minmax: float
    bound: float
    exact: bool
    passed: bool
    orderings_agree: bool
    grid_nodes: int


@dataclass(frozen=True)
class DirectDual:
    value: float
    error_bound: float
    model: ConcaveModel = field(repr=False)


def swap_game(g: GameSpec) -> GameSpec:
    """Zero-sum role swap: player 2 becomes the maximizer."""
    return GameSpec(-np.transpose(g.payoff, (1, 0, 3, 2)))


# --------------------------------------------------------------------------
# Sequence form


class _SequenceIndex:
    """Variable layout for the minimizer's sequence-form program."""

    def __init__(self, K: int, L: int, I: int, J: int, horizon: int):
        self.K, self.L, self.I, self.J, self.horizon = K, L, I, J, horizon
        self.stages = [list(gc.histories_at(I, J, m)) for m in range(1, horizon + 1)]
        self.hist = [h for stage in self.stages for h in stage]
        self.hidx = {h: n for n, h in enumerate(self.hist)}
        H = len(self.hist)
        self.n_rho = L * H * J
        self.n_V = K * H

    def rho(self, l: int, h, j: int) -> int:
        return (l * len(self.hist) + self.hidx[h]) * self.J + j

    def V(self, k: int, h) -> int:
        return self.n_rho + k * len(self.hist) + self.hidx[h]


def _minimizer_program(W: np.ndarray, mass: np.ndarray, theta: Evaluation, x: np.ndarray | None):
    """Sequence-form LP of the minimizer's problem.

    ``W[k, l, i, j]`` are stage payoffs and ``mass[k, l]`` the weight of each type
    pair. The maximizer's best-response value for type k after history h is the
    variable ``V_k(h)`` (unnormalized). With ``x is None`` the objective is
    ``sum_k V_k(())``; otherwise it is ``max_k V_k(()) - x^k`` (the dual game).
    Returns the optimal value and the realization plan ``rho``.
    """
    K, L, I, J = W.shape
    n = theta.horizon
    ix = _SequenceIndex(K, L, I, J, n)
    H = len(ix.hist)
    nvar = ix.n_rho + ix.n_V + (1 if x is not None else 0)

    A_ub = np.zeros((K * H * I + (K if x is not None else 0), nvar))
    b_ub = np.zeros(A_ub.shape[0])
    r = 0
    for m, stage in enumerate(ix.stages):
        w_m = theta.weights[m]
        for h in stage:
            for k in range(K):
                for i in range(I):
                    A_ub[r, ix.V(k, h)] = -1.0
                    for l in range(L):
                        for j in range(J):
                            A_ub[r, ix.rho(l, h, j)] += w_m * mass[k, l] * W[k, l, i, j]
                    if m + 1 < n:
                        for j in range(J):
                            A_ub[r, ix.V(k, h + ((i, j),))] += 1.0
                    r += 1
    c = np.zeros(nvar)
    if x is None:
        for k in range(K):
            c[ix.V(k, ())] = 1.0
    else:
        s = nvar - 1
        c[s] = 1.0
        for k in range(K):
            A_ub[r, ix.V(k, ())] = 1.0
            A_ub[r, s] = -1.0
            b_ub[r] = x[k]
            r += 1

    # Realization-plan constraints.
    eq_rows = []
    eq_rhs = []
    for l in range(L):
        for h in ix.hist:
            row = np.zeros(nvar)
            for j in range(J):
                row[ix.rho(l, h, j)] = 1.0
            if h:
                parent, (_, j_last) = h[:-1], h[-1]
                row[ix.rho(l, parent, j_last)] = -1.0
                eq_rhs.append(0.0)
            else:
                eq_rhs.append(1.0)
            eq_rows.append(row)
    lb = np.concatenate([np.zeros(ix.n_rho), np.full(nvar - ix.n_rho, -np.inf)])
    res = solve_lp(c, A_ub, b_ub, np.array(eq_rows), np.array(eq_rhs), lb=lb)
    rho = res.x[: ix.n_rho].reshape(L, H, J)
    return res.fun, rho, ix


def _behavior_from_plan(rho: np.ndarray, ix: _SequenceIndex, owner: int) -> BehaviorStrategy:
    L, _, J = rho.shape
    table = {}
    for n, h in enumerate(ix.hist):
        mat = rho[:, n, :].clip(min=0.0)
        tot = mat.sum(axis=1, keepdims=True)
        safe = np.where(tot > 1e-12, tot, 1.0)
        mat = np.where(tot > 1e-12, mat / safe, 1.0 / J)
        table[h if owner == 2 else tuple((b, a) for a, b in h)] = mat
    return BehaviorStrategy(L, J, ix.horizon, table)


def _sequence_solution(g: GameSpec, pi: JointBelief, theta: Evaluation, zeta: np.ndarray) -> PrimalSolution:
    W = zeta[:, None, None, None] * g.payoff
    upper, rho2, ix2 = _minimizer_program(W, pi.pi, theta, None)
    s2 = _behavior_from_plan(rho2, ix2, owner=2)
    # Player 1's side: minimize the swapped (negated, transposed) game.
    W1 = -np.transpose(W, (1, 0, 3, 2))
    neg_lower, rho1, ix1 = _minimizer_program(W1, pi.pi.T, theta, None)
    s1 = _behavior_from_plan(rho1, ix1, owner=1)
    lower = -neg_lower
    return PrimalSolution(0.5 * (upper + lower), s1, s2, "sequence", gap=upper - lower)


# --------------------------------------------------------------------------
# Reduced normal form


@lru_cache(maxsize=None)
def _reduced_plans(n_own: int, n_other: int, horizon: int, owner: int) -> tuple[dict, ...]:
    """All reduced pure plans: maps from own-consistent histories to an action."""

    def extend(prefix, m):
        if m == horizon:
            return [{}]
        plans = []
        for a in range(n_own):
            subs_per_other = []
            for b in range(n_other):
                pair = (a, b) if owner == 1 else (b, a)
                subs_per_other.append(extend(prefix + (pair,), m + 1))
            for combo in itertools.product(*subs_per_other):
                plan = {prefix: a}
                for sub in combo:
                    plan.update(sub)
                plans.append(plan)
        return plans

    return tuple(extend((), 0))


def reduced_plan_count(n_own: int, n_other: int, horizon: int) -> int:
    return n_own ** sum(n_other**m for m in range(horizon))


def _pure_path_payoff(W_kl: np.ndarray, plan1: dict, plan2: dict, theta: Evaluation) -> float:
    h: gc.History = ()
    total = 0.0
    for m in range(theta.horizon):
        i, j = plan1[h], plan2[h]
        total += theta.weights[m] * W_kl[i, j]
        h = h + ((i, j),)
    return total


def _plan_behavior(plans, mix_per_type: list[np.ndarray], n_own: int, n_other: int, horizon: int, owner: int) -> BehaviorStrategy:
    I, J = (n_own, n_other) if owner == 1 else (n_other, n_own)
    table = {}
    n_types = len(mix_per_type)
    for h in gc.all_histories(I, J, horizon):
        mat = np.zeros((n_types, n_own))
        for t, mix in enumerate(mix_per_type):
            for plan, w in zip(plans, mix):
                if w <= 0 or h not in plan:
                    continue
                mat[t, plan[h]] += w
        tot = mat.sum(axis=1, keepdims=True)
        mat = np.where(tot > 1e-12, mat / np.where(tot > 1e-12, tot, 1.0), 1.0 / n_own)
        table[h] = mat
    return BehaviorStrategy(n_types, n_own, horizon, table)


def _solve_matrix_game(A: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Value and optimal mixtures of the matrix game A (row player maximizes)."""
    m, n = A.shape
    # Row player: max v s.t. A^T x >= v, sum x = 1.
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A.T, np.ones((n, 1))])
    res = solve_lp(c, A_ub, np.zeros(n), np.hstack([np.ones((1, m)), [[0.0]]]), [1.0],
                   lb=np.concatenate([np.zeros(m), [-np.inf]]))
    x, v_low = res.x[:m], -res.fun
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([A, -np.ones((m, 1))])
    res = solve_lp(c, A_ub, np.zeros(m), np.hstack([np.ones((1, n)), [[0.0]]]), [1.0],
                   lb=np.concatenate([np.zeros(n), [-np.inf]]))
    y, v_up = res.x[:n], res.fun
    return 0.5 * (v_low + v_up), x, y


def _normal_solution(g, pi, theta, zeta, cap) -> PrimalSolution:
    K, L, I, J = g.shape
    n = theta.horizon
    c1 = reduced_plan_count(I, J, n) ** K
    c2 = reduced_plan_count(J, I, n) ** L
    if c1 > cap:
        raise ResourceCapError("player 1 reduced pure strategies", c1, cap)
    if c2 > cap:
        raise ResourceCapError("player 2 reduced pure strategies", c2, cap)
    plans1 = _reduced_plans(I, J, n, 1)
    plans2 = _reduced_plans(J, I, n, 2)
    n1, n2 = len(plans1), len(plans2)
    W = zeta[:, None, None, None] * g.payoff
    # Build the joint matrix as a sum of per-(k, l) blocks broadcast along type axes.
    shape = (n1,) * K + (n2,) * L
    A = np.zeros(shape)
    for k in range(K):
        for l in range(L):
            if pi.pi[k, l] == 0:
                continue
            M = np.array([[_pure_path_payoff(W[k, l], a, b, theta) for b in plans2] for a in plans1])
            idx = [1] * (K + L)
            idx[k] = n1
            idx[K + l] = n2
            A = A + pi.pi[k, l] * M.reshape(idx)
    A = A.reshape(n1**K, n2**L)
    value, x, y = _solve_matrix_game(A)
    xr = x.reshape((n1,) * K)
    yr = y.reshape((n2,) * L)
    marg1 = [xr.sum(axis=tuple(a for a in range(K) if a != k)) for k in range(K)]
    marg2 = [yr.sum(axis=tuple(a for a in range(L) if a != l)) for l in range(L)]
    s1 = _plan_behavior(plans1, marg1, I, J, n, owner=1)
    s2 = _plan_behavior(plans2, marg2, J, I, n, owner=2)
    return PrimalSolution(value, s1, s2, "normal", mixed1=x, mixed2=y)


# --------------------------------------------------------------------------
# Public operations


def primal_value(
    g: GameSpec,
    pi: JointBelief,
    theta: Evaluation,
    zeta: AuxWeight | None = None,
    method: str = "sequence",
    strategy_cap: int = DEFAULT_STRATEGY_CAP,
) -> PrimalSolution:
    """Exact value and optimal behavior strategies of the (zeta-weighted) repeated game."""
    if pi.pi.shape != (g.K, g.L):
        raise InvariantError("prior shape does not match the game")
    z = np.ones(g.K) if zeta is None else zeta.zeta
    if method == "sequence":
        return _sequence_solution(g, pi, theta, z)
    if method == "normal":
        return _normal_solution(g, pi, theta, z, strategy_cap)
    raise ValueError(f"unknown method {method!r}")


def value_only(g: GameSpec, pi: JointBelief, theta: Evaluation, zeta: AuxWeight | None = None) -> float:
    """Exact value from a single sequence-form program (no player-1 strategy)."""
    z = np.ones(g.K) if zeta is None else zeta.zeta
    W = z[:, None, None, None] * g.payoff
    return _minimizer_program(W, pi.pi, theta, None)[0]


def truncated_value(g: GameSpec, pi: JointBelief, weights, n: int, zeta: AuxWeight | None = None) -> tuple[float, float]:
    """Value of the game truncated to ``n`` stages and its error bound.

    Returns ``(rho, eps)`` with ``|v - rho| <= eps = payoff_bound * max|zeta| * m``,
    m being the discarded weight.
    """
    theta, m = Evaluation.truncate(weights, n)
    zmax = 1.0 if zeta is None else zeta.max_abs
    rho = (1.0 - m) * primal_value(g, pi, theta, zeta).value
    return rho, g.payoff_bound * zmax * m


def best_response_value(
    g: GameSpec,
    pi: JointBelief,
    theta: Evaluation,
    fixed: BehaviorStrategy,
    zeta: AuxWeight | None = None,
    history_cap: int = gc.DEFAULT_HISTORY_CAP,
) -> BestResponse:
    """Player 1's best-response payoff against a fixed player-2 strategy.

    Solved exactly by backward induction on each type's decision tree, with
    player 2's mixing integrated out.
    """
    K, L, I, J = g.shape
    n = theta.horizon
    gc.check_history_budget(I, J, n, history_cap)
    z = np.ones(K) if zeta is None else zeta.zeta
    reply: dict = {}

    def rec(k: int, h, w: np.ndarray, m: int) -> float:
        tau = fixed.at(h)  # (L, J)
        wt = w[:, None] * tau  # mass on (l, j)
        best_val, best_i = -np.inf, 0
        for i in range(I):
            val = theta.weights[m] * z[k] * float(np.sum(wt * g.payoff[k, :, i, :]))
            if m + 1 < n:
                for j in range(J):
                    child = wt[:, j]
                    val += rec(k, h + ((i, j),), child, m + 1)
            if val > best_val + 1e-12:
                best_val, best_i = val, i
        reply.setdefault(h, np.zeros((K, I)))[k, best_i] = 1.0
        return best_val

    total = sum(rec(k, (), pi.pi[k].astype(float), 0) for k in range(K))
    return BestResponse(total, BehaviorStrategy(K, I, n, reply))


def best_response_value_p2(
    g: GameSpec, pi: JointBelief, theta: Evaluation, fixed: BehaviorStrategy, zeta: AuxWeight | None = None
) -> BestResponse:
    """Player 2's best response (a minimum payoff to player 1) against a fixed player-1 strategy."""
    if zeta is not None and not np.allclose(zeta.zeta, 1.0):
        raise InvariantError("player-2 best response is only defined for the unweighted game")
    br = best_response_value(swap_game(g), JointBelief(pi.pi.T), theta, fixed.swapped())
    return BestResponse(-br.value, br.reply.swapped())


def dual_game_value(
    g: GameSpec, x, Q, theta: Evaluation, zeta: AuxWeight | None = None
) -> tuple[float, BehaviorStrategy]:
    """Exact value of the dual game, from its definition.

    Player 1 picks p and a strategy and pays ``<p, x>``; player 2 knows only l.
    This equals ``min over player 2 of max_k (best-response_k - x^k)`` and is
    solved as one sequence-form program. Returns the value and player 2's
    optimal strategy.
    """
    x = np.asarray(x, dtype=float)
    Q = np.asarray(Q, dtype=float)
    z = np.ones(g.K) if zeta is None else zeta.zeta
    W = z[:, None, None, None] * g.payoff
    val, rho, ix = _minimizer_program(W, Q, theta, x)
    return val, _behavior_from_plan(rho, ix, owner=2)


def value_model(
    g: GameSpec, Q, theta: Evaluation, zeta: AuxWeight | None = None, resolution: int | None = None
) -> ConcaveModel:
    """Samples of ``p -> v_theta(p (x) Q; zeta)`` on the barycentric grid."""
    Q = np.asarray(Q, dtype=float)
    K = g.K
    r = default_resolution(K) if resolution is None else resolution
    zmax = 1.0 if zeta is None else zeta.max_abs
    return ConcaveModel.from_function(
        lambda p: primal_value(g, JointBelief.product(p, Q), theta, zeta).value,
        K, r, g.payoff_bound * zmax,
    )


def dual_value_direct(
    g: GameSpec, x, Q, theta: Evaluation, zeta: AuxWeight | None = None, grid_resolution: int | None = None
) -> DirectDual:
    """Conjugate of the sampled primal value function, evaluated at x.

    The true dual value lies in ``[value, value + error_bound]``.
    """
    model = value_model(g, Q, theta, zeta, grid_resolution)
    w = upper_conjugate(model)
    return DirectDual(w(x), w.error_bound(x), model)


def _homogeneous_value(g: GameSpec, mu: np.ndarray, theta: Evaluation, zeta) -> float:
    total = float(mu.sum())
    if total <= 0.0:
        return 0.0
    return total * value_only(g, JointBelief(mu / total), theta, zeta)


def primal_recursion_check(
    g: GameSpec,
    pi: JointBelief,
    theta: Evaluation,
    resolution: int = 8,
    zeta: AuxWeight | None = None,
    grid_cap: int = DEFAULT_GRID_CAP,
) -> RecursionCheck:
    """Compare the one-step recursive right-hand side against the exact value.

    The right-hand side is maximized and minimized over barycentric grids of
    first-stage strategies (``resolution`` subdivisions per simplex), with exact
    continuation values. The right-hand side is Lipschitz with constant
    ``payoff_bound * max|zeta|`` in each player's strategy, so both the sup-inf
    and the inf-sup over the grid must lie within
    ``payoff_bound * max|zeta| * (mesh_I + mesh_J)`` of the value.
    """
    K, L, I, J = g.shape
    z = np.ones(K) if zeta is None else zeta.zeta
    zmax = float(np.abs(z).max())
    value = primal_value(g, pi, theta, zeta).value
    if theta.is_terminal:
        return RecursionCheck(value, value, value, 0.0, True, True, True, 0)

    sig_pts = simplex_grid(I, resolution)
    tau_pts = simplex_grid(J, resolution)
    n_sig = sig_pts.shape[0] ** K
    n_tau = tau_pts.shape[0] ** L
    if n_sig * n_tau > grid_cap:
        raise ResourceCapError("recursion-check grid nodes", n_sig * n_tau, grid_cap)
    sigmas = np.array(list(itertools.product(sig_pts, repeat=K)))  # (n_sig, K, I)
    taus = np.array(list(itertools.product(tau_pts, repeat=L)))  # (n_tau, L, J)
    sig_int = np.rint(sigmas * resolution).astype(int)
    tau_int = np.rint(taus * resolution).astype(int)

    th1 = theta.head
    tail = theta.tail()
    W = z[:, None, None, None] * g.payoff
    stage = np.einsum("kl,ski,klij,tlj->st", pi.pi, sigmas, W, taus)

    cache: dict = {}

    def cont(a: tuple, b: tuple) -> float:
        # Homogeneity: v~(c mu) = c v~(mu), so reduce integer columns by their gcd.
        ga, gb = math.gcd(*a), math.gcd(*b)
        if ga == 0 or gb == 0:
            return 0.0
        key = (tuple(v // ga for v in a), tuple(v // gb for v in b))
        if key not in cache:
            mu = pi.pi * np.outer(key[0], key[1])
            cache[key] = _homogeneous_value(g, mu, tail, zeta)
        return cache[key] * ga * gb / resolution**2

    future = np.zeros((len(sigmas), len(taus)))
    for s in range(len(sigmas)):
        cols_i = [tuple(sig_int[s, :, i]) for i in range(I)]
        for t in range(len(taus)):
            acc = 0.0
            for a in cols_i:
                for j in range(J):
                    acc += cont(a, tuple(tau_int[t, :, j]))
            future[s, t] = acc
    phi = th1 * stage + (1 - th1) * future
    maxmin = float(phi.min(axis=1).max())
    minmax = float(phi.max(axis=0).min())
    bound = g.payoff_bound * zmax * (covering_radius(I, resolution) + covering_radius(J, resolution))
    slack = 1e-9
    passed = abs(maxmin - value) <= bound + slack and abs(minmax - value) <= bound + slack
    agree = minmax - maxmin <= bound + slack
    return RecursionCheck(value, maxmin, minmax, bound, False, passed, agree, len(sigmas) * len(taus))
