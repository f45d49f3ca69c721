"""Game data model, belief bookkeeping and exact payoff evaluation.

Conventions used throughout the package:

* Player 1 has private type ``k`` in ``range(K)`` and actions ``i`` in ``range(I)``;
  player 2 has type ``l`` in ``range(L)`` and actions ``j`` in ``range(J)``.
* ``payoff[k, l, i, j]`` is the stage payoff to player 1 (the maximizer).
* A public history is a tuple of ``(i, j)`` action pairs, oldest first.
* Probability identities are checked at absolute tolerance ``PROB_TOL`` and
  payoff identities at ``PAYOFF_TOL``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

from .errors import DegenerateError, InvariantError, ResourceCapError

PROB_TOL = 1e-12
PAYOFF_TOL = 1e-10
DEFAULT_HISTORY_CAP = 10**6

History = tuple[tuple[int, int], ...]


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_prob(vec: np.ndarray, what: str, tol: float = 1e-9) -> None:
    if not np.all(np.isfinite(vec)):
        raise InvariantError(f"{what}: non-finite entry")
    if np.any(vec < -tol):
        raise InvariantError(f"{what}: negative entry {vec.min():.3g}")
    if abs(vec.sum() - 1.0) > tol:
        raise InvariantError(f"{what}: sums to {vec.sum():.15g}, expected 1")


# --------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Family of I x J matrix games indexed by the type pair (k, l)."""

    payoff: np.ndarray

    def __post_init__(self):
        g = np.array(self.payoff, dtype=float)
        if g.ndim != 4 or min(g.shape) < 1:
            raise InvariantError(f"payoff must be a nonempty (K, L, I, J) tensor, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise InvariantError("payoff has non-finite entries")
        g.setflags(write=False)
        object.__setattr__(self, "payoff", g)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.payoff.shape  # type: ignore[return-value]

    K = property(lambda self: self.payoff.shape[0])
    L = property(lambda self: self.payoff.shape[1])
    I = property(lambda self: self.payoff.shape[2])  # noqa: E741
    J = property(lambda self: self.payoff.shape[3])

    @property
    def payoff_bound(self) -> float:
        """Largest absolute stage payoff over all (k, l, i, j)."""
        return float(np.abs(self.payoff).max())


@dataclass(frozen=True, eq=False)
class JointBelief:
    """Joint law of the type pair (k, l)."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        if pi.ndim != 2:
            raise InvariantError(f"prior must be a K x L matrix, got shape {pi.shape}")
        if not np.all(np.isfinite(pi)) or np.any(pi < 0):
            raise InvariantError("prior entries must be finite and nonnegative")
        if abs(pi.sum() - 1.0) > PROB_TOL:
            rows = ", ".join(f"row {k} sums to {s:.12g}" for k, s in enumerate(pi.sum(axis=1)))
            raise InvariantError(f"prior sums to {pi.sum():.12g}, expected 1 ({rows})")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def p(self) -> np.ndarray:
        return self.pi.sum(axis=1)

    def disintegrate(self) -> "Disintegration":
        """Split into the K-marginal and the conditional law of l given k.

        Rows of Q with zero marginal mass are set to the uniform law.
        """
        p = self.pi.sum(axis=1)
        L = self.pi.shape[1]
        Q = np.full(self.pi.shape, 1.0 / L)
        pos = p > 0
        Q[pos] = self.pi[pos] / p[pos, None]
        return Disintegration(p, Q)

    @classmethod
    def product(cls, p, Q) -> "JointBelief":
        p = np.asarray(p, dtype=float)
        return cls(p[:, None] * np.asarray(Q, dtype=float))


@dataclass(frozen=True, eq=False)
class Disintegration:
    """A marginal p on K and a row-stochastic kernel Q from K to L."""

    p: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p)
        Q = _frozen(self.Q)
        if Q.ndim != 2 or Q.shape[0] != p.size:
            raise InvariantError("Q must have one row per entry of p")
        _check_prob(p, "marginal p", PROB_TOL)
        for k, row in enumerate(Q):
            _check_prob(row, f"row {k} of Q", PROB_TOL)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "Q", Q)

    @property
    def pi(self) -> JointBelief:
        return JointBelief(self.p[:, None] * self.Q)


@dataclass(frozen=True)
class Evaluation:
    """Finite-support stage weights theta_1, ..., theta_n."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not w:
            raise InvariantError("evaluation needs at least one stage")
        if any(not np.isfinite(x) or x < 0 for x in w):
            raise InvariantError("evaluation weights must be finite and nonnegative")
        if abs(sum(w) - 1.0) > PROB_TOL:
            raise InvariantError(f"evaluation weights sum to {sum(w):.15g}, expected 1")
        object.__setattr__(self, "weights", w)

    @property
    def horizon(self) -> int:
        return len(self.weights)

    @property
    def head(self) -> float:
        return self.weights[0]

    @property
    def is_terminal(self) -> bool:
        """True when the first stage carries all the weight."""
        return self.head >= 1.0 - PROB_TOL or self.horizon == 1

    def tail(self) -> "Evaluation":
        """Renormalized weights of stages 2, 3, ..."""
        if self.is_terminal:
            raise InvariantError("tail() needs theta_1 < 1 and at least two stages")
        rest = self.weights[1:]
        total = sum(rest)
        return Evaluation(tuple(x / total for x in rest))

    @classmethod
    def uniform(cls, n: int) -> "Evaluation":
        return cls((1.0 / n,) * n)

    @classmethod
    def discounted(cls, lam: float, n: int) -> tuple["Evaluation", float]:
        """Truncate the lam-discounted evaluation to ``n`` stages."""
        weights = [lam * (1 - lam) ** m for m in range(n)]
        return cls.truncate(weights, n, total_mass=1.0)

    @classmethod
    def truncate(cls, weights, n: int, total_mass: float | None = None) -> tuple["Evaluation", float]:
        """Keep the first ``n`` stages of a (possibly longer) weight sequence.

        Returns the renormalized truncated evaluation and the discarded mass ``m``.
        If ``rho`` is the value of the truncated game, ``(1 - m) * rho`` is within
        ``payoff_bound * m`` of the value of the untruncated game.
        """
        head = [float(x) for x in list(weights)[:n]]
        total = float(sum(weights)) if total_mass is None else float(total_mass)
        kept = sum(head)
        if kept <= 0:
            raise InvariantError("truncation keeps no weight")
        return cls(tuple(x / kept for x in head)), total - kept


@dataclass(frozen=True, eq=False)
class AuxWeight:
    """Per-type payoff multipliers; all ones recovers the original game."""

    zeta: np.ndarray

    def __post_init__(self):
        z = _frozen(self.zeta)
        if z.ndim != 1 or not np.all(np.isfinite(z)):
            raise InvariantError("zeta must be a finite vector")
        object.__setattr__(self, "zeta", z)

    @classmethod
    def ones(cls, K: int) -> "AuxWeight":
        return cls(np.ones(K))

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.zeta).max()) if self.zeta.size else 0.0


@dataclass(frozen=True, eq=False)
class StageStrategy:
    """First-stage mixed actions: ``sigma[k, i]`` and ``tau[l, j]``."""

    sigma: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        sigma = _frozen(self.sigma)
        tau = _frozen(self.tau)
        for name, mat in (("sigma", sigma), ("tau", tau)):
            if mat.ndim != 2:
                raise InvariantError(f"{name} must be a matrix")
            for r, row in enumerate(mat):
                _check_prob(row, f"{name} row {r}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "tau", tau)


@dataclass(frozen=True, eq=False)
class BehaviorStrategy:
    """A behavior strategy for one player up to a finite horizon.

    ``table[h]`` is an ``(n_types, n_actions)`` row-stochastic matrix giving the
    mixed action of every type after public history ``h``. Histories are tuples
    of ``(i, j)`` pairs in the original player order, whichever player owns the
    strategy.
    """

    n_types: int
    n_actions: int
    horizon: int
    table: Mapping[History, np.ndarray] = field(repr=False)

    def __post_init__(self):
        table = {}
        for h, mat in self.table.items():
            arr = _frozen(mat)
            if arr.shape != (self.n_types, self.n_actions):
                raise InvariantError(f"history {h}: expected shape {(self.n_types, self.n_actions)}, got {arr.shape}")
            table[tuple(tuple(int(a) for a in pair) for pair in h)] = arr
        object.__setattr__(self, "table", table)

    def at(self, h: History) -> np.ndarray:
        try:
            return self.table[h]
        except KeyError:
            raise KeyError(f"strategy undefined at history {h}") from None

    def validate(self, n_other_actions: int, owner: int) -> None:
        """Check every row is a probability vector and all histories are covered.

        ``owner`` is 1 or 2; it fixes which coordinate of each pair is own action.
        """
        I, J = (self.n_actions, n_other_actions) if owner == 1 else (n_other_actions, self.n_actions)
        for h in all_histories(I, J, self.horizon):
            mat = self.at(h)
            for t, row in enumerate(mat):
                _check_prob(row, f"type {t} at history {h}")

    def continuation(self, i: int, j: int) -> "BehaviorStrategy":
        """Strategy for the game starting after the first pair ``(i, j)``."""
        if self.horizon < 2:
            raise InvariantError("no continuation beyond the horizon")
        first = (i, j)
        table = {h[1:]: m for h, m in self.table.items() if h and h[0] == first}
        return BehaviorStrategy(self.n_types, self.n_actions, self.horizon - 1, table)

    def swapped(self) -> "BehaviorStrategy":
        """Re-key histories with the order of every action pair reversed."""
        table = {tuple((b, a) for a, b in h): m for h, m in self.table.items()}
        return BehaviorStrategy(self.n_types, self.n_actions, self.horizon, table)

    @classmethod
    def from_function(
        cls, n_types: int, n_actions: int, n_other: int, horizon: int, owner: int,
        fn: Callable[[History], np.ndarray],
    ) -> "BehaviorStrategy":
        I, J = (n_actions, n_other) if owner == 1 else (n_other, n_actions)
        table = {h: np.asarray(fn(h), dtype=float) for h in all_histories(I, J, horizon)}
        return cls(n_types, n_actions, horizon, table)

    @classmethod
    def stationary(cls, rows, n_other: int, horizon: int, owner: int) -> "BehaviorStrategy":
        rows = np.asarray(rows, dtype=float)
        return cls.from_function(rows.shape[0], rows.shape[1], n_other, horizon, owner, lambda h: rows)

    @classmethod
    def random(cls, n_types: int, n_actions: int, n_other: int, horizon: int, owner: int,
               rng: np.random.Generator) -> "BehaviorStrategy":
        return cls.from_function(
            n_types, n_actions, n_other, horizon, owner,
            lambda h: rng.dirichlet(np.ones(n_actions), size=n_types),
        )


# --------------------------------------------------------------------------
# Histories


def history_count(I: int, J: int, horizon: int) -> int:
    """Number of public histories of length 0..horizon-1."""
    return sum((I * J) ** m for m in range(horizon))


def check_history_budget(I: int, J: int, horizon: int, cap: int = DEFAULT_HISTORY_CAP) -> int:
    n = history_count(I, J, horizon)
    if n > cap:
        raise ResourceCapError("public history count", n, cap)
    return n


def histories_at(I: int, J: int, stage: int) -> Iterator[History]:
    """Histories observed at the start of ``stage`` (1-based)."""
    pairs = list(itertools.product(range(I), range(J)))
    yield from itertools.product(pairs, repeat=stage - 1)


def all_histories(I: int, J: int, horizon: int) -> Iterator[History]:
    for m in range(1, horizon + 1):
        yield from histories_at(I, J, m)


# --------------------------------------------------------------------------
# Stage-level probability bookkeeping


def stage_joint_law(pi: JointBelief, s: StageStrategy) -> np.ndarray:
    """Joint law of (k, l, i, j) when types are drawn from pi and (sigma, tau) is played."""
    return np.einsum("kl,ki,lj->klij", pi.pi, s.sigma, s.tau)


@dataclass(frozen=True, eq=False)
class Posterior:
    belief: JointBelief
    prob: float
    degenerate: bool


def posterior(pi: JointBelief, s: StageStrategy, i: int, j: int) -> Posterior:
    """Conditional law of (k, l) given the public pair (i, j).

    On a null event the prior is returned unchanged and ``degenerate`` is set.
    """
    mass = pi.pi * np.outer(s.sigma[:, i], s.tau[:, j])
    total = float(mass.sum())
    if total <= 0.0:
        return Posterior(pi, 0.0, True)
    return Posterior(JointBelief(mass / total), total, False)


def posterior_on_K(d: Disintegration, s: StageStrategy, i: int) -> np.ndarray:
    """P(k | i) under p and sigma."""
    mass = d.p * s.sigma[:, i]
    total = mass.sum()
    if total <= 0.0:
        raise DegenerateError(f"action i={i} has zero probability")
    return mass / total


def prob_j_given_k(d_or_Q, tau: np.ndarray) -> np.ndarray:
    """Matrix ``P(j | k) = sum_l Q(l|k) tau[l, j]``, shape (K, J)."""
    Q = d_or_Q.Q if isinstance(d_or_Q, Disintegration) else np.asarray(d_or_Q)
    return Q @ np.asarray(tau)


def update_Q(Q: np.ndarray, tau: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Condition the kernel Q on player 2 having played j.

    Returns the updated kernel and a boolean mask of rows where ``P(j|k) = 0``;
    those rows are left equal to ``Q(.|k)``.
    """
    Q = np.asarray(Q, dtype=float)
    unnorm = Q * np.asarray(tau)[:, j][None, :]
    denom = unnorm.sum(axis=1)
    flagged = denom <= 0.0
    out = Q.copy()
    out[~flagged] = unnorm[~flagged] / denom[~flagged, None]
    return out, flagged


@dataclass(frozen=True, eq=False)
class PosteriorSplit:
    p_ij: np.ndarray
    Q_j: np.ndarray
    flagged_rows: np.ndarray


def decompose_posterior(d: Disintegration, s: StageStrategy, i: int, j: int) -> PosteriorSplit:
    """Write the posterior after (i, j) as p_ij (x) Q_j.

    ``p_ij^k = p_i^k P(j|k) / P(j|i)`` and ``Q_j(l|k)`` is Q reweighted by
    ``tau[l, j]``; the latter is computable by player 2 alone.
    """
    pjk = prob_j_given_k(d, s.tau)[:, j]
    joint_i = d.p * s.sigma[:, i]
    p_ij_mass = joint_i * pjk
    total = p_ij_mass.sum()
    if total <= 0.0:
        raise DegenerateError(f"action pair ({i}, {j}) has zero probability")
    Q_j, flagged = update_Q(d.Q, s.tau, j)
    return PosteriorSplit(p_ij_mass / total, Q_j, flagged & (d.p > 0))


def zeta_update(z: AuxWeight, d_or_Q, tau: np.ndarray, j: int) -> AuxWeight:
    """``zeta_j^k = zeta^k * P(j | k)``."""
    return AuxWeight(z.zeta * prob_j_given_k(d_or_Q, tau)[:, j])


def stage_payoff_vectors(g: GameSpec, d: Disintegration, s: StageStrategy) -> tuple[float, np.ndarray]:
    """Expected stage payoff and the per-(i, k) conditional payoff vectors.

    Returns ``(G_pi, G_Q)`` where ``G_Q[i, k] = sum_{l,j} Q(l|k) tau[l,j] G[k,l,i,j]``
    and ``G_pi = sum_k p^k sum_i sigma[k,i] G_Q[i,k]``.
    """
    G_Q = np.einsum("kl,lj,klij->ik", d.Q, s.tau, g.payoff)
    G_pi = float(np.einsum("k,ki,ik->", d.p, s.sigma, G_Q))
    return G_pi, G_Q


def conditional_payoffs(g: GameSpec, Q: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """``G_Q[i, k]`` for a kernel Q and stage strategy tau of player 2."""
    return np.einsum("kl,lj,klij->ik", Q, tau, g.payoff)


# --------------------------------------------------------------------------
# Payoff functionals


def payoff_aux(
    g: GameSpec,
    pi: JointBelief,
    s1: BehaviorStrategy,
    s2: BehaviorStrategy,
    theta: Evaluation,
    z: AuxWeight | None = None,
    history_cap: int = DEFAULT_HISTORY_CAP,
) -> float:
    """Expected zeta-weighted theta-sum of stage payoffs, by exact enumeration."""
    K, L, I, J = g.shape
    n = theta.horizon
    if s1.horizon < n or s2.horizon < n:
        raise InvariantError("strategy horizon shorter than the evaluation")
    check_history_budget(I, J, n, history_cap)
    zeta = np.ones(K) if z is None else z.zeta
    # Stage payoff weighted by zeta^k: W[k,l,i,j].
    W = zeta[:, None, None, None] * g.payoff
    total = 0.0
    # Frontier: history -> unnormalized joint mass over (k, l).
    frontier: dict[History, np.ndarray] = {(): pi.pi.copy()}
    for m in range(n):
        nxt: dict[History, np.ndarray] = {}
        for h, mass in frontier.items():
            sig = s1.at(h)
            tau = s2.at(h)
            joint = np.einsum("kl,ki,lj->klij", mass, sig, tau)
            total += theta.weights[m] * float(np.sum(joint * W))
            if m + 1 < n:
                for i in range(I):
                    for j in range(J):
                        child = joint[:, :, i, j]
                        if child.any():
                            nxt[h + ((i, j),)] = child
        frontier = nxt
    return total


def payoff_primal(
    g: GameSpec,
    pi: JointBelief,
    s1: BehaviorStrategy,
    s2: BehaviorStrategy,
    theta: Evaluation,
    history_cap: int = DEFAULT_HISTORY_CAP,
) -> float:
    """Expected theta-weighted sum of stage payoffs to player 1."""
    return payoff_aux(g, pi, s1, s2, theta, None, history_cap)


def payoff_dual(
    g: GameSpec,
    x: np.ndarray,
    Q: np.ndarray,
    p: np.ndarray,
    s1: BehaviorStrategy,
    s2: BehaviorStrategy,
    theta: Evaluation,
    z: AuxWeight | None = None,
) -> float:
    """Dual-game payoff: payoff of the game started from p (x) Q, minus <p, x>."""
    pi = JointBelief(np.asarray(p)[:, None] * np.asarray(Q))
    return payoff_aux(g, pi, s1, s2, theta, z) - float(np.dot(p, x))
