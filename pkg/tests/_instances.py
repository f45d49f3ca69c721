"""Random and hand-built instances shared by the tests."""

from __future__ import annotations

import numpy as np

from dualgame.game_core import (
    AuxWeight,
    BehaviorStrategy,
    Evaluation,
    GameSpec,
    JointBelief,
    StageStrategy,
)


def half_example() -> tuple[GameSpec, JointBelief]:
    """Two informed types, one uninformed type; one-stage value 0.5."""
    G = np.zeros((2, 1, 2, 2))
    G[0, 0] = [[1, 0], [0, 0]]
    G[1, 0] = [[0, 0], [0, 1]]
    return GameSpec(G), JointBelief(np.array([[0.5], [0.5]]))


def matching_pennies() -> tuple[GameSpec, JointBelief]:
    G = np.array([[[[1.0, -1.0], [-1.0, 1.0]]]])
    return GameSpec(G), JointBelief(np.ones((1, 1)))


def constant_game(c: float = 0.7, K=2, L=2, I=2, J=2) -> tuple[GameSpec, JointBelief]:
    return GameSpec(np.full((K, L, I, J), c)), JointBelief(np.full((K, L), 1.0 / (K * L)))


def random_game(rng, K, L, I, J) -> GameSpec:
    return GameSpec(rng.uniform(-1, 1, (K, L, I, J)))


def random_prior(rng, K, L, full_support=True) -> JointBelief:
    alpha = np.ones(K * L)
    pi = rng.dirichlet(alpha).reshape(K, L)
    if full_support:
        pi = 0.5 * pi + 0.5 / (K * L)
    return JointBelief(pi / pi.sum())


def independent_prior(rng, K, L) -> tuple[JointBelief, np.ndarray, np.ndarray]:
    p = rng.dirichlet(np.ones(K)) * 0.6 + 0.4 / K
    q = rng.dirichlet(np.ones(L)) * 0.6 + 0.4 / L
    return JointBelief(np.outer(p, q)), p, q


def random_stage(rng, K, L, I, J) -> StageStrategy:
    return StageStrategy(rng.dirichlet(np.ones(I), size=K), rng.dirichlet(np.ones(J), size=L))


def random_evaluation(rng, n) -> Evaluation:
    w = rng.dirichlet(np.ones(n))
    return Evaluation(w / w.sum())


def random_zeta(rng, K) -> AuxWeight:
    return AuxWeight(rng.uniform(0.1, 2.0, K))


def random_strategies(rng, K, L, I, J, n):
    s1 = BehaviorStrategy.random(K, I, J, n, 1, rng)
    s2 = BehaviorStrategy.random(L, J, I, n, 2, rng)
    return s1, s2
