import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import (
    random_evaluation,
    random_game,
    random_prior,
    random_stage,
    random_strategies,
    random_zeta,
)
from dualgame import game_core as gc
from dualgame.errors import DegenerateError, InvariantError, ResourceCapError
from dualgame.game_core import (
    AuxWeight,
    BehaviorStrategy,
    Disintegration,
    Evaluation,
    GameSpec,
    JointBelief,
    StageStrategy,
)

sizes = st.tuples(*[st.integers(1, 3)] * 4)
seeds = st.integers(0, 2**32 - 1)


# --------------------------------------------------------------------------
# Types


def test_gamespec_bound_and_validation():
    g = GameSpec(np.array([[[[1.0, -3.0], [0.5, 2.0]]]]))
    assert g.shape == (1, 1, 2, 2)
    assert g.payoff_bound == 3.0
    with pytest.raises(InvariantError):
        GameSpec(np.zeros((2, 2, 2)))
    with pytest.raises(InvariantError):
        GameSpec(np.array([[[[np.nan]]]]))


def test_joint_belief_validation_names_rows():
    with pytest.raises(InvariantError, match="row 0"):
        JointBelief(np.array([[0.45, 0.45], [0.0, 0.0]]))
    with pytest.raises(InvariantError):
        JointBelief(np.array([[1.5, -0.5]]))


def test_disintegration_zero_row_uniform():
    pi = JointBelief(np.array([[0.3, 0.7], [0.0, 0.0]]))
    d = pi.disintegrate()
    assert np.allclose(d.p, [1.0, 0.0])
    assert np.allclose(d.Q[1], [0.5, 0.5])
    assert np.allclose(d.pi.pi, pi.pi, atol=1e-15)


@given(sizes, seeds)
@settings(max_examples=40, deadline=None)
def test_disintegration_reproduces_pi(shape, seed):
    K, L, _, _ = shape
    rng = np.random.default_rng(seed)
    pi = random_prior(rng, K, L, full_support=False)
    d = pi.disintegrate()
    assert np.all(np.abs(d.p[:, None] * d.Q - pi.pi) <= 1e-12)
    assert np.all(np.abs(d.Q.sum(axis=1) - 1) <= 1e-12)


def test_evaluation_tail_and_truncation():
    th = Evaluation((0.5, 0.3, 0.2))
    tail = th.tail()
    assert np.allclose(tail.weights, (0.6, 0.4))
    assert tail.tail().is_terminal
    with pytest.raises(InvariantError):
        Evaluation((1.0,)).tail()
    with pytest.raises(InvariantError):
        Evaluation((0.5, 0.6))
    th3, m = Evaluation.discounted(0.5, 3)
    assert m == pytest.approx(0.125)
    assert np.allclose(th3.weights, np.array([0.5, 0.25, 0.125]) / 0.875)


def test_stage_and_behavior_validation():
    with pytest.raises(InvariantError):
        StageStrategy(np.array([[0.5, 0.6]]), np.array([[1.0]]))
    s = BehaviorStrategy.stationary(np.array([[0.5, 0.5]]), 2, 2, owner=2)
    s.validate(2, owner=2)
    assert s.continuation(1, 0).horizon == 1
    with pytest.raises(KeyError):
        s.at(((5, 5),))


def test_history_budget():
    assert gc.history_count(2, 2, 3) == 1 + 4 + 16
    with pytest.raises(ResourceCapError, match="exceeds cap"):
        gc.check_history_budget(3, 3, 8, cap=1000)


# --------------------------------------------------------------------------
# Stage probability bookkeeping


def test_stage_joint_law_examples():
    pi = JointBelief(np.full((2, 2), 0.25))
    s = StageStrategy(np.full((2, 2), 0.5), np.full((2, 2), 0.5))
    assert np.allclose(gc.stage_joint_law(pi, s), 1 / 16)
    s = StageStrategy(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    law = gc.stage_joint_law(pi, s)
    assert law[0, 0, 0, 1] == 0.25 and law[1, 1, 1, 0] == 0.25


@given(sizes, seeds)
@settings(max_examples=60, deadline=None)
def test_belief_martingale_and_decomposition(shape, seed):
    K, L, I, J = shape
    rng = np.random.default_rng(seed)
    pi = random_prior(rng, K, L)
    s = random_stage(rng, K, L, I, J)
    law = gc.stage_joint_law(pi, s)
    assert abs(law.sum() - 1) <= 1e-12
    assert np.all(np.abs(law.sum(axis=(2, 3)) - pi.pi) <= 1e-12)
    acc = np.zeros((K, L))
    d = pi.disintegrate()
    for i, j in itertools.product(range(I), range(J)):
        post = gc.posterior(pi, s, i, j)
        acc += post.prob * post.belief.pi
        if post.prob > 0:
            split = gc.decompose_posterior(d, s, i, j)
            assert np.all(np.abs(split.p_ij[:, None] * split.Q_j - post.belief.pi) <= 1e-12)
    assert np.all(np.abs(acc - pi.pi) <= 1e-12)


def test_posterior_degenerate_returns_prior():
    pi = JointBelief(np.full((2, 2), 0.25))
    s = StageStrategy(np.array([[1.0, 0.0], [1.0, 0.0]]), np.full((2, 2), 0.5))
    post = gc.posterior(pi, s, 1, 0)
    assert post.degenerate and post.prob == 0
    assert np.array_equal(post.belief.pi, pi.pi)
    with pytest.raises(DegenerateError):
        gc.decompose_posterior(pi.disintegrate(), s, 1, 0)
    with pytest.raises(DegenerateError):
        gc.posterior_on_K(pi.disintegrate(), s, 1)


def test_posterior_examples():
    rng = np.random.default_rng(3)
    pi = random_prior(rng, 2, 2)
    d = pi.disintegrate()
    # Type-independent play transmits nothing.
    s = StageStrategy(np.tile([0.3, 0.7], (2, 1)), np.tile([0.6, 0.4], (2, 1)))
    for i, j in itertools.product(range(2), range(2)):
        assert np.allclose(gc.posterior(pi, s, i, j).belief.pi, pi.pi, atol=1e-12)
        split = gc.decompose_posterior(d, s, i, j)
        assert np.allclose(split.Q_j, d.Q, atol=1e-12)
        assert np.allclose(split.p_ij, d.p, atol=1e-12)
    # Fully revealing sigma.
    s = StageStrategy(np.eye(2), np.full((2, 2), 0.5))
    assert np.allclose(gc.posterior_on_K(d, s, 1), [0, 1])
    assert np.allclose(gc.posterior(pi, s, 0, 1).belief.pi.sum(axis=1), [1, 0])
    # One-sided case: Q_j is trivially 1.
    pi1 = JointBelief(np.array([[0.4], [0.6]]))
    s1 = StageStrategy(np.array([[0.2, 0.8], [0.9, 0.1]]), np.array([[0.3, 0.7]]))
    split = gc.decompose_posterior(pi1.disintegrate(), s1, 0, 1)
    assert np.allclose(split.Q_j, 1.0)
    assert np.allclose(split.p_ij, gc.posterior_on_K(pi1.disintegrate(), s1, 0))


def test_zeta_update_examples():
    rng = np.random.default_rng(4)
    pi = random_prior(rng, 3, 2)
    d = pi.disintegrate()
    z = random_zeta(rng, 3)
    tau = np.full((2, 3), 1 / 3)
    assert np.allclose(gc.zeta_update(z, d, tau, 1).zeta, z.zeta / 3)
    tau = rng.dirichlet(np.ones(3), size=2)
    ones = AuxWeight.ones(3)
    total = sum(gc.zeta_update(ones, d, tau, j).zeta for j in range(3))
    assert np.allclose(total, 1.0, atol=1e-12)
    q = np.array([0.3, 0.7])
    Q = np.tile(q, (3, 1))
    tau_bar = q @ tau
    for j in range(3):
        assert np.allclose(gc.zeta_update(z, Q, tau, j).zeta, tau_bar[j] * z.zeta, atol=1e-15)


def test_stage_payoff_vectors():
    rng = np.random.default_rng(5)
    g = random_game(rng, 2, 3, 2, 2)
    pi = random_prior(rng, 2, 3)
    d = pi.disintegrate()
    s = random_stage(rng, 2, 3, 2, 2)
    G_pi, G_Q = gc.stage_payoff_vectors(g, d, s)
    direct = float(np.sum(gc.stage_joint_law(pi, s) * g.payoff))
    assert abs(G_pi - direct) <= 1e-12
    gc_const = GameSpec(np.full((2, 3, 2, 2), 0.3))
    G_pi, G_Q = gc.stage_payoff_vectors(gc_const, d, s)
    assert np.allclose(G_Q, 0.3) and abs(G_pi - 0.3) <= 1e-12
    g1 = random_game(rng, 2, 1, 2, 1)
    G_Q = gc.conditional_payoffs(g1, np.ones((2, 1)), np.ones((1, 1)))
    assert np.allclose(G_Q, g1.payoff[:, 0, :, 0].T)


# --------------------------------------------------------------------------
# Payoff functionals


def test_payoff_examples():
    rng = np.random.default_rng(6)
    g = random_game(rng, 2, 2, 2, 3)
    pi = random_prior(rng, 2, 2)
    s1, s2 = random_strategies(rng, 2, 2, 2, 3, 1)
    th = Evaluation((1.0,))
    expected = np.einsum("kl,ki,lj,klij->", pi.pi, s1.at(()), s2.at(()), g.payoff)
    assert abs(gc.payoff_primal(g, pi, s1, s2, th) - expected) <= 1e-12
    assert gc.payoff_primal(GameSpec(np.zeros((2, 2, 2, 3))), pi, s1, s2, th) == 0
    assert gc.payoff_aux(g, pi, s1, s2, th, AuxWeight(np.zeros(2))) == 0
    assert gc.payoff_aux(g, pi, s1, s2, th, AuxWeight.ones(2)) == gc.payoff_primal(g, pi, s1, s2, th)


def test_payoff_dual_examples():
    rng = np.random.default_rng(7)
    g = random_game(rng, 2, 2, 2, 2)
    pi = random_prior(rng, 2, 2)
    d = pi.disintegrate()
    th = Evaluation((0.5, 0.5))
    s1, s2 = random_strategies(rng, 2, 2, 2, 2, 2)
    base = gc.payoff_primal(g, pi, s1, s2, th)
    assert abs(gc.payoff_dual(g, np.zeros(2), d.Q, d.p, s1, s2, th) - base) <= 1e-12
    assert abs(gc.payoff_dual(g, np.full(2, 0.4), d.Q, d.p, s1, s2, th) - (base - 0.4)) <= 1e-12
    x = np.array([0.3, -0.2])
    assert abs(gc.payoff_dual(g, x, d.Q, d.p, s1, s2, th) - (base - d.p @ x)) <= 1e-12


def _recursion_rhs(g, pi, s1, s2, th, z):
    K, L, I, J = g.shape
    s = StageStrategy(s1.at(()), s2.at(()))
    W = z.zeta[:, None, None, None] * g.payoff
    stage = float(np.sum(gc.stage_joint_law(pi, s) * W))
    cont = 0.0
    for i, j in itertools.product(range(I), range(J)):
        post = gc.posterior(pi, s, i, j)
        if post.prob > 0:
            cont += post.prob * gc.payoff_aux(g, post.belief, s1.continuation(i, j), s2.continuation(i, j), th.tail(), z)
    return th.head * stage + (1 - th.head) * cont


@given(sizes, seeds, st.integers(2, 3))
@settings(max_examples=40, deadline=None)
def test_payoff_recursion_identity(shape, seed, n):
    K, L, I, J = shape
    rng = np.random.default_rng(seed)
    g = random_game(rng, K, L, I, J)
    pi = random_prior(rng, K, L)
    th = random_evaluation(rng, n)
    s1, s2 = random_strategies(rng, K, L, I, J, n)
    for z in (AuxWeight.ones(K), random_zeta(rng, K)):
        lhs = gc.payoff_aux(g, pi, s1, s2, th, z)
        assert abs(lhs - _recursion_rhs(g, pi, s1, s2, th, z)) <= 1e-10
        assert abs(lhs) <= g.payoff_bound * z.max_abs + 1e-12


@given(sizes, seeds, st.integers(1, 3))
@settings(max_examples=40, deadline=None)
def test_stage_identity_aux_weighted(shape, seed, n):
    """P(j|i) gamma(pi_ij; zeta) = gamma(p_i (x) Q_j; zeta_j)."""
    K, L, I, J = shape
    rng = np.random.default_rng(seed)
    g = random_game(rng, K, L, I, J)
    pi = random_prior(rng, K, L)
    d = pi.disintegrate()
    s = random_stage(rng, K, L, I, J)
    th = random_evaluation(rng, n)
    s1, s2 = random_strategies(rng, K, L, I, J, n)
    z = random_zeta(rng, K)
    for i, j in itertools.product(range(I), range(J)):
        post = gc.posterior(pi, s, i, j)
        p_i = gc.posterior_on_K(d, s, i)
        P_i = float(d.p @ s.sigma[:, i])
        P_j_given_i = post.prob / P_i
        Q_j, _ = gc.update_Q(d.Q, s.tau, j)
        z_j = gc.zeta_update(z, d, s.tau, j)
        lhs = P_j_given_i * gc.payoff_aux(g, post.belief, s1, s2, th, z)
        rhs = gc.payoff_aux(g, JointBelief.product(p_i, Q_j), s1, s2, th, z_j)
        assert abs(lhs - rhs) <= 1e-10


@given(sizes, seeds)
@settings(max_examples=40, deadline=None)
def test_dual_payoff_recursion_with_weighted_target(shape, seed):
    """h_theta[x,Q;zeta](p) = (1-theta_1) sum_i P(i) sum_j h_theta+[x_ij,Q_j;zeta_j](p_i)
    for any splits with sum_j x_ij = (x - theta_1 zeta * G^Q_(i tau)) / (1 - theta_1)."""
    K, L, I, J = shape
    rng = np.random.default_rng(seed)
    g = random_game(rng, K, L, I, J)
    d = random_prior(rng, K, L).disintegrate()
    th = random_evaluation(rng, 2)
    s1, s2 = random_strategies(rng, K, L, I, J, 2)
    z = random_zeta(rng, K)
    x = rng.uniform(-1, 1, K)
    s = StageStrategy(s1.at(()), s2.at(()))
    G_Q = gc.conditional_payoffs(g, d.Q, s.tau)
    lhs = gc.payoff_aux(g, d.pi, s1, s2, th, z) - d.p @ x
    rhs = 0.0
    for i in range(I):
        target = (x - th.head * z.zeta * G_Q[i]) / (1 - th.head)
        splits = rng.normal(size=(J, K))
        splits[-1] = target - splits[:-1].sum(axis=0)
        P_i = float(d.p @ s.sigma[:, i])
        p_i = gc.posterior_on_K(d, s, i)
        for j in range(J):
            Q_j, _ = gc.update_Q(d.Q, s.tau, j)
            z_j = gc.zeta_update(z, d, s.tau, j)
            h = gc.payoff_aux(g, JointBelief.product(p_i, Q_j), s1.continuation(i, j), s2.continuation(i, j), th.tail(), z_j)
            rhs += P_i * (h - p_i @ splits[j])
    rhs *= 1 - th.head
    assert abs(lhs - rhs) <= 1e-10


def test_unweighted_target_breaks_recursion_when_zeta_not_one():
    """Dropping zeta from the split target breaks the identity once zeta differs from 1."""
    rng = np.random.default_rng(123)
    K, L, I, J = 2, 2, 2, 2
    g = random_game(rng, K, L, I, J)
    d = random_prior(rng, K, L).disintegrate()
    th = Evaluation((0.5, 0.5))
    s1, s2 = random_strategies(rng, K, L, I, J, 2)
    z = AuxWeight(np.array([0.3, 1.8]))
    x = np.zeros(K)
    s = StageStrategy(s1.at(()), s2.at(()))
    G_Q = gc.conditional_payoffs(g, d.Q, s.tau)

    def rhs(weighted: bool) -> float:
        total = 0.0
        for i in range(I):
            stage = z.zeta * G_Q[i] if weighted else G_Q[i]
            target = (x - th.head * stage) / (1 - th.head)
            P_i = float(d.p @ s.sigma[:, i])
            p_i = gc.posterior_on_K(d, s, i)
            for j in range(J):
                Q_j, _ = gc.update_Q(d.Q, s.tau, j)
                z_j = gc.zeta_update(z, d, s.tau, j)
                h = gc.payoff_aux(g, JointBelief.product(p_i, Q_j), s1.continuation(i, j),
                                  s2.continuation(i, j), th.tail(), z_j)
                total += P_i * (h - p_i @ (target if j == 0 else np.zeros(K)))
        return (1 - th.head) * total

    lhs = gc.payoff_aux(g, d.pi, s1, s2, th, z) - d.p @ x
    assert abs(lhs - rhs(True)) <= 1e-10
    assert abs(lhs - rhs(False)) > 1e-3
