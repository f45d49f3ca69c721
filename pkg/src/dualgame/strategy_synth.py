"""Player 2's Markovian strategy built from the dual recursion, and its certificate.

The construction: pick x as a supergradient of ``p -> v_theta(p (x) Q)`` at the
prior marginal, then play the dual game from state ``(x, Q, zeta = 1)``. At each
node the dual recursion supplies a first-stage tau and splits ``x_ij``; after
public actions (i, j) play continues from ``(x_ij, Q_j, zeta_j, theta+)``.

Guarantee. Let ``Gamma`` be defined on the tree by ``Gamma(leaf) = w_1`` (the
exact one-stage dual value, attained by the stored tau) and
``Gamma(node) = (1 - theta_1) max_i sum_j Gamma(child_ij)``. Because the splits
satisfy ``(1 - theta_1) sum_j x_ij = x - theta_1 zeta * G^Q_(i tau)``, the
synthesized strategy caps every type's dual-game payoff by ``Gamma(root)``.
Transferring to the primal game gives

    exploitability <= eps_x + Gamma(root) - (R - tau_grid error)

where ``R`` is the root's computed dual value and ``eps_x`` the supergradient's
mesh certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import game_core as gc
from .convex_tools import default_resolution, spread, supergradient
from .dual_solver import (
    DualSolution,
    DualState,
    ModelCache,
    default_tau_resolution,
    dual_base,
    dual_recursive,
)
from .errors import InvariantError
from .game_core import AuxWeight, BehaviorStrategy, Evaluation, GameSpec, JointBelief
from .oracle import best_response_value, best_response_value_p2, primal_value, swap_game, value_model

_AUDIT_DIGITS = 10


@dataclass(frozen=True)
class XChoice:
    x: np.ndarray
    value: float  # sampled concave envelope at p
    eps: float  # (lipschitz + spread(x)) * mesh


@dataclass(eq=False)
class PolicyNode:
    history: gc.History
    state: DualState
    tau: np.ndarray  # (L, J)
    solution: DualSolution | None  # None for unreachable (degenerate) nodes
    guarantee: float
    degenerate: bool = False
    children: dict = field(default_factory=dict)  # (i, j) -> PolicyNode


@dataclass(eq=False)
class PolicyTree:
    root: PolicyNode
    nodes: dict  # history -> PolicyNode
    p: np.ndarray
    Q: np.ndarray
    theta: Evaluation
    x: XChoice
    n_actions: tuple[int, int]  # (I, J)

    @property
    def depth(self) -> int:
        return self.theta.horizon

    @property
    def root_value(self) -> float:
        return self.root.solution.value

    @property
    def eps_total(self) -> float:
        """Certified exploitability bound of the synthesized strategy."""
        return self.x.eps + self.root.guarantee - self.root.solution.lower

    def certificate(self) -> dict:
        sol = self.root.solution
        return {
            "eps_x": self.x.eps,
            "root_value": sol.value,
            "root_errors": dict(sol.errors),
            "root_guarantee": self.root.guarantee,
            "eps_total": self.eps_total,
        }


@dataclass(frozen=True)
class Certification:
    exploitability: float
    value: float
    best_response: float
    eps_total: float | None
    within: bool | None


def choose_x(g: GameSpec, p, Q, theta: Evaluation, resolution: int | None = None) -> XChoice:
    """Minimal-norm supergradient of the sampled ``p' -> v_theta(p' (x) Q)`` at p."""
    p = np.asarray(p, dtype=float)
    f = value_model(g, Q, theta, None, resolution)
    sg = supergradient(f, p)
    x = sg.x
    return XChoice(x, sg.value, (f.lipschitz + spread(x)) * f.mesh)


def _uniform_tau(L: int, J: int) -> np.ndarray:
    return np.full((L, J), 1.0 / J)


def synthesize(
    g: GameSpec,
    pi: JointBelief,
    theta: Evaluation,
    tau_resolution: int | None = None,
    p_resolution: int | None = None,
    x: np.ndarray | None = None,
    cache: ModelCache | None = None,
) -> PolicyTree:
    """Build player 2's policy tree from the dual recursion's minimizers."""
    K, L, I, J = g.shape
    if pi.pi.shape != (K, L):
        raise InvariantError("prior shape does not match the game")
    d = pi.disintegrate()
    r_tau = default_tau_resolution(J) if tau_resolution is None else tau_resolution
    r_p = default_resolution(K) if p_resolution is None else p_resolution
    if x is None:
        xc = choose_x(g, d.p, d.Q, theta, r_p)
    else:
        xc = XChoice(np.asarray(x, dtype=float), float("nan"), 0.0)
    cache = ModelCache() if cache is None else cache
    nodes: dict = {}

    def build(state: DualState, h: gc.History, degenerate: bool) -> PolicyNode:
        if degenerate:
            node = PolicyNode(h, state, _uniform_tau(L, J), None, float(-state.x.min()), True)
            nodes[h] = node
            if not state.theta.is_terminal:
                tail = state.theta.tail()
                for i in range(I):
                    for j in range(J):
                        child = DualState(state.x, state.Q, state.zeta, tail)
                        node.children[(i, j)] = build(child, h + ((i, j),), True)
            return node
        if state.theta.is_terminal:
            sol = dual_base(g, state)
            node = PolicyNode(h, state, sol.tau, sol, sol.value)
            nodes[h] = node
            return node
        sol = dual_recursive(g, state, r_tau, r_p, cache=cache)
        node = PolicyNode(h, state, sol.tau, sol, 0.0)
        nodes[h] = node
        tail = state.theta.tail()
        per_i = []
        for i in range(I):
            acc = 0.0
            for j in range(J):
                kid = sol.children[j]
                cstate = DualState(sol.splits[i, j], kid.Q, kid.zeta, tail)
                cnode = build(cstate, h + ((i, j),), kid.degenerate)
                node.children[(i, j)] = cnode
                acc += cnode.guarantee
            per_i.append(acc)
        node.guarantee = (1.0 - state.theta.head) * max(per_i)
        return node

    root = build(DualState(xc.x, d.Q, AuxWeight.ones(K), theta), (), False)
    return PolicyTree(root, nodes, d.p, d.Q, theta, xc, (I, J))


def as_behavior_strategy(tree: PolicyTree) -> BehaviorStrategy:
    """Player 2's behavior strategy: the tau of the node reached by each history."""
    L = tree.Q.shape[1]
    J = tree.n_actions[1]
    table = {h: node.tau for h, node in tree.nodes.items()}
    strat = BehaviorStrategy(L, J, tree.depth, table)
    strat.validate(tree.n_actions[0], owner=2)
    return strat


def certify(
    g: GameSpec,
    pi: JointBelief,
    theta: Evaluation,
    strategy: BehaviorStrategy,
    tree: PolicyTree | None = None,
) -> Certification:
    """Exploitability of a player-2 strategy, with the tree's bound when available."""
    value = primal_value(g, pi, theta).value
    br = best_response_value(g, pi, theta, strategy).value
    expl = br - value
    if tree is None:
        return Certification(expl, value, br, None, None)
    eps = tree.eps_total
    return Certification(expl, value, br, eps, bool(expl <= eps + 1e-9))


def zeta_trace_check(tree: PolicyTree, path) -> bool:
    """Stored zeta at the end of ``path`` equals ``sum_l Q(l|k) prod_n tau_n[l, j_n]``."""
    path = tuple(tuple(step) for step in path)
    weights = tree.Q.copy()  # (K, L)
    h: gc.History = ()
    for i, j in path:
        node = tree.nodes.get(h)
        if node is None or (i, j) not in node.children:
            raise InvariantError(f"path escapes the tree at history {h}")
        weights = weights * node.tau[:, j][None, :]
        h = h + ((i, j),)
    node = tree.nodes.get(h)
    if node is None:
        raise InvariantError(f"path escapes the tree at history {h}")
    expected = weights.sum(axis=1)
    return bool(np.all(np.abs(node.state.zeta.zeta - expected) <= 1e-12))


def q_consistency_check(tree: PolicyTree, strategy: BehaviorStrategy | None = None, tol: float = 1e-10) -> bool:
    """Every node's kernel equals ``P(l | k, h)`` under the synthesized strategy.

    Rows with ``P(h | k) = 0`` are skipped since the conditional is undefined there.
    """
    strategy = as_behavior_strategy(tree) if strategy is None else strategy
    for h, node in tree.nodes.items():
        mass = tree.Q.copy()
        for m, (_, j) in enumerate(h):
            mass = mass * strategy.at(h[:m])[:, j][None, :]
        tot = mass.sum(axis=1)
        live = tot > 1e-300
        cond = mass[live] / tot[live, None]
        if np.any(np.abs(cond - node.state.Q[live]) > tol):
            return False
    return True


def markov_audit(tree: PolicyTree) -> dict:
    """Histories reaching identical states must prescribe identical play.

    Returns the number of colliding state keys and whether all of them agree on
    the whole continuation (tau at every descendant).
    """

    def key(node: PolicyNode):
        s = node.state
        r = lambda a: tuple(np.round(np.asarray(a).ravel(), _AUDIT_DIGITS))
        return (r(s.x), r(s.Q), r(s.zeta.zeta), r(s.theta.weights), node.degenerate)

    def signature(node: PolicyNode):
        kids = tuple((ij, signature(c)) for ij, c in sorted(node.children.items()))
        return (tuple(np.round(node.tau.ravel(), _AUDIT_DIGITS)), kids)

    groups: dict = {}
    for node in tree.nodes.values():
        groups.setdefault(key(node), []).append(node)
    collisions = [nodes for nodes in groups.values() if len(nodes) > 1]
    consistent = all(len({signature(n) for n in nodes}) == 1 for nodes in collisions)
    return {"collisions": len(collisions), "consistent": consistent}


def swap_roles(g: GameSpec, pi: JointBelief) -> tuple[GameSpec, JointBelief]:
    """The game seen from player 2: payoffs negated, roles and types exchanged."""
    return swap_game(g), JointBelief(pi.pi.T)


def synthesize_player1(
    g: GameSpec, pi: JointBelief, theta: Evaluation, **kwargs
) -> tuple[PolicyTree, BehaviorStrategy]:
    """Player 1's strategy through the swapped pipeline.

    Returns the swapped game's tree and the strategy re-keyed for the original game.
    """
    gs, pis = swap_roles(g, pi)
    tree = synthesize(gs, pis, theta, **kwargs)
    return tree, as_behavior_strategy(tree).swapped()


def certify_player1(
    g: GameSpec, pi: JointBelief, theta: Evaluation, strategy: BehaviorStrategy, tree: PolicyTree | None = None
) -> Certification:
    """Exploitability of a player-1 strategy: value minus player 2's best response."""
    value = primal_value(g, pi, theta).value
    br = best_response_value_p2(g, pi, theta, strategy).value
    expl = value - br
    if tree is None:
        return Certification(expl, value, br, None, None)
    eps = tree.eps_total
    return Certification(expl, value, br, eps, bool(expl <= eps + 1e-9))
