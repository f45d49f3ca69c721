"""Pipeline orchestration and report assembly.

A report is a nested dict of plain JSON types. Every numeric result is stored as
``{"value": v, "bound": b}`` where ``b`` is a certified error bound or the
numerical tolerance of an exact computation. Reports contain no timing or other
run-dependent data, so identical inputs give byte-identical JSON; timing is
only printed in the human summary.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import dual_solver as ds
from . import oracle
from . import strategy_synth as ss
from .convex_tools import default_resolution
from .errors import InvariantError, ResourceCapError
from .gamefile import GameFile
from .game_core import AuxWeight, BehaviorStrategy, Evaluation
from .lp import use_method

COMMANDS = (
    "solve-primal",
    "solve-dual",
    "recursion-check",
    "synthesize",
    "certify",
    "nonrevealing",
    "independent",
    "swap",
)
LP_TOL = 1e-9
DEFAULT_HORIZON_CAP = 3
REPORT_VERSION = 1


@dataclass
class Config:
    grid: int | None = None
    tau_grid: int | None = None
    horizon_cap: int = DEFAULT_HORIZON_CAP
    seed: int = 0
    cross_check: bool = False
    lp: str = "highs"
    strategy_cap: int = oracle.DEFAULT_STRATEGY_CAP
    recursion_grid: int = 8
    x: list | None = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in sorted(self.__dataclass_fields__)}


@dataclass
class Report:
    data: dict
    summary: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"


def merge_config(options: dict, flags: dict) -> Config:
    """File options first, command-line flags override."""
    cfg = Config()
    for key, val in options.items():
        setattr(cfg, key, val)
    for key, val in flags.items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg


def _num(v) -> float:
    v = float(v)
    return 0.0 if v == 0 else v  # normalize -0.0


def _q(value, bound) -> dict:
    return {"value": _num(value), "bound": _num(bound)}


def _vec(a) -> list:
    return [_num(v) for v in np.ravel(a)]


def _mat(a) -> list:
    return [[_num(v) for v in row] for row in np.asarray(a)]


def _strategy(s: BehaviorStrategy) -> list:
    out = []
    for h in sorted(s.table, key=lambda h: (len(h), h)):
        out.append({"history": [list(p) for p in h], "probs": _mat(s.table[h])})
    return out


def digest(text: str, cfg: Config, command: str) -> str:
    h = hashlib.sha256()
    h.update(text.encode())
    h.update(json.dumps({"command": command, "config": cfg.as_dict()}, sort_keys=True).encode())
    return h.hexdigest()


def run(command: str, gf: GameFile, cfg: Config, source_text: str = "") -> Report:
    """Dispatch a command and assemble its report."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    if gf.theta.horizon > cfg.horizon_cap:
        raise ResourceCapError("horizon", gf.theta.horizon, cfg.horizon_cap)
    handler = _HANDLERS[command]
    with use_method(cfg.lp):
        body, summary = handler(gf, cfg)
    K, L, I, J = gf.game.shape
    data = {
        "version": REPORT_VERSION,
        "command": command,
        "inputs": {
            "digest": digest(source_text, cfg, command),
            "sizes": {"K": K, "L": L, "I": I, "J": J},
            "evaluation": _vec(gf.theta.weights),
            "config": cfg.as_dict(),
        },
        **body,
    }
    return Report(data, summary)


def _x_of(gf: GameFile, cfg: Config) -> np.ndarray:
    K = gf.game.K
    if cfg.x is None:
        return np.zeros(K)
    x = np.asarray(cfg.x, dtype=float)
    if x.size != K:
        raise InvariantError(f"x needs {K} entries")
    return x


def _dual_errors(sol: ds.DualSolution) -> dict:
    return {k: _num(v) for k, v in sorted(sol.errors.items())}


# --------------------------------------------------------------------------
# Handlers: each returns (report body, summary lines).


def _solve_primal(gf: GameFile, cfg: Config):
    sol = oracle.primal_value(gf.game, gf.prior, gf.theta)
    body = {
        "values": {"primal_value": _q(sol.value, max(LP_TOL, abs(sol.gap)))},
        "strategies": {"player1": _strategy(sol.s1), "player2": _strategy(sol.s2)},
    }
    lines = [f"primal value {sol.value:.10g} (sequence form, gap {abs(sol.gap):.2e})"]
    if cfg.cross_check:
        nf = oracle.primal_value(gf.game, gf.prior, gf.theta, method="normal", strategy_cap=cfg.strategy_cap)
        agree = abs(nf.value - sol.value) <= 1e-7
        body["cross_check"] = {"normal_form_value": _q(nf.value, LP_TOL), "agree": agree}
        lines.append(f"normal-form value {nf.value:.10g}; agree: {agree}")
    return body, lines


def _solve_dual(gf: GameFile, cfg: Config):
    x = _x_of(gf, cfg)
    d = gf.prior.disintegrate()
    sol = ds.dual_recursive(gf.game, ds.DualState.root(x, d.Q, gf.theta), cfg.tau_grid, cfg.grid)
    body = {
        "values": {"dual_value": _q(sol.value, sol.error_bound)},
        "errors": _dual_errors(sol),
        "x": _vec(x),
        "minimizer": {
            "tau": _mat(sol.tau),
            "splits": None if sol.splits is None else [_mat(s) for s in sol.splits],
        },
    }
    lines = [f"dual value {sol.value:.10g} +- {sol.error_bound:.3g} at x = {np.round(x, 6).tolist()}"]
    if cfg.cross_check:
        direct = oracle.dual_value_direct(gf.game, x, d.Q, gf.theta, None, cfg.grid)
        exact, _ = oracle.dual_game_value(gf.game, x, d.Q, gf.theta)
        combined = direct.error_bound + sol.error_bound
        agree = abs(sol.value - direct.value) <= combined + 1e-9
        body["cross_check"] = {
            "direct_value": _q(direct.value, direct.error_bound),
            "exact_dual_value": _q(exact, LP_TOL),
            "combined_bound": _num(combined),
            "difference": _num(sol.value - direct.value),
            "agree": agree,
        }
        lines.append(f"direct dual {direct.value:.10g}; exact {exact:.10g}; agree within {combined:.3g}: {agree}")
    return body, lines


def _recursion_check(gf: GameFile, cfg: Config):
    rc = oracle.primal_recursion_check(gf.game, gf.prior, gf.theta, cfg.recursion_grid)
    body = {
        "values": {
            "primal_value": _q(rc.value, LP_TOL),
            "rhs_maxmin": _q(rc.rhs_maxmin, rc.bound),
            "rhs_minmax": _q(rc.rhs_minmax, rc.bound),
        },
        "exact": rc.exact,
        "passed": rc.passed,
        "orderings_agree": rc.orderings_agree,
        "grid_nodes": rc.grid_nodes,
    }
    lines = [
        f"value {rc.value:.10g}; grid sup-inf {rc.rhs_maxmin:.10g}; inf-sup {rc.rhs_minmax:.10g}; bound {rc.bound:.3g}",
        f"passed: {rc.passed}; orderings agree: {rc.orderings_agree}",
    ]
    return body, lines


def _tree_body(tree: ss.PolicyTree, strategy: BehaviorStrategy) -> dict:
    audit = ss.markov_audit(tree)
    paths = sorted(tree.nodes, key=lambda h: (len(h), h))
    return {
        "x": {"value": _vec(tree.x.x), "bound": _num(tree.x.eps)},
        "root_dual_value": _q(tree.root_value, tree.root.solution.error_bound),
        "certificate": {k: (_num(v) if not isinstance(v, dict) else {a: _num(b) for a, b in sorted(v.items())})
                        for k, v in sorted(tree.certificate().items())},
        "checks": {
            "q_consistency": ss.q_consistency_check(tree, strategy),
            "zeta_trace": all(ss.zeta_trace_check(tree, h) for h in paths),
            "markov_collisions": audit["collisions"],
            "markov_consistent": audit["consistent"],
        },
        "strategy": _strategy(strategy),
    }


def _synthesize(gf: GameFile, cfg: Config):
    tree = ss.synthesize(gf.game, gf.prior, gf.theta, cfg.tau_grid, cfg.grid)
    strategy = ss.as_behavior_strategy(tree)
    body = _tree_body(tree, strategy)
    lines = [f"synthesized player-2 strategy with {len(tree.nodes)} nodes; eps_total {tree.eps_total:.4g}"]
    return body, lines


def _certify(gf: GameFile, cfg: Config):
    tree = ss.synthesize(gf.game, gf.prior, gf.theta, cfg.tau_grid, cfg.grid)
    strategy = ss.as_behavior_strategy(tree)
    cert = ss.certify(gf.game, gf.prior, gf.theta, strategy, tree)
    body = _tree_body(tree, strategy)
    body["values"] = {
        "primal_value": _q(cert.value, LP_TOL),
        "best_response": _q(cert.best_response, LP_TOL),
        "exploitability": _q(cert.exploitability, cert.eps_total),
    }
    body["within_certificate"] = cert.within
    lines = [
        f"value {cert.value:.10g}; best response {cert.best_response:.10g}",
        f"exploitability {cert.exploitability:.3e} <= eps_total {cert.eps_total:.4g}: {cert.within}",
    ]
    return body, lines


def _nonrevealing(gf: GameFile, cfg: Config):
    x = _x_of(gf, cfg)
    d = gf.prior.disintegrate()
    if gf.theta.is_terminal:
        raise InvariantError("the non-revealing bound needs at least two stages")
    nr = ds.nonrevealing_bound(gf.game, x, d.Q, gf.theta, None, cfg.tau_grid, cfg.grid)
    body = {
        "values": {
            "nonrevealing_rhs": _q(nr.rhs, nr.error_bound),
            "dual_value": _q(nr.recursive, nr.error_bound),
            "slack": _q(nr.slack, nr.error_bound),
        },
        "x": _vec(x),
        "holds": nr.holds,
        "equality": nr.equality,
        "tau_bar": _vec(nr.tau_bar),
    }
    lines = [
        f"dual value {nr.recursive:.10g} <= non-revealing bound {nr.rhs:.10g}: {nr.holds}",
        f"equality within {nr.error_bound:.3g}: {nr.equality}",
    ]
    return body, lines


def _independent(gf: GameFile, cfg: Config):
    x = _x_of(gf, cfg)
    d = gf.prior.disintegrate()
    q = d.p @ d.Q
    if np.any(np.abs(d.Q - q[None, :]) > 1e-12):
        raise InvariantError("the prior is not a product of its marginals")
    sol = ds.independent_recursive(gf.game, x, q, gf.theta, cfg.tau_grid, cfg.grid)
    body = {
        "values": {"dual_value": _q(sol.value, sol.error_bound)},
        "errors": _dual_errors(sol),
        "x": _vec(x),
        "q": _vec(q),
        "minimizer": {"tau": _mat(sol.tau)},
    }
    lines = [f"independent-case dual value {sol.value:.10g} +- {sol.error_bound:.3g}"]
    if cfg.cross_check:
        gen = ds.dual_recursive(gf.game, ds.DualState.root(x, d.Q, gf.theta), cfg.tau_grid, cfg.grid)
        combined = gen.error_bound + sol.error_bound
        agree = abs(gen.value - sol.value) <= combined + 1e-9
        body["cross_check"] = {"general_value": _q(gen.value, gen.error_bound), "agree": agree}
        lines.append(f"general recursion {gen.value:.10g}; agree within {combined:.3g}: {agree}")
    return body, lines


def _swap(gf: GameFile, cfg: Config):
    tree, s1 = ss.synthesize_player1(gf.game, gf.prior, gf.theta, tau_resolution=cfg.tau_grid, p_resolution=cfg.grid)
    cert = ss.certify_player1(gf.game, gf.prior, gf.theta, s1, tree)
    gs, pis = ss.swap_roles(gf.game, gf.prior)
    swapped_value = oracle.primal_value(gs, pis, gf.theta).value
    body = {
        "values": {
            "primal_value": _q(cert.value, LP_TOL),
            "swapped_value": _q(swapped_value, LP_TOL),
            "player2_best_response": _q(cert.best_response, LP_TOL),
            "exploitability": _q(cert.exploitability, cert.eps_total),
        },
        "negation_holds": abs(swapped_value + cert.value) <= 1e-7,
        "within_certificate": cert.within,
        "strategy_player1": _strategy(s1),
    }
    lines = [
        f"value {cert.value:.10g}; swapped value {swapped_value:.10g}",
        f"player-1 exploitability {cert.exploitability:.3e} <= eps_total {cert.eps_total:.4g}: {cert.within}",
    ]
    return body, lines


_HANDLERS = {
    "solve-primal": _solve_primal,
    "solve-dual": _solve_dual,
    "recursion-check": _recursion_check,
    "synthesize": _synthesize,
    "certify": _certify,
    "nonrevealing": _nonrevealing,
    "independent": _independent,
    "swap": _swap,
}
