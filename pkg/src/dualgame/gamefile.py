"""Line-oriented game file format.

Example::

    # 0.5-example: player 1 knows k, player 2 has a single type
    [sizes]
    K = 2
    L = 1
    I = 2
    J = 2

    [payoff]
    # k l: row-major I x J entries
    0 0: 1 0 0 0
    1 0: 0 0 0 1

    [prior]
    0.5
    0.5

    [evaluation]
    1

    [options]
    grid = 16

Blocks may appear in any order; ``#`` starts a comment. The evaluation block
holds either a list of stage weights or ``uniform N``. Errors carry the line and
column of the offending token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantError, ParseError
from .game_core import Evaluation, GameSpec, JointBelief

BLOCKS = ("sizes", "payoff", "prior", "evaluation", "options")
SIZE_KEYS = ("K", "L", "I", "J")
INT_OPTIONS = ("grid", "tau_grid", "horizon_cap", "seed", "strategy_cap", "recursion_grid")
VECTOR_OPTIONS = ("x",)


@dataclass
class GameFile:
    game: GameSpec
    prior: JointBelief
    theta: Evaluation
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class _Token:
    text: str
    line: int
    col: int


def _tokens(line: str, lineno: int, start: int = 0) -> list[_Token]:
    return [_Token(m.group(), lineno, m.start() + 1) for m in re.finditer(r"\S+", line) if m.start() >= start]


def _number(tok: _Token) -> float:
    try:
        val = float(tok.text)
    except ValueError:
        raise ParseError(f"expected a number, got {tok.text!r}", tok.line, tok.col) from None
    if not np.isfinite(val):
        raise ParseError(f"non-finite number {tok.text!r}", tok.line, tok.col)
    return val


def _integer(tok: _Token) -> int:
    try:
        return int(tok.text)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok.text!r}", tok.line, tok.col) from None


def parse_game(text: str) -> GameFile:
    """Parse and validate a game file."""
    blocks: dict[str, list[tuple[int, str]]] = {}
    header_line: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            m = re.fullmatch(r"\[\s*([A-Za-z_]+)\s*\]", stripped)
            col = line.index("[") + 1
            if not m:
                raise ParseError(f"malformed block header {stripped!r}", lineno, col)
            name = m.group(1).lower()
            if name not in BLOCKS:
                raise ParseError(f"unknown block [{name}]", lineno, col)
            if name in blocks:
                raise ParseError(f"duplicate block [{name}]", lineno, col)
            blocks[name] = []
            header_line[name] = lineno
            current = name
            continue
        if current is None:
            raise ParseError("content before the first block header", lineno, len(line) - len(line.lstrip()) + 1)
        blocks[current].append((lineno, line))

    for name in ("sizes", "payoff", "prior", "evaluation"):
        if name not in blocks:
            raise ParseError(f"missing block [{name}]")

    sizes = _parse_keyvals(blocks["sizes"], SIZE_KEYS, "sizes")
    for key in SIZE_KEYS:
        if key not in sizes:
            raise ParseError(f"[sizes] is missing {key}", header_line["sizes"])
    dims = {}
    for key in SIZE_KEYS:
        tok = sizes[key][0]
        val = _integer(tok)
        if val < 1:
            raise ParseError(f"{key} must be at least 1", tok.line, tok.col)
        dims[key] = val
    K, L, I, J = (dims[k] for k in SIZE_KEYS)

    payoff = _parse_payoff(blocks["payoff"], K, L, I, J, header_line["payoff"])
    prior = _parse_prior(blocks["prior"], K, L, header_line["prior"])
    theta = _parse_evaluation(blocks["evaluation"], header_line["evaluation"])
    options = _parse_options(blocks.get("options", []), K)

    try:
        game = GameSpec(payoff)
        belief = JointBelief(prior)
    except InvariantError as exc:
        raise InvariantError(f"invalid game: {exc}") from None
    return GameFile(game, belief, theta, options)


def _parse_keyvals(lines, allowed, block: str) -> dict[str, list[_Token]]:
    out: dict[str, list[_Token]] = {}
    for lineno, line in lines:
        if "=" not in line:
            toks = _tokens(line, lineno)
            raise ParseError(f"expected 'key = value' in [{block}]", lineno, toks[0].col)
        eq = line.index("=")
        key = line[:eq].strip()
        key_col = len(line) - len(line.lstrip()) + 1
        if key not in allowed:
            raise ParseError(f"unknown key {key!r} in [{block}]", lineno, key_col)
        if key in out:
            raise ParseError(f"duplicate key {key!r} in [{block}]", lineno, key_col)
        vals = _tokens(line, lineno, start=eq + 1)
        if not vals:
            raise ParseError(f"missing value for {key!r}", lineno, eq + 2)
        out[key] = vals
    return out


def _parse_payoff(lines, K, L, I, J, header: int) -> np.ndarray:
    payoff = np.full((K, L, I, J), np.nan)
    seen = set()
    for lineno, line in lines:
        if ":" not in line:
            raise ParseError("payoff rows look like 'k l: entries'", lineno, len(line) - len(line.lstrip()) + 1)
        colon = line.index(":")
        head = _tokens(line[:colon], lineno)
        if len(head) != 2:
            col = head[0].col if head else 1
            raise ParseError("payoff row label must be two indices 'k l'", lineno, col)
        k, l = _integer(head[0]), _integer(head[1])
        if not 0 <= k < K:
            raise ParseError(f"type index k={k} out of range 0..{K - 1}", lineno, head[0].col)
        if not 0 <= l < L:
            raise ParseError(f"type index l={l} out of range 0..{L - 1}", lineno, head[1].col)
        if (k, l) in seen:
            raise ParseError(f"duplicate payoff row for ({k}, {l})", lineno, head[0].col)
        seen.add((k, l))
        vals = _tokens(line, lineno, start=colon + 1)
        if len(vals) != I * J:
            col = vals[-1].col if vals else colon + 2
            raise ParseError(f"payoff row ({k}, {l}) needs {I * J} entries, got {len(vals)}", lineno, col)
        payoff[k, l] = np.array([_number(t) for t in vals]).reshape(I, J)
    missing = [(k, l) for k in range(K) for l in range(L) if (k, l) not in seen]
    if missing:
        raise ParseError(f"missing payoff rows for {missing}", header)
    return payoff


def _parse_prior(lines, K, L, header: int) -> np.ndarray:
    rows = []
    for lineno, line in lines:
        toks = _tokens(line, lineno)
        if len(toks) != L:
            raise ParseError(f"prior row {len(rows)} needs {L} entries, got {len(toks)}", lineno, toks[-1].col)
        vals = [_number(t) for t in toks]
        for t, v in zip(toks, vals):
            if v < 0:
                raise ParseError(f"negative prior entry {t.text}", lineno, t.col)
        rows.append(vals)
    if len(rows) != K:
        raise ParseError(f"[prior] needs {K} rows, got {len(rows)}", header)
    prior = np.array(rows)
    total = prior.sum()
    if abs(total - 1.0) > 1e-12:
        sums = ", ".join(f"row {k} sums to {s:.12g}" for k, s in enumerate(prior.sum(axis=1)))
        raise InvariantError(f"prior must sum to 1, got {total:.12g} ({sums})")
    return prior


def _parse_evaluation(lines, header: int) -> Evaluation:
    toks = [t for lineno, line in lines for t in _tokens(line, lineno)]
    if not toks:
        raise ParseError("[evaluation] is empty", header)
    if toks[0].text == "uniform":
        if len(toks) != 2:
            raise ParseError("expected 'uniform N'", toks[0].line, toks[0].col)
        n = _integer(toks[1])
        if n < 1:
            raise ParseError("horizon must be at least 1", toks[1].line, toks[1].col)
        return Evaluation.uniform(n)
    weights = np.array([_number(t) for t in toks])
    for t, w in zip(toks, weights):
        if w < 0:
            raise ParseError(f"negative stage weight {t.text}", t.line, t.col)
    try:
        return Evaluation(weights)
    except InvariantError as exc:
        raise InvariantError(f"invalid evaluation: {exc}") from None


def _parse_options(lines, K: int) -> dict:
    raw = _parse_keyvals(lines, INT_OPTIONS + VECTOR_OPTIONS, "options")
    out: dict = {}
    for key, toks in raw.items():
        if key in INT_OPTIONS:
            if len(toks) != 1:
                raise ParseError(f"{key} takes one integer", toks[1].line, toks[1].col)
            out[key] = _integer(toks[0])
            if key != "seed" and out[key] < 1:
                raise ParseError(f"{key} must be positive", toks[0].line, toks[0].col)
        else:
            if len(toks) != K:
                raise ParseError(f"{key} needs {K} entries, got {len(toks)}", toks[-1].line, toks[-1].col)
            out[key] = [_number(t) for t in toks]
    return out


def emit_game(gf: GameFile) -> str:
    """Serialize a game file; ``parse_game(emit_game(gf))`` reproduces it exactly."""
    K, L, I, J = gf.game.shape
    lines = ["[sizes]", f"K = {K}", f"L = {L}", f"I = {I}", f"J = {J}", "", "[payoff]"]
    for k in range(K):
        for l in range(L):
            lines.append(f"{k} {l}: " + " ".join(repr(float(v)) for v in gf.game.payoff[k, l].ravel()))
    lines += ["", "[prior]"]
    lines += [" ".join(repr(float(v)) for v in row) for row in gf.prior.pi]
    lines += ["", "[evaluation]", " ".join(repr(float(v)) for v in gf.theta.weights)]
    if gf.options:
        lines += ["", "[options]"]
        for key in sorted(gf.options):
            val = gf.options[key]
            if isinstance(val, (list, tuple, np.ndarray)):
                lines.append(f"{key} = " + " ".join(repr(float(v)) for v in val))
            else:
                lines.append(f"{key} = {int(val)}")
    return "\n".join(lines) + "\n"
