import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualgame.errors import InvariantError, ParseError
from dualgame.game_core import Evaluation, GameSpec, JointBelief
from dualgame.gamefile import GameFile, emit_game, parse_game

MINIMAL = """\
[sizes]
K = 1
L = 1
I = 1
J = 1
[payoff]
0 0: 2.5
[prior]
1
[evaluation]
1
"""


def test_minimal_file():
    gf = parse_game(MINIMAL)
    assert gf.game.shape == (1, 1, 1, 1)
    assert gf.game.payoff[0, 0, 0, 0] == 2.5
    assert gf.theta.horizon == 1 and gf.options == {}


def test_uniform_evaluation_and_options():
    text = MINIMAL.replace("[evaluation]\n1\n", "[evaluation]\nuniform 3\n[options]\ngrid = 4\nx = 0.5\n")
    gf = parse_game(text)
    assert gf.theta.horizon == 3 and np.allclose(gf.theta.weights, 1 / 3)
    assert gf.options == {"grid": 4, "x": [0.5]}


def test_prior_not_summing_to_one_names_rows():
    text = """\
[sizes]
K = 2
L = 2
I = 1
J = 1
[payoff]
0 0: 0
0 1: 0
1 0: 0
1 1: 0
[prior]
0.2 0.3
0.1 0.3
[evaluation]
1
"""
    with pytest.raises(InvariantError) as exc:
        parse_game(text)
    msg = str(exc.value)
    assert "0.9" in msg and "row 0 sums to 0.5" in msg and "row 1 sums to 0.4" in msg


@pytest.mark.parametrize(
    "old,new,line,col",
    [
        ("0 0: 2.5", "0 0: abc", 7, 6),
        ("0 0: 2.5", "3 0: 2.5", 7, 1),
        ("K = 1", "K = one", 2, 5),
        ("[prior]", "[priors]", 8, 1),
        ("J = 1", "Q = 1", 5, 1),
    ],
)
def test_errors_carry_location(old, new, line, col):
    with pytest.raises(ParseError) as exc:
        parse_game(MINIMAL.replace(old, new))
    assert (exc.value.line, exc.value.col) == (line, col)
    assert f"line {line}" in str(exc.value)


def test_missing_block():
    with pytest.raises(ParseError, match="missing block"):
        parse_game(MINIMAL.replace("[evaluation]\n1\n", ""))


def test_example_files_parse():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "docs" / "examples"
    files = sorted(root.glob("*.game"))
    assert files
    for f in files:
        parse_game(f.read_text())


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False)


@st.composite
def game_files(draw):
    K, L, I, J = (draw(st.integers(1, 3)) for _ in range(4))
    payoff = np.array(draw(st.lists(finite, min_size=K * L * I * J, max_size=K * L * I * J))).reshape(K, L, I, J)
    raw = np.array(draw(st.lists(st.integers(0, 50), min_size=K * L, max_size=K * L)), dtype=float) + 1.0
    # Dyadic-friendly prior so the sum is exactly one in floating point.
    prior = (raw / raw.sum()).reshape(K, L)
    prior[-1, -1] = 1.0 - (prior.sum() - prior[-1, -1])
    n = draw(st.integers(1, 4))
    w = np.array(draw(st.lists(st.integers(1, 9), min_size=n, max_size=n)), dtype=float)
    opts = {}
    if draw(st.booleans()):
        opts["grid"] = draw(st.integers(1, 64))
        opts["x"] = draw(st.lists(finite, min_size=K, max_size=K))
    return GameFile(GameSpec(payoff), JointBelief(prior), Evaluation(w / w.sum()), opts)


@settings(max_examples=60, deadline=None)
@given(game_files())
def test_emit_parse_round_trip(gf):
    try:
        back = parse_game(emit_game(gf))
    except InvariantError:
        # The normalized prior can miss 1 by an ulp; such files are rejected, not altered.
        assert abs(gf.prior.pi.sum() - 1.0) > 1e-12
        return
    assert np.array_equal(back.game.payoff, gf.game.payoff)
    assert np.array_equal(back.prior.pi, gf.prior.pi)
    assert np.array_equal(back.theta.weights, gf.theta.weights)
    assert back.options == gf.options
    assert emit_game(back) == emit_game(gf)
