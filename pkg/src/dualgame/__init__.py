"""Dual games for repeated zero-sum games with incomplete information on both sides.

Exact oracles (sequence-form and normal-form linear programs), the dual
recursive formula with an auxiliary type weight, strategy synthesis for the
uninformed side, and certified error accounting.
"""

from .errors import DegenerateError, DualGameError, InvariantError, LPError, ParseError, ResourceCapError
from .game_core import AuxWeight, BehaviorStrategy, Disintegration, Evaluation, GameSpec, JointBelief, StageStrategy

__all__ = [
    "AuxWeight",
    "BehaviorStrategy",
    "DegenerateError",
    "Disintegration",
    "DualGameError",
    "Evaluation",
    "GameSpec",
    "InvariantError",
    "JointBelief",
    "LPError",
    "ParseError",
    "ResourceCapError",
    "StageStrategy",
]

__version__ = "0.1.0"
