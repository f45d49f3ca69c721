"""Command-line entry point: ``dualgame <command> <game-file> [flags]``.

Exit codes: 0 success, 2 parse error, 3 resource cap, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .errors import DegenerateError, InvariantError, LPError, ParseError, ResourceCapError
from .gamefile import parse_game
from .reports import COMMANDS, merge_config, run

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CAP = 3
EXIT_INVARIANT = 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dualgame", description="Dual-game solvers for repeated games with incomplete information.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("game_file", type=Path)
    ap.add_argument("--grid", type=int, help="barycentric resolution of the p-grid (belief simplex)")
    ap.add_argument("--tau-grid", dest="tau_grid", type=int, help="resolution of player 2's first-move grid")
    ap.add_argument("--horizon-cap", dest="horizon_cap", type=int, help="largest accepted horizon (default 3)")
    ap.add_argument("--seed", type=int, help="recorded in the report; all computations are deterministic")
    ap.add_argument("--out", type=Path, help="machine report path (default <game-file>.<command>.json)")
    ap.add_argument("--cross-check", dest="cross_check", action="store_true", default=None,
                    help="also run the independent oracle and report agreement")
    ap.add_argument("--lp", choices=("highs", "simplex"), help="linear-programming backend")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.game_file.read_text()
    except OSError as exc:
        print(f"error: cannot read {args.game_file}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        gf = parse_game(text)
        flags = {k: getattr(args, k) for k in ("grid", "tau_grid", "horizon_cap", "seed", "cross_check", "lp")}
        for key in ("grid", "tau_grid", "horizon_cap"):
            if flags[key] is not None and flags[key] < 1:
                raise ParseError(f"--{key.replace('_', '-')} must be positive")
        cfg = merge_config(gf.options, flags)
        start = time.perf_counter()
        report = run(args.command, gf, cfg, text)
        elapsed = time.perf_counter() - start
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (InvariantError, DegenerateError, LPError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT

    out = args.out or args.game_file.with_name(f"{args.game_file.name}.{args.command}.json")
    out.write_text(report.to_json())
    print(f"dualgame {args.command}: {args.game_file}")
    for line in report.summary:
        print(f"  {line}")
    print(f"  time {elapsed:.2f}s; report written to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
