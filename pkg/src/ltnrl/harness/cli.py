"""Command-line entry point: ``ltnrl run | ltn-train | plot``.

Exit status is 0 on success, 1 for usage or input errors and 2 when a run
detects an invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Optional, Sequence

from .. import gridworld as gw
from ..agent import AgentConfig
from ..ltn import TheoryError, parse_theory, save_groundings, train_groundings
from .config import ConfigError, load_config
from .evaluation import InvariantViolation
from .experiment import make_plan, records_of, run_experiment
from .pipeline import CONDITIONS
from .report import emit_csv, emit_svg, parse_csv

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _cycle(text: str) -> list[tuple[int, int]]:
    """``"1:1,2:1"`` -> [(1, 1), (2, 1)], scenario:setting pairs."""
    try:
        pairs = [tuple(int(v) for v in item.split(":")) for item in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected scenario:setting pairs, got {text}") from None
    if any(len(p) != 2 or p[0] not in gw.SCENARIOS or p[1] not in gw.SETTINGS for p in pairs):
        raise argparse.ArgumentTypeError(f"unknown scenario or setting in {text}")
    return pairs


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ltnrl", description="Symbolic priors for a dueling double DQN on a shape gridworld.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every evaluation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="train agents through a phase schedule and log evaluations")
    run.add_argument("--experiment", type=int, choices=(1, 2), required=True)
    run.add_argument("--condition", choices=sorted(CONDITIONS), required=True)
    run.add_argument("--epsilon", choices=("reset", "hold"), default="hold")
    run.add_argument("--seeds", type=_positive, default=5, help="number of seeds, 0..N-1")
    run.add_argument("--phase-steps", type=_positive, default=None)
    run.add_argument("--eval-every", type=_positive, default=None)
    run.add_argument("--phases", type=_positive, default=None, help="number of phases (default 4)")
    run.add_argument("--cycle", type=_cycle, default=None,
                     help="scenario:setting pairs visited in order, e.g. 1:1,2:1")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--config", help="key = value overrides")
    run.add_argument("--theory-dir", help="directory holding scenario<N>.ltn theories")
    run.add_argument("--workers", type=_positive, default=1, help="seeds trained in parallel processes")

    ltn = sub.add_parser("ltn-train", help="fit learnable predicates of a theory file")
    ltn.add_argument("--theory", required=True)
    ltn.add_argument("--iters", type=_positive, default=2000)
    ltn.add_argument("--lr", type=float, default=0.01)
    ltn.add_argument("--seed", type=int, default=0)
    ltn.add_argument("--out", required=True)

    plot = sub.add_parser("plot", help="render an evaluation CSV as an SVG chart")
    plot.add_argument("--in", dest="csv", required=True)
    plot.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    agent_over, plan_over = load_config(args.config) if args.config else ({}, {})
    for key, value in (("phase_steps", args.phase_steps), ("eval_every", args.eval_every),
                       ("n_phases", args.phases)):
        if value is not None:
            plan_over[key] = value
    if args.theory_dir and not os.path.isdir(args.theory_dir):
        raise UsageError(f"theory directory {args.theory_dir} does not exist")
    plan = make_plan(args.experiment, args.condition, args.epsilon, n_seeds=args.seeds, cycle=args.cycle,
                     agent=AgentConfig(**agent_over), theory_dir=args.theory_dir, **plan_over)
    os.makedirs(args.out, exist_ok=True)
    started = time.time()
    results = run_experiment(plan, workers=args.workers, checkpoint_dir=os.path.join(args.out, "checkpoints"))
    records = records_of(results)
    emit_csv(records, os.path.join(args.out, "records.csv"))
    emit_svg(records, os.path.join(args.out, "curves.svg"),
             title=f"Experiment {args.experiment}: {args.condition}, epsilon {args.epsilon}")
    meta = plan.metadata()
    meta["wall_seconds"] = round(time.time() - started, 1)
    meta["grounding_retrains"] = {r.seed: r.grounding_retrains for r in results}
    meta["checkpoints"] = [r.checkpoint for r in results]
    with open(os.path.join(args.out, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def _cmd_ltn_train(args) -> int:
    with open(args.theory) as fh:
        theory = parse_theory(fh.read())
    result = train_groundings(theory, iterations=args.iters, lr=args.lr, seed=args.seed)
    save_groundings(args.out, theory, result)
    print(f"satisfaction {result.final:.4f} after {args.iters} iterations -> {args.out}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    emit_svg(parse_csv(args.csv), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    handler = {"run": _cmd_run, "ltn-train": _cmd_ltn_train, "plot": _cmd_plot}[args.command]
    try:
        return handler(args)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (UsageError, ConfigError, TheoryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
