"""Command line for lexicographic safety / LTL / return learning.

    python cli.py run configs/case_study.json --episodes 512 --seed 3
    python cli.py verify configs/case_study.json --checkpoint runs/case_study/checkpoint.json
    python cli.py oracle configs/toy_grid.json
    python cli.py render runs/case_study/policy.json
    python cli.py translate "[]!(d & X d)"

Exit codes: 0 success, 1 library error (message on stderr), 2 usage error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from core.automata import safety_to_automaton
from core.config import ORACLE_FILE
from core.errors import LexRLError, NotSafetyFormulaError
from core.experiment import full_scale, oracle_only, prepare, run, run_many, verify, VERIFY_MIN_VISITS
from core.hoa import print_hoa, read_hoa
from core.ltl import is_syntactic_safety, parse_ltl, print_ltl
from core.models import ExperimentConfig
from core.render import read_policy_export, render_policy

logger = logging.getLogger("cli")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# flag -> ExperimentConfig.with_overrides keyword
OVERRIDES = {
    "gamma": float,
    "r_safety": float,
    "r_ltl": float,
    "tau_safety": float,
    "tau_ltl": float,
    "upsilon": float,
    "epsilon": float,
    "alpha": float,
    "episodes": int,
    "horizon": int,
    "seed": int,
}


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("overrides")
    for name, kind in OVERRIDES.items():
        group.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=None)
    group.add_argument("--output", dest="output_dir", default=None, help="Run directory")


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config)
    overrides = {name: getattr(args, name, None) for name in OVERRIDES}
    overrides["output_dir"] = getattr(args, "output_dir", None)
    return config.with_overrides(**overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexrl",
        description="Lexicographic safety, LTL and return learning on labeled MDPs",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    run_cmd = commands.add_parser("run", help="Train, evaluate and write a run directory")
    run_cmd.add_argument("config", help="Experiment config (JSON)")
    _add_overrides(run_cmd)
    run_cmd.add_argument("--full-scale", action="store_true",
                         help="Use the full case-study budget (hours of compute)")
    run_cmd.add_argument("--runs", type=int, default=1, help="Independent seeds to run in parallel")
    run_cmd.add_argument("--workers", type=int, default=None, help="Process pool size for --runs")

    verify_cmd = commands.add_parser("verify", help="Compare a checkpoint with the exact oracle")
    verify_cmd.add_argument("config", help="Experiment config (JSON)")
    verify_cmd.add_argument("--checkpoint", required=True, help="Checkpoint file to check")
    verify_cmd.add_argument("--min-visits", type=int, default=VERIFY_MIN_VISITS)
    _add_overrides(verify_cmd)

    oracle_cmd = commands.add_parser("oracle", help="Model-check the configured product")
    oracle_cmd.add_argument("config", help="Experiment config (JSON)")
    _add_overrides(oracle_cmd)

    render_cmd = commands.add_parser("render", help="Render a policy export")
    render_cmd.add_argument("policy", help="policy.json written by run")
    render_cmd.add_argument("--output", default=None, help="Directory for the renders")

    translate_cmd = commands.add_parser("translate", help="Translate a safety formula or normalize a HOA file")
    source = translate_cmd.add_mutually_exclusive_group(required=True)
    source.add_argument("formula", nargs="?", help="Safety-fragment LTL formula")
    source.add_argument("--hoa", help="HOA file to read and print canonically")
    translate_cmd.add_argument("--alphabet", default=None, help="Comma-separated proposition names")
    translate_cmd.add_argument("--output", default=None, help="Write the HOA text here instead of stdout")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.full_scale:
        config = full_scale(config)
    if args.runs > 1:
        for directory in run_many(config, args.runs, args.workers):
            print(directory)
    else:
        print(run(config).output_dir)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    report = verify(_load_config(args), args.checkpoint, args.min_visits)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    config = _load_config(args)
    product = prepare(config)
    result = oracle_only(config, product)
    x = product.initial
    summary = {
        "initial_state": product.state_name(x),
        "pr_safety": float(result.pr_safety[x]),
        "pr_buchi_given_safe": float(result.pr_buchi_given_safe[x]),
        "pr_combined": float(result.pr_combined[x]),
        "max_return": float(result.max_return[x]),
        "report": str(Path(config.output_dir) / ORACLE_FILE),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    document = read_policy_export(args.policy)
    output = args.output or str(Path(args.policy).parent)
    for path in render_policy(document, output):
        print(path)
    return 0


def cmd_translate(args: argparse.Namespace) -> int:
    if args.hoa:
        text = print_hoa(read_hoa(args.hoa))
    else:
        alphabet = args.alphabet.split(",") if args.alphabet else None
        formula = parse_ltl(args.formula, alphabet)
        if not is_syntactic_safety(formula):
            raise NotSafetyFormulaError(
                f"'{print_ltl(formula)}' is not a safety formula; translate it with an external "
                "LTL-to-LDBA tool and import the HOA file"
            )
        text = print_hoa(safety_to_automaton(formula).to_ldba())
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "run": cmd_run,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
    "render": cmd_render,
    "translate": cmd_translate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    try:
        return COMMANDS[args.command](args)
    except LexRLError as exc:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
