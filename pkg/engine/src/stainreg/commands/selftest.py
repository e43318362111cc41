# src/stainreg/commands/selftest.py
import argparse
import logging
import sys

from stainreg.config import Settings, dump_config
from stainreg.selftest import SUITES, format_report, require_passed, run_selftest

_log = logging.getLogger(__name__)


def selftest(args: argparse.Namespace, settings: Settings) -> int:
    _log.debug("Effective configuration:\n%s", dump_config(settings))
    reports = run_selftest(args.suite, args.seed)
    sys.stdout.write(format_report(reports))
    require_passed(reports)
    return 0


def setup(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("selftest", help="Run the built-in verification suites")
    parser.add_argument("--suite", action="append", choices=list(SUITES), help="Run only this suite (repeatable)")
    parser.add_argument("--seed", type=int, default=0)
    parser.set_defaults(handler=selftest)
