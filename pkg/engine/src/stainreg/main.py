# src/stainreg/main.py
import argparse
import importlib
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from stainreg import config
from stainreg.errors import StainRegError

_log = logging.getLogger(__name__)
LOG_FORMAT = "%(asctime)s:%(levelname)s:%(name)s: %(message)s"
_STAINREG_LOG_HANDLER_ATTR = "_stainreg_managed_handler"

COMMAND_MODULES = (
    "stainreg.commands.benchmark",
    "stainreg.commands.registration",
    "stainreg.commands.scoring",
    "stainreg.commands.selftest",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stainreg", description="Stain-pair registration engine and landmark scoring harness"
    )
    parser.add_argument("--config", help="Config file of 'key = value' lines")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one setting, e.g. --set register.alpha=5 (repeatable)",
    )
    parser.add_argument("--threads", type=int, help="Worker processes (runtime.threads; default all cores)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log at DEBUG level")
    parser.add_argument("--log-file", help="Also write the log to this file (runtime.log_file)")

    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for module in COMMAND_MODULES:
        importlib.import_module(module).setup(subparsers)
    return parser


def configure_logging(log_file: str | None = None, verbose: bool = False) -> None:
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG if verbose else logging.INFO)

    for handler in root_logger.handlers[:]:
        if getattr(handler, _STAINREG_LOG_HANDLER_ATTR, False):
            root_logger.removeHandler(handler)
            handler.close()

    formatter = logging.Formatter(LOG_FORMAT)

    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(formatter)
    setattr(stream_handler, _STAINREG_LOG_HANDLER_ATTR, True)
    root_logger.addHandler(stream_handler)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path, encoding="utf-8")
        file_handler.setFormatter(formatter)
        setattr(file_handler, _STAINREG_LOG_HANDLER_ATTR, True)
        root_logger.addHandler(file_handler)


def handle_command_error(command: str, error: BaseException) -> int:
    """Logs a failed command and returns its exit code."""
    match error:
        case StainRegError() as e:
            _log.log(e.log_level, "%s - Handled (%s): %s", command, type(e).__name__, e)
            return e.exit_code

        case OSError() as e:
            _log.error("%s - I/O error: %s", command, e)
            return 1

        case _:
            _log.error("%s - Unhandled error: %s", command, error, exc_info=error)
            return 1


def run_command(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 for --help
        return e.code if isinstance(e.code, int) else 2

    configure_logging(args.log_file, args.verbose)
    try:
        overrides = list(args.overrides)
        if args.threads is not None:
            overrides.append(f"runtime.threads = {args.threads}")
        settings = config.load_config(args.config, overrides)
        if settings.runtime.log_file and not args.log_file:
            configure_logging(settings.runtime.log_file, args.verbose)
            _log.info("Logging to %s", settings.runtime.log_file)
        return args.handler(args, settings)
    except Exception as e:
        return handle_command_error(args.command, e)


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
