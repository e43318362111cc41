# src/stainreg/commands/__init__.py
"""
Subcommands of the `stainreg` CLI. Each module exposes `setup(subparsers)`,
which registers its parsers with a `handler(args, settings) -> exit code`.
"""

import logging
import os
from dataclasses import replace
from pathlib import Path

from stainreg.config import Settings, dump_config
from stainreg.data.atomic import atomic_write_text

_log = logging.getLogger(__name__)

CONFIG_ECHO = "config.txt"


def with_flags(settings: Settings, section: str, **values) -> Settings:
    """Folds command flags that were given (not None) into one config section."""
    given = {key: value for key, value in values.items() if value is not None}
    if not given:
        return settings
    return replace(settings, **{section: replace(getattr(settings, section), **given)})


def echo_config(settings: Settings, destination: str | os.PathLike, directory: bool = False) -> Path:
    """
    Persists the effective configuration next to a command's output:
    `<dir>/config.txt` for directory outputs, `<stem>.config.txt` beside file outputs.
    """
    target = Path(destination)
    path = target / CONFIG_ECHO if directory else target.with_name(f"{target.stem}.{CONFIG_ECHO}")
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(path, dump_config(settings))
    _log.debug("Effective configuration written to %s", path)
    return path


def prepare_output(path: str | os.PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    return target
