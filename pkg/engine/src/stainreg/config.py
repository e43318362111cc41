# src/stainreg/config.py
"""
Layered configuration: dataclass defaults < config file < environment < `--set` overrides.

Every field of the section dataclasses is addressable as `<section>.<field>`,
e.g. `register.alpha` or `eval.dba_threshold_um`. Config files hold one
`key = value` per line with `#` comments.
"""

import logging
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Any

from dotenv import load_dotenv

from stainreg.errors import ArgumentError, StainRegError
from stainreg.evalbench.scoring import EvalConfig
from stainreg.register.settings import RegConfig
from stainreg.similarity.measures import SimilarityConfig
from stainreg.synthgen.settings import SynthSpec
from stainreg.util import format_setting

_log = logging.getLogger(__name__)

_config_cache: "Settings | None" = None

load_dotenv()

ENV_OVERRIDES = {
    "STAINREG_THREADS": "runtime.threads",
    "STAINREG_LOG_FILE": "runtime.log_file",
    "STAINREG_SEED": "register.seed",
}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


class ConfigError(StainRegError):
    """Raised for unknown keys, malformed lines and values that do not fit their setting."""

    log_level = logging.WARNING
    exit_code = 2

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}, line {line}: " if line is not None else f"{source}: "
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class RuntimeConfig:
    threads: int = 0  # 0 uses every available core
    log_file: str = ""

    def __post_init__(self):
        if self.threads < 0:
            raise ArgumentError(f"threads must be >= 0, got {self.threads}")

    @property
    def workers(self) -> int:
        return self.threads or os.cpu_count() or 1


@dataclass(frozen=True)
class Settings:
    """The effective configuration of one command."""

    register: RegConfig = field(default_factory=RegConfig)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    eval: EvalConfig = field(default_factory=EvalConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)

    def registration(self) -> RegConfig:
        """Registration parameters with the similarity section folded in."""
        return replace(self.register, ngf=self.similarity)


SECTIONS = tuple(f.name for f in fields(Settings))


def _section_fields(section: Any) -> dict[str, Any]:
    """Scalar and tuple fields of a section; nested dataclasses are configured through their own section."""
    return {f.name: getattr(section, f.name) for f in fields(section) if not is_dataclass(getattr(section, f.name))}


def known_keys(settings: Settings | None = None) -> list[str]:
    settings = settings or Settings()
    return sorted(f"{name}.{key}" for name in SECTIONS for key in _section_fields(getattr(settings, name)))


def _coerce(text: str, default: Any, key: str) -> Any:
    value = text.strip()
    match default:
        case bool():
            lowered = value.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"'{key}' expects true or false, got {value!r}")
        case int():
            return int(value)
        case float():
            return float(value)
        case tuple():
            items = [item.strip() for item in value.split(",") if item.strip()]
            element = default[0] if default else 0.0
            return tuple(_coerce(item, element, key) for item in items)
        case _:
            return value


def parse_assignment(line: str) -> tuple[str, str] | None:
    """(key, value) of a `key = value` line; None for blank and comment lines."""
    text = line.split("#", 1)[0].strip()
    if not text:
        return None
    if "=" not in text:
        raise ValueError(f"expected 'key = value', got {line.strip()!r}")
    key, value = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ValueError("missing key before '='")
    return key, value.strip()


def _apply(values: dict[str, dict[str, Any]], key: str, text: str, source: str, line: int | None) -> None:
    section, _, name = key.partition(".")
    if section not in values or name not in values[section]:
        raise ConfigError(f"unknown setting '{key}'", source, line)
    try:
        values[section][name] = _coerce(text, values[section][name], key)
    except ValueError as e:
        raise ConfigError(f"bad value for '{key}': {e}", source, line) from None


def read_config_file(path: str | os.PathLike) -> list[tuple[int, str, str]]:
    """(line number, key, value) of every assignment in a config file."""
    try:
        with open(path, encoding="utf-8") as file:
            lines = file.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot read config file: {e}", os.fspath(path)) from None
    assignments = []
    for number, line in enumerate(lines, start=1):
        try:
            parsed = parse_assignment(line)
        except ValueError as e:
            raise ConfigError(str(e), os.fspath(path), number) from None
        if parsed is not None:
            assignments.append((number, *parsed))
    return assignments


def build_settings(
    path: str | os.PathLike | None = None,
    overrides: Iterable[str] = (),
    environ: Mapping[str, str] | None = None,
) -> Settings:
    """Resolves every layer into one validated Settings, without touching the cache."""
    defaults = Settings()
    values = {name: _section_fields(getattr(defaults, name)) for name in SECTIONS}

    if path is not None:
        source = os.fspath(path)
        for number, key, text in read_config_file(path):
            _apply(values, key, text, source, number)

    environ = os.environ if environ is None else environ
    for variable, key in ENV_OVERRIDES.items():
        if environ.get(variable):
            _apply(values, key, environ[variable], variable, None)

    for position, override in enumerate(overrides, start=1):
        try:
            parsed = parse_assignment(override)
        except ValueError as e:
            raise ConfigError(str(e), "--set", position) from None
        if parsed is not None:
            _apply(values, *parsed, "--set", position)

    sections = {}
    for name in SECTIONS:
        try:
            sections[name] = replace(getattr(defaults, name), **values[name])
        except ArgumentError as e:
            raise ConfigError(f"invalid [{name}] settings: {e}") from None
    return Settings(**sections)


def load_config(path: str | os.PathLike | None = None, overrides: Iterable[str] = ()) -> Settings:
    """Builds the effective configuration and makes it the cached one returned by get_config()."""
    global _config_cache
    _config_cache = build_settings(path, overrides)
    _log.debug("Configuration loaded from %s", path or "defaults")
    return _config_cache


def get_config() -> Settings:
    """Returns the loaded configuration, loading the defaults if necessary."""
    if _config_cache is None:
        _log.warning("Config accessed before explicit load. Loading defaults.")
        load_config()

    if _config_cache is None:
        raise ConfigError("Configuration is not available.")

    return _config_cache


def dump_config(settings: Settings) -> str:
    """Sorted `key = value` lines that load_config reads back into the same settings."""
    lines = ["# effective configuration"]
    for name in SECTIONS:
        section = _section_fields(getattr(settings, name))
        lines += [f"{name}.{key} = {format_setting(value)}" for key, value in sorted(section.items())]
    return "\n".join(lines) + "\n"
