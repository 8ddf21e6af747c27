"""Flat ``key=value`` configuration files."""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Iterable, TypeVar, Union

T = TypeVar("T")


class ConfigError(ValueError):
    """Invalid configuration, carrying the offending line and field when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = field


def parse_kv(text: str) -> dict[str, tuple[str, int]]:
    """Parse ``key=value`` lines into ``{key: (value, line_number)}``.

    Blank lines and ``#`` comments are skipped; duplicate keys are errors.
    """
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected key=value", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in out:
            raise ConfigError("duplicate key", line=lineno, field=key)
        out[key] = (value, lineno)
    return out


def read_kv(path: Union[str, Path]) -> dict[str, tuple[str, int]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_kv(text)


def take(
    entries: dict[str, tuple[str, int]],
    key: str,
    convert: Callable[[str], T],
    default: T,
) -> T:
    if key not in entries:
        return default
    value, lineno = entries[key]
    try:
        return convert(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value {value!r} ({exc})", line=lineno, field=key) from exc


def int_set(value: str) -> frozenset[int]:
    return frozenset(int(v) for v in value.replace(",", " ").split())


def str_list(value: str) -> tuple[str, ...]:
    return tuple(v for v in value.replace(",", " ").split())


def reject_unknown(entries: dict[str, tuple[str, int]], known: Iterable[str]) -> None:
    allowed = set(known)
    for key, (_, lineno) in entries.items():
        if key not in allowed:
            raise ConfigError("unknown key", line=lineno, field=key)
