"""Strict parsing of plain dicts (JSON configs, manifests) into dataclasses.

Rejects unknown keys, names the full dotted path of the offending key, and
coerces nested dataclasses and tuple fields. Values never pass through
silently: a type mismatch is an error, not a cast.
"""

from __future__ import annotations

import dataclasses
import typing
from typing import Any, Union


class ConfigError(ValueError):
    """Bad configuration: unknown key, missing key, or wrong value type."""


def _type_name(hint: Any) -> str:
    return getattr(hint, "__name__", str(hint))


def _coerce(hint: Any, value: Any, path: str) -> Any:
    if hint is Any:
        return value
    origin = typing.get_origin(hint)
    if origin is Union:
        args = typing.get_args(hint)
        if value is None:
            if type(None) in args:
                return None
            raise ConfigError(f"config key '{path}' must not be null")
        errors = []
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _coerce(arg, value, path)
            except ConfigError as exc:
                errors.append(str(exc))
        raise ConfigError(errors[0] if errors else f"config key '{path}' has no matching type")
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError(f"config key '{path}' expects an object, got {type(value).__name__}")
        return from_dict(hint, value, path + ".")
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"config key '{path}' expects a list, got {type(value).__name__}")
        args = typing.get_args(hint)
        if args and args[-1] is not Ellipsis and len(args) != len(value):
            raise ConfigError(f"config key '{path}' expects {len(args)} items, got {len(value)}")
        item_hint = args[0] if args else Any
        coerced = [_coerce(item_hint, v, f"{path}[{i}]") for i, v in enumerate(value)]
        return tuple(coerced) if origin is tuple else coerced
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"config key '{path}' expects a boolean, got {type(value).__name__}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key '{path}' expects an integer, got {type(value).__name__}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key '{path}' expects a number, got {type(value).__name__}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"config key '{path}' expects a string, got {type(value).__name__}")
        return value
    return value


def from_dict(cls: type, data: dict, path: str = "") -> Any:
    """Build dataclass `cls` from `data`, failing loudly on any surprise."""
    if not dataclasses.is_dataclass(cls):
        raise TypeError(f"{cls!r} is not a dataclass")
    if not isinstance(data, dict):
        raise ConfigError(f"config section '{path or cls.__name__}' expects an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    field_map = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in field_map:
            raise ConfigError(f"unknown config key '{path}{key}'")
    kwargs = {}
    for name, f in field_map.items():
        full = f"{path}{name}"
        if name in data:
            kwargs[name] = _coerce(hints[name], data[name], full)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"missing required config key '{full}'")
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
