"""Key-value text configuration.

The on-disk format is one `key = value` pair per line.  Blank lines and
lines starting with `#` are ignored.  Keys may carry dotted section
prefixes (`frontend.frame_ms = 25`); sections are just a naming
convention handled by `section()`.
"""

import math
from pathlib import Path

from .errors import ConfigError


def parse_kv_text(text: str, source: str = "<string>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_kv(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    return parse_kv_text(text, source=str(path))


def section(values: dict, prefix: str) -> dict:
    """Sub-dict of keys under `prefix.`, with the prefix stripped."""
    head = prefix + "."
    return {k[len(head):]: v for k, v in values.items() if k.startswith(head)}


def get_str(values: dict, key: str, default=None) -> str:
    if key in values:
        return values[key]
    if default is None:
        raise ConfigError(f"missing required config key {key!r}")
    return default


def get_int(values: dict, key: str, default=None) -> int:
    raw = values.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: expected integer, got {raw!r}")


def get_float(values: dict, key: str, default=None) -> float:
    raw = values.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: expected number, got {raw!r}")
    return value


def get_bool(values: dict, key: str, default=None) -> bool:
    raw = values.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key {key!r}: expected boolean, got {raw!r}")


def get_int_list(values: dict, key: str, default=None) -> list:
    raw = values.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return list(default)
    if not raw:
        return []
    try:
        return [int(part.strip()) for part in raw.split(",")]
    except ValueError:
        raise ConfigError(f"config key {key!r}: expected comma-separated integers, got {raw!r}")


def get_float_list(values: dict, key: str, default=None) -> list:
    raw = values.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return list(default)
    if not raw:
        return []
    try:
        return [float(part.strip()) for part in raw.split(",")]
    except ValueError:
        raise ConfigError(f"config key {key!r}: expected comma-separated numbers, got {raw!r}")


def parse_snr(raw: str) -> float:
    """SNR in dB; 'inf' disables noise."""
    if raw.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad SNR value {raw!r}")
