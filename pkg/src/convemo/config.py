"""Flat key=value config files shared by the CLI commands.

Lines look like `d_model = 64` or `policy.text = dependent`; blank lines
and `#` comments are ignored. Values stay strings here and are coerced by
the consuming config dataclass.
"""

from __future__ import annotations

from pathlib import Path


def load_config_file(path: str | Path) -> dict[str, str]:
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def parse_bool(value: str | bool) -> bool:
    if isinstance(value, bool):
        return value
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")
