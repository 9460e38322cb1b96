from __future__ import annotations

import hashlib
import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from helixtorque.errors import ConfigError


def load_mapping(path: Path) -> dict[str, Any]:
    suffix = path.suffix.lower()
    raw = path.read_bytes()

    if suffix not in (".json", ".toml"):
        raise ConfigError(
            f"Unsupported config type: {suffix} (supported: .json, .toml)"
        )
    try:
        text = raw.decode("utf-8")
        data = json.loads(text) if suffix == ".json" else tomllib.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse {suffix[1:].upper()}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def format_float(value: float) -> str:
    if math.isnan(value) or math.isinf(value):
        return str(value)
    return f"{value:.17g}"


def write_csv(
    path: Path,
    *,
    metadata: dict[str, Any],
    header: Sequence[str],
    rows: Iterable[Sequence[float | int | str]],
) -> int:
    """Write a CSV artifact with `#` metadata lines; returns the data row count."""
    lines = [f"# {key}: {_meta_value(value)}" for key, value in sorted(metadata.items())]
    lines.append(",".join(header))
    count = 0
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
        count += 1
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return count


def write_json(path: Path, *, metadata: dict[str, Any], data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(
        {"metadata": metadata, "data": data},
        sort_keys=True,
        indent=2,
        ensure_ascii=False,
        allow_nan=True,
    )
    path.write_text(text + "\n", encoding="utf-8")


def _cell(value: float | int | str) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format_float(float(value))


def _meta_value(value: Any) -> str:
    if isinstance(value, str):
        return value
    return canonical_json(value)
