"""Run configuration: one JSON document, every key a dotted CLI flag.

The flattened key schema below drives both the JSON loader and the CLI
option generator, so the two can never drift apart.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .gateway import ProviderConfig


@dataclass(frozen=True)
class RuntimeConfig:
    """Where the script-execution tails live and how to invoke them."""
    dir: str | None = None
    interpreter: str | None = None
    fixture_dir: str | None = None  # set: replay recorded script results


@dataclass(frozen=True)
class RunConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    stimulus_samples: int = 3
    emulator_samples: int = 5
    improve_iterations: int = 3
    temperature: float = 0.3
    validation_budget: int = 2
    candidate_workers: int = 4
    eval_workers: int = 2
    script_timeout_s: float = 30.0
    sim_run_timeout_s: float = 60.0
    build_timeout_s: float = 120.0
    workspace: str = "runs"

    def __post_init__(self):
        counts = ("stimulus_samples", "emulator_samples", "improve_iterations",
                  "validation_budget", "candidate_workers", "eval_workers")
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        for name in ("script_timeout_s", "sim_run_timeout_s",
                     "build_timeout_s"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")


def _leaf_fields(cls, prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in dataclasses.fields(cls):
        if dataclasses.is_dataclass(f.type) or f.name in ("provider",
                                                          "runtime"):
            sub = {"provider": ProviderConfig,
                   "runtime": RuntimeConfig}[f.name]
            out.update(_leaf_fields(sub, f"{f.name}."))
        else:
            out[prefix + f.name] = f
    return out


# dotted key -> dataclass field, e.g. "provider.kind", "improve_iterations"
CONFIG_KEYS: dict[str, Any] = _leaf_fields(RunConfig)


def _coerce(key: str, value: Any) -> Any:
    """Coerce a string (CLI) or JSON value to the field's declared type."""
    ann = str(CONFIG_KEYS[key].type)
    if value is None:
        return None
    if "int" in ann and "str" not in ann:
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if "float" in ann:
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def _flatten(doc: dict, prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for k, v in doc.items():
        dotted = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, f"{dotted}."))
        else:
            flat[dotted] = v
    return flat


def _build(flat: dict[str, Any]) -> RunConfig:
    def sub(cls, prefix):
        kwargs = {f.name: _coerce(prefix + f.name, flat.pop(prefix + f.name))
                  for f in dataclasses.fields(cls)
                  if prefix + f.name in flat}
        return cls(**kwargs)

    provider = sub(ProviderConfig, "provider.")
    runtime = sub(RuntimeConfig, "runtime.")
    top = {k: _coerce(k, v) for k, v in flat.items()}
    return RunConfig(provider=provider, runtime=runtime, **top)


def load_config(path: str | Path | None = None,
                overrides: dict[str, Any] | None = None) -> RunConfig:
    """Defaults <- JSON file <- dotted-key overrides, in that order."""
    flat: dict[str, Any] = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError("config file: top level must be an object")
        flat.update(_flatten(doc))
    flat.update(overrides or {})
    unknown = sorted(set(flat) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return _build(flat)
    except TypeError as exc:
        raise ConfigError(str(exc))


def config_to_dict(cfg: RunConfig) -> dict:
    """Nested plain-dict form, suitable for run_meta.json."""
    return dataclasses.asdict(cfg)
