"""Flat JSON configuration schema and fixed-header CSV output."""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np


class ConfigError(ValueError):
    """Bad configuration: unknown key, wrong type or missing required value."""


def _number(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _integer(v):
    if isinstance(v, bool) or not isinstance(v, int) and not (isinstance(v, float) and v.is_integer()):
        raise TypeError("expected an integer")
    return int(v)


def _beta(v):
    return "optimize" if v == "optimize" else _number(v)


def _text(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _flag(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[Any], Any]
    default: Any
    help: str
    verbs: tuple[str, ...]


SIM = ("simulate",)
SWEEP = ("sweep",)
OPT = ("optimize",)
ALL_EXP = ("simulate", "sweep", "optimize")

KEYS = (
    Key("c_ar", _number, 0.0, "LOS fraction of the A-R link (symmetric runs use it for both links)", ALL_EXP),
    Key("c_br", _number, None, "LOS fraction of the B-R link; defaults to c_ar", ALL_EXP),
    Key("rho_db", _number, 20.0, "total SNR budget in dB", ALL_EXP),
    Key("beta", _beta, 0.6, "power split in (0, 1), or \"optimize\"", ("simulate", "sweep")),
    Key("L", _integer, 100, "coherence blocks per round (also the broadcast blocklength)", ALL_EXP),
    Key("rounds", _integer, 100, "protocol rounds per trajectory", ALL_EXP),
    Key("trials", _integer, 1000, "independent trajectories", SIM),
    Key("scheme", _text, "optimal", "buffer scheme: optimal, min or intermediate:<switch-on round>",
        ALL_EXP),
    Key("epsilon", _number, 3e-6, "per-bit mismatch target used to size the guard band", ALL_EXP),
    Key("outage_model", _text, "FiniteBlocklength", "AsymptoticMarcumQ or FiniteBlocklength", ALL_EXP),
    Key("seed", _integer, 0, "master seed; trial t uses the stream (seed, t)", SIM),
    Key("key_source", _text, "practical", "practical (two-level crossing) or fluid (floor(L*M) bits)", SIM),
    Key("nlos_scale", _number, 2.0, "scatter variance multiplier; 2 is the published channel convention",
        ALL_EXP + ("table1",)),
    Key("sweep_var", _text, "beta", "swept variable: beta, c or rho_db", SWEEP),
    Key("start", _number, 0.001, "first sweep value", SWEEP),
    Key("stop", _number, 0.999, "last sweep value (inclusive)", SWEEP),
    Key("step", _number, 0.001, "sweep step", SWEEP),
    Key("practical", _flag, False, "add key-length and finite-blocklength columns to sweeps", SWEEP),
    Key("method", _text, "grid", "optimiser: grid, lb, constrained or practical", OPT),
    Key("eta", _number, 1e-2, "outage target for the constrained optimiser", OPT),
)
BY_NAME = {k.name: k for k in KEYS}


def schema_help() -> str:
    lines = ["configuration keys (flat JSON object):"]
    for k in KEYS:
        lines.append(f"  {k.name:<13} [{', '.join(k.verbs)}] {k.help} (default: {json.dumps(k.default)})")
    return "\n".join(lines)


def _override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(verb: str, path: str | None = None, overrides=()) -> dict:
    """Merged and validated settings for ``verb``.  Unknown or foreign keys raise :class:`ConfigError`."""
    raw: dict = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    for text in overrides:
        k, v = _override(text)
        raw[k] = v
    out = {k.name: k.default for k in KEYS if verb in k.verbs}
    for name, value in raw.items():
        key = BY_NAME.get(name)
        if key is None:
            raise ConfigError(f"unknown config key {name!r}")
        if verb not in key.verbs:
            raise ConfigError(f"config key {name!r} does not apply to {verb}")
        try:
            out[name] = key.parse(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {name!r}: {exc}") from None
    return out


def fmt(v) -> str:
    """12-significant-digit float formatting; integers and strings pass through."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def _write_rows(fh, header, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row width does not match header")
        w.writerow([fmt(v) for v in row])


def write_csv(path, header, rows) -> None:
    """Write to ``path``, or to stdout when ``path`` is None or ``"-"``."""
    if path in (None, "-"):
        _write_rows(sys.stdout, header, rows)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, header, rows)
