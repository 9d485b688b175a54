"""Flat ``section.key = value`` run configuration with parse-time validation."""

import hashlib
import json
from dataclasses import dataclass

from .errors import ConfigurationError

# key -> (type, default); "auto" is accepted where noted by the builders
DEFAULTS = {
    "domain.kind": (str, "interval"),
    "domain.beta": (float, 1.0),
    "domain.boundary_resolution": (int, 4),
    "domain.interior": (str, "0.5"),
    "time.horizon": (float, 0.5),
    "time.steps": (int, 50),
    "noise.hurst": (float, 0.75),
    "noise.s_cells": (int, 4),
    "noise.seed": (int, 20240601),
    "noise.replicas": (int, 4),
    "alpha.kind": (str, "sine"),
    "alpha.claims": (str, "auto"),
    "alpha.theta": (str, "auto"),
    "g.kind": (str, "tanh"),
    "g.L": (float, 1.0),
    "g.c": (float, 0.0),
    "g.smoothness": (str, "G2"),
    "solver.tol": (float, 1e-10),
    "solver.max_iter": (int, 200),
    "solver.lambda": (str, "auto"),
    "solver.p": (float, 2.0),
    "solver.mu": (float, 0.75),
    "probe.node": (int, 0),
    "probe.kernel_method": (str, "spectral"),
    "probe.kernel_terms": (int, 6),
    "probe.kernel_times": (str, "0.01,0.2,8"),
    "probe.deltas": (str, "0.02,0.2,8"),
    "probe.replicas": (int, 500),
    "probe.samples": (int, 10000),
    "probe.epsilons": (str, "auto"),
    "probe.order": (int, 1),
    "probe.anchor": (str, "auto"),
    "probe.route": (str, "increment"),
    "output.dir": (str, "fbh_output"),
    "output.format": (str, "csv"),
}

_BOOL = {"true": True, "false": False}


def _coerce(key, value):
    typ = DEFAULTS[key][0]
    if isinstance(value, bool):
        raise ConfigurationError(f"{key}: boolean not accepted", key=key)
    try:
        if typ is int:
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        if typ is float:
            return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: cannot read {value!r} as {typ.__name__}",
                                 key=key) from None
    return str(value)


def parse_value(text):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    low = text.lower()
    if low in _BOOL:
        return _BOOL[low]
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_text(text):
    """Lines of ``section.key = value``; '#' starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = parse_value(value)
    return out


def parse_override(item):
    if "=" not in item:
        raise ConfigurationError(f"--set expects key=value, got {item!r}")
    key, value = item.split("=", 1)
    return key.strip(), parse_value(value)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def floats(self, key):
        return [float(v) for v in str(self.values[key]).split(",") if v.strip()]

    def auto(self, key):
        return str(self.values[key]).strip().lower() == "auto"

    def text(self):
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))

    def digest(self):
        return hashlib.sha256(json.dumps(self.values, sort_keys=True).encode()).hexdigest()


def _validate(v):
    h = v["noise.hurst"]
    if not 0.5 <= h < 1.0:
        raise ConfigurationError("noise.hurst out of range: need 1/2 <= H < 1", key="noise.hurst")
    if not 0.5 < v["solver.mu"] < 1.0:
        raise ConfigurationError("solver.mu out of range: need 1/2 < mu < 1", key="solver.mu")
    if v["domain.kind"] not in ("interval", "rectangle"):
        raise ConfigurationError("domain.kind must be interval or rectangle", key="domain.kind")
    if not v["domain.beta"] > 0.0:
        raise ConfigurationError("domain.beta must be positive", key="domain.beta")
    for key in ("time.steps", "noise.s_cells", "domain.boundary_resolution", "noise.replicas"):
        if v[key] < 1:
            raise ConfigurationError(f"{key} must be at least 1", key=key)
    if not v["time.horizon"] > 0.0:
        raise ConfigurationError("time.horizon must be positive", key="time.horizon")
    if v["output.format"] != "csv":
        raise ConfigurationError("output.format must be csv (reports are always JSON)",
                                 key="output.format")
    claims = str(v["alpha.claims"])
    if "a1'" in claims.split(","):
        if str(v["alpha.theta"]).lower() == "auto":
            raise ConfigurationError("alpha.theta is required when alpha claims a1'", key="alpha.theta")
        d = 1 if v["domain.kind"] == "interval" else 2
        theta = float(v["alpha.theta"])
        if h > 0.5:
            bound = (d - 1) / (2 * h - 1)
        else:
            bound = 0.0 if d == 1 else float("inf")
        if not theta > bound:
            raise ConfigurationError("alpha.theta must exceed (d-1)/(2H-1) under a1'", key="alpha.theta")


def build_config(base=None, overrides=()):
    """Defaults, then ``base`` (dict), then overrides; unknown keys are errors."""
    values = {k: d for k, (_, d) in DEFAULTS.items()}
    for source in (base or {}, dict(overrides)):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ConfigurationError(f"unknown config key {key!r}", key=key)
            values[key] = _coerce(key, value)
    _validate(values)
    return RunConfig(values)


def load_config(path, overrides=()):
    """Read a config file or a run manifest (JSON with a ``config`` record)."""
    if path is None:
        return build_config(None, overrides)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"manifest {path} is not valid JSON: {exc}") from None
        base = data.get("config", data)
    else:
        base = parse_text(text)
    return build_config(base, overrides)
