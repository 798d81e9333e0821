"""Scenario configs: flat ``dotted.key = value`` text files.

Blank lines and ``#`` comments are ignored. Values are parsed as numbers
when they look like numbers; everything else stays a string. Lists use
commas, and ``lo:hi:step`` expands to an inclusive float range.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

KINDS = ("screening", "auction", "public-good", "simulate")
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")
_NUM = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _scalar(text):
    if _NUM.match(text):
        return int(text) if re.fullmatch(r"[+-]?\d+", text) else float(text)
    return text


def parse_value(text):
    text = text.strip()
    if "," in text:
        return [_scalar(t.strip()) for t in text.split(",") if t.strip()]
    return _scalar(text)


def parse_text(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not _KEY.match(key):
            raise ValidationError(f"{source}:{lineno}: malformed key {key!r}")
        if key in out:
            raise ValidationError(f"{source}:{lineno}: duplicate key {key!r}")
        if value == "":
            raise ValidationError(f"{source}:{lineno}: empty value for {key!r}")
        out[key] = parse_value(value)
    return out


def expand_range(value):
    """Numbers, comma lists or ``lo:hi:step`` strings to a float array."""
    if isinstance(value, (int, float)):
        return np.array([float(value)])
    if isinstance(value, list):
        return np.array([float(v) for v in value])
    parts = str(value).split(":")
    if len(parts) != 3:
        raise ValidationError(f"cannot read range {value!r}; use lo:hi:step or a comma list")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or hi < lo:
        raise ValidationError(f"bad range {value!r}")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 12)


@dataclass
class ScenarioConfig:
    values: dict
    source: str = "<config>"
    overrides: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
        cfg = cls(parse_text(text, str(path)), str(path))
        cfg.validate_kind()
        return cfg

    def validate_kind(self):
        kind = self.values.get("kind")
        if kind not in KINDS:
            raise ValidationError(f"'kind' must be one of {KINDS}, got {kind!r}")

    @property
    def kind(self):
        return self.values["kind"]

    def get(self, key, default=None):
        if key in self.overrides:
            return self.overrides[key]
        return self.values.get(key, default)

    def require(self, key):
        value = self.get(key)
        if value is None:
            raise ValidationError(f"missing required key {key!r}")
        return value

    def number(self, key, default=None, lo=None, hi=None, what=""):
        value = self.get(key, default)
        if value is None:
            raise ValidationError(f"missing required key {key!r}")
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValidationError(f"{key} must be numeric, got {value!r}")
        value = float(value)
        if not np.isfinite(value):
            raise ValidationError(f"{key} must be finite")
        if lo is not None and value < lo:
            raise ValidationError(f"{key}={value} must be >= {lo}{what}")
        if hi is not None and value > hi:
            raise ValidationError(f"{key}={value} must be <= {hi}{what}")
        return value

    def integer(self, key, default=None, lo=None):
        value = self.number(key, default, lo=lo)
        if value != int(value):
            raise ValidationError(f"{key} must be an integer")
        return int(value)

    def section(self, prefix):
        """Keys under ``prefix.`` with the prefix stripped."""
        p = prefix + "."
        merged = {**self.values, **self.overrides}
        return {k[len(p):]: v for k, v in merged.items() if k.startswith(p)}

    def effective(self):
        return dict(sorted({**self.values, **self.overrides}.items()))
