"""Run configuration: an INI text document validated against a typed schema.

Every key must be known; errors carry the offending line and key. Values
given on the command line (``section.key=value``) override the document.
"""
from __future__ import annotations

import configparser
import math
import re

from .errors import ConfigError


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text):
    v = float(text)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _opt(conv):
    def parse(text):
        return None if text.strip().lower() in ("", "none") else conv(text)
    return parse


def _list(conv):
    def parse(text):
        return tuple(conv(p) for p in re.split(r"[,\s]+", text.strip()) if p)
    return parse


def _schedule(text):
    """``0:1e-3, 10:1e-4`` -> ((0, 1e-3), (10, 1e-4))"""
    out = []
    for part in re.split(r"[,\s]+", text.strip()):
        if not part:
            continue
        start, lr = part.split(":")
        out.append((int(start), float(lr)))
    if not out:
        raise ValueError("empty learning-rate schedule")
    return tuple(out)


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "seed": (int, 0),
        "output_dir": (str, "out"),
    },
    "scene": {
        "height": (int, 64),
        "width": (int, 64),
        "dates": (int, 2),
        "n_classes": (int, 3),
        "dynamic_db": (_float, 10.0),
        "change_fraction": (_float, 0.2),
        "cell_size": (_float, 6.0),
        "tau": (_float, 0.0),
        "tau_sweep": (_list(_float), ()),
        "ref_index": (int, 0),
        "base_level": (_float, 1.0),
        "sar_response": (_choice("identity", "apodized"), "identity"),
        "taper": (_float, 0.54),
        "oversampling": (_list(_float), (1.0, 1.0)),
        "ramp_fx": (_float, 0.0),
        "ramp_fy": (_float, 0.0),
    },
    "preprocess": {
        "input": (str, ""),
        "ref_date": (int, 0),
        "whiten": (_bool, True),
        "center": (_bool, True),
        "coh_window": (int, 7),
        "ds_quantile": (_opt(_float), None),
    },
    "arch": {
        "depth": (int, 2),
        "base_width": (int, 16),
    },
    "train": {
        "inputs": (_list(str), ()),
        "patch_size": (int, 32),
        "batch_size": (int, 8),
        "epochs": (int, 100),
        "lr_schedule": (_schedule, ((0, 1e-3),)),
        "patches_per_epoch": (_opt(int), None),
        "aux_dates": (_opt(_list(int)), None),
        "encoding": (_choice("log-intensity", "reim"), "log-intensity"),
        "dtype": (_choice("float32", "float64"), "float32"),
    },
    "despeckle": {
        "params": (str, ""),
        "input": (str, ""),
        "aux_dates": (_opt(_list(int)), None),
    },
    "eval": {
        "mode": (_choice("compare", "psnr-vs-T", "psnr-vs-coherence"), "compare"),
        "estimate": (str, ""),
        "truth": (str, ""),
        "truth_date": (int, 0),
        "peak": (_opt(_float), None),
        "size": (int, 128),
        "dates": (int, 8),
        "cell_size": (_float, 6.0),
        "n_train": (int, 6),
        "n_locations": (int, 2),
        "steps": (int, 1500),
        "patch_size": (int, 32),
        "batch_size": (int, 8),
        "base_width": (int, 16),
        "draws": (int, 2),
        "realizations": (int, 2),
        "t_values": (_list(int), (1, 2, 4, 8)),
        "coherence_targets": (_list(_float), (0.05, 0.2, 0.6)),
        "whiten_targets": (_list(_float), (0.6,)),
    },
}


class RunConfig:
    """Validated configuration: ``cfg[section][key]`` plus the source text for hashing."""

    def __init__(self, values, text, lines):
        self.values = values
        self.text = text
        self.lines = lines

    def __getitem__(self, section):
        return self.values[section]

    def line_of(self, section, key):
        return self.lines.get((section, key))

    def canonical(self):
        """Deterministic text form of every resolved value (defaults included)."""
        parts = []
        for sec in sorted(self.values):
            for key in sorted(self.values[sec]):
                parts.append(f"{sec}.{key}={self.values[sec][key]!r}")
        return "\n".join(parts)


def _line_index(text):
    """(section, key) -> 1-based line number, by a plain scan of the document."""
    out = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), i)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip().lower()), i)
    return out


def parse_config(text: str, overrides=()) -> RunConfig:
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], line=line) from exc

    raw = {sec: dict(cp.items(sec)) for sec in cp.sections()}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, value = item.split("=", 1)
        sec, key = dotted.strip().split(".", 1)
        raw.setdefault(sec, {})[key.strip().lower()] = value

    values = {}
    for sec, entries in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", line=lines.get((sec, None)))
        for key in entries:
            if key not in SCHEMA[sec]:
                known = ", ".join(sorted(SCHEMA[sec]))
                raise ConfigError(f"unknown key in [{sec}]; expected one of: {known}",
                                  key=key, line=lines.get((sec, key)))
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (conv, default) in keys.items():
            if key in raw.get(sec, {}):
                try:
                    values[sec][key] = conv(raw[sec][key])
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"invalid value {raw[sec][key]!r} in [{sec}]: {exc}",
                                      key=key, line=lines.get((sec, key))) from exc
            else:
                values[sec][key] = default
    return RunConfig(values, text, lines)


def load_config(path, overrides=()) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, overrides)
