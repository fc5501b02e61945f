"""RunConfig files: ``key = value`` lines, optionally grouped in ``[sections]``.

Keys before any section header belong to ``[run]``. Inside ``[lr]`` a key
``teacher`` means ``lr_teacher``; in every other section the key is the
field name itself. Relative paths resolve against the config file's folder.
"""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path

from .errors import ConfigError
from .pipeline import RunConfig

_TOP = " top"  # holds keys written before any header
SECTIONS = ("run", "data", "teacher", "student", "sampler", "bootstrap", "meta", "lr")
PATH_KEYS = ("edge_file", "feature_file", "split_manifest")
_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}

_TYPES = {
    "edge_file": str, "feature_file": str, "split_manifest": str, "num_nodes": int, "num_features": int,
    "sampler": str, "T": int, "beta": float, "delta": float, "student_delta": float, "tau": float,
    "N": int, "K": int, "dns_pool": int, "lr_teacher": float, "lr_student": float, "lr_inner": float,
    "lr_meta": float, "patience": int, "max_student_epochs": int, "seed": int, "filter_scope": str,
    "mebns": bool, "log_scores": bool,
}
assert set(_TYPES) == {f.name for f in dataclasses.fields(RunConfig)}


def _convert(key, raw):
    kind = _TYPES[key]
    raw = raw.strip()
    if raw.lower() in ("", "none") and key in ("feature_file", "split_manifest", "num_nodes", "num_features", "student_delta"):
        return None
    try:
        if kind is bool:
            return _BOOL[raw.lower()]
        if kind is int:
            return int(raw)
        return kind(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


def _field_name(section, key):
    if section == "lr":
        return f"lr_{key}"
    return key


def parse_text(text, base_dir=None, source="<config>"):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # T and N are case-sensitive
    try:
        cp.read_string(f"[{_TOP}]\n" + text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e.message.splitlines()[0]}") from None
    values = {}
    for raw_section in cp.sections():
        section = "run" if raw_section == _TOP else raw_section
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in cp.items(raw_section):
            name = _field_name(section, key)
            if name not in _TYPES:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            if name in values:
                raise ConfigError(f"config key {name!r} given twice")
            values[name] = _convert(name, raw)
    if base_dir is not None:
        for key in PATH_KEYS:
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str(Path(base_dir) / values[key])
    return values


def parse_config(path, overrides=None):
    """Read ``path`` into a validated RunConfig; ``overrides`` (already typed) win."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    values = parse_text(text, p.parent, str(p))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_dict(values)


def format_config(cfg):
    lines = []
    for key, value in cfg.to_dict().items():
        if value is None:
            continue
        lines.append(f"{key} = {str(value).lower() if isinstance(value, bool) else value}")
    return "\n".join(lines) + "\n"


def preset_path(name):
    return Path(__file__).with_name("presets") / f"{name}.cfg"
