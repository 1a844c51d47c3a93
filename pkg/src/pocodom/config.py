"""INI-style pipeline configuration.

Sections mirror :class:`~pocodom.pipeline.PipelineConfig`: ``[pipeline]``
holds its scalar fields, ``[ransac]``, ``[cluster]``, ``[grid]``, ``[icp]``
and ``[poc]`` the nested parameter blocks.  Unknown sections or keys are
errors.
"""
from __future__ import annotations

import configparser
from dataclasses import fields, replace

from .errors import ConfigError
from .geometry import KITTI, LEFT_UP_FORWARD, FrameConvention
from .pipeline import PipelineConfig

CONVENTIONS = {"kitti": KITTI, "left-up-forward": LEFT_UP_FORWARD}
NESTED = ("ransac", "cluster", "grid", "icp", "poc")


def _convention_name(conv):
    for name, value in CONVENTIONS.items():
        if value == conv:
            return name
    raise ConfigError(f"frame convention {conv} has no name")


def _parse(raw: str, default, where):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = raw.replace(",", " ").split()
            if len(parts) != len(default):
                raise ValueError(f"expected {len(default)} values, got {len(parts)}")
            return tuple(float(p) for p in parts)
        if isinstance(default, FrameConvention):
            key = raw.strip().lower()
            if key not in CONVENTIONS:
                raise ValueError(f"unknown frame convention {raw!r}; choose from {sorted(CONVENTIONS)}")
            return CONVENTIONS[key]
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unsupported field type {type(default).__name__}")


def _apply_section(obj, items, section):
    known = {f.name for f in fields(obj)}
    updates = {}
    for key, raw in items:
        if key not in known or key in NESTED:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        updates[key] = _parse(raw, getattr(obj, key), f"[{section}] {key}")
    try:
        return replace(obj, **updates)
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def parse_config(text: str, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="\x00unused")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = base
    for section in parser.sections():
        items = parser.items(section)
        if section == "pipeline":
            cfg = _apply_section(cfg, items, section)
        elif section in NESTED:
            block = _apply_section(getattr(cfg, section), items, section)
            cfg = replace(cfg, **{section: block})
        else:
            raise ConfigError(f"unknown section [{section}]")
    return cfg


def load_config(path, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base)


def _format(value):
    if isinstance(value, FrameConvention):
        return _convention_name(value)
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: PipelineConfig) -> str:
    """Text that :func:`parse_config` turns back into ``cfg``."""
    lines = ["[pipeline]"]
    for f in fields(cfg):
        if f.name not in NESTED:
            lines.append(f"{f.name} = {_format(getattr(cfg, f.name))}")
    for section in NESTED:
        block = getattr(cfg, section)
        lines += ["", f"[{section}]"]
        lines += [f"{g.name} = {_format(getattr(block, g.name))}" for g in fields(block)]
    return "\n".join(lines) + "\n"
