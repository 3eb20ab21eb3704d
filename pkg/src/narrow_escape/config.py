"""Run configuration: strict TOML/JSON parsing and resolution to model objects."""
from __future__ import annotations

import json
import os
import re
import sys
from dataclasses import dataclass, field
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geometry import Ellipsoid, SurfaceGeometry, WindowSpec, ellipsoid, make_window, sphere, unit_ball

__all__ = ["ConfigError", "RunConfig", "load_file", "section_file", "merge", "resolve",
           "parse_scalar_list", "parse_sweep", "JOBS_ENV"]

JOBS_ENV = "NARROW_ESCAPE_JOBS"

_SECTIONS = {
    "shape": {"kind": str, "axes": list, "radius": (int, float), "center": list},
    "window": {"center": list, "eps": (int, float), "a": (int, float)},
    "method": {
        "mesh": int, "dt": (int, float), "paths": int, "max_steps": int, "start": (str, list),
        "mode": str, "aggregate": bool, "extrapolate": bool, "resolution": int, "a": (int, float),
        "sweep_eps": str, "at": list, "eps_list": list, "bem": bool, "field_points": int,
    },
    "output": {"json": str, "csv": str},
}
_TOP = {"seed": int, "jobs": int}
_SHAPE_KINDS = ("unit-ball", "sphere", "ellipsoid")


class ConfigError(ValueError):
    """Invalid configuration; carries the source location when known."""

    def __init__(self, message: str, source: Optional[str] = None, line: Optional[int] = None,
                 column: Optional[int] = None):
        self.source, self.line, self.column = source, line, column
        loc = ""
        if source:
            loc = source
            if line is not None:
                loc += f":{line}"
                if column is not None:
                    loc += f":{column}"
            loc += ": "
        super().__init__(loc + message)

    def as_dict(self) -> dict:
        return {"source": self.source, "line": self.line, "column": self.column, "message": str(self)}


def _locate_key(text: str, key: str):
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=", re.M)
    m = pat.search(text)
    if not m:
        pat = re.compile(r"^\s*\[\s*" + re.escape(key) + r"\s*\]", re.M)
        m = pat.search(text)
    if not m:
        return None, None
    line = text.count("\n", 0, m.start()) + 1
    col = m.start() - (text.rfind("\n", 0, m.start()) + 1) + 1
    col += len(m.group(0)) - len(m.group(0).lstrip())
    return line, col


def _check(data: dict, text: str, source: str):
    for key, val in data.items():
        if key in _SECTIONS:
            if not isinstance(val, dict):
                line, col = _locate_key(text, key)
                raise ConfigError(f"[{key}] must be a table", source, line, col)
            allowed = _SECTIONS[key]
            for k, v in val.items():
                line, col = _locate_key(text, k)
                if k not in allowed:
                    raise ConfigError(f"unknown key '{key}.{k}'", source, line, col)
                want = allowed[k]
                bad_bool = isinstance(v, bool) and want is not bool
                if v is not None and (bad_bool or not isinstance(v, want)):
                    raise ConfigError(f"'{key}.{k}' has the wrong type ({type(v).__name__})",
                                      source, line, col)
        elif key in _TOP:
            if val is not None and (not isinstance(val, _TOP[key]) or isinstance(val, bool)):
                line, col = _locate_key(text, key)
                raise ConfigError(f"'{key}' must be an integer", source, line, col)
        else:
            line, col = _locate_key(text, key)
            raise ConfigError(f"unknown key '{key}'", source, line, col)


def load_file(path: str) -> dict:
    """Parse a TOML (or JSON, by extension) configuration file strictly."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", path) from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"not UTF-8 ({exc.reason})", path) from None
    if path.endswith(".json"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, path, exc.lineno, exc.colno) from None
        if isinstance(data, dict) and "config" in data and "schema_version" in data:
            data = data["config"]
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            msg = str(exc)
            m = re.search(r"\(at line (\d+), column (\d+)\)", msg)
            line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
            raise ConfigError(re.sub(r"\s*\(at line.*\)", "", msg), path, line, col) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a table", path)
    _check(data, text, path)
    return data


def merge(*parts: dict) -> dict:
    out: dict = {}
    for p in parts:
        for k, v in (p or {}).items():
            if isinstance(v, dict):
                out.setdefault(k, {})
                out[k].update({kk: vv for kk, vv in v.items() if vv is not None})
            elif v is not None:
                out[k] = v
    return out


def _vec3(v, name, source="config"):
    try:
        arr = [float(x) for x in v]
    except (TypeError, ValueError):
        raise ConfigError(f"'{name}' must be a list of three numbers", source) from None
    if len(arr) != 3:
        raise ConfigError(f"'{name}' must be a list of three numbers", source)
    return arr


@dataclass
class RunConfig:
    """Resolved run configuration; ``as_dict`` is emitted with every result."""

    shape: dict = field(default_factory=lambda: {"kind": "unit-ball"})
    window: Optional[dict] = None
    method: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 20240917
    jobs: Optional[int] = None

    def as_dict(self) -> dict:
        d = {"shape": self.shape, "method": self.method, "output": self.output, "seed": self.seed,
             "jobs": self.jobs}
        if self.window is not None:
            d["window"] = self.window
        return d

    def build_shape(self) -> Ellipsoid:
        s = self.shape
        kind = s.get("kind", "unit-ball")
        center = _vec3(s.get("center", [0, 0, 0]), "shape.center")
        if kind == "unit-ball":
            if any(center):
                raise ConfigError("the unit ball is centred at the origin; use kind = 'sphere'")
            return unit_ball()
        if kind == "sphere":
            r = float(s.get("radius", 1.0))
            if r <= 0:
                raise ConfigError("shape.radius must be positive")
            return sphere(r, center)
        if kind == "ellipsoid":
            if "axes" not in s:
                raise ConfigError("shape.axes is required for an ellipsoid")
            ax = _vec3(s["axes"], "shape.axes")
            if min(ax) <= 0:
                raise ConfigError("shape.axes must be positive")
            return ellipsoid(*ax, center=center)
        raise ConfigError(f"shape.kind must be one of {', '.join(_SHAPE_KINDS)}")

    def build_window(self, shape: SurfaceGeometry) -> WindowSpec:
        if self.window is None:
            raise ConfigError("a [window] section is required")
        w = self.window
        for k in ("center", "eps"):
            if k not in w:
                raise ConfigError(f"window.{k} is required")
        a = float(w.get("a", 1.0))
        eps = float(w["eps"])
        if not 0 < a <= 1:
            raise ConfigError("window.a must lie in (0, 1]")
        if eps <= 0:
            raise ConfigError("window.eps must be positive")
        return make_window(shape, _vec3(w["center"], "window.center"), eps, a)


def resolve(data: dict) -> RunConfig:
    shape = dict(data.get("shape") or {"kind": "unit-ball"})
    shape.setdefault("kind", "unit-ball")
    shape.setdefault("center", [0.0, 0.0, 0.0])
    if shape["kind"] == "sphere":
        shape.setdefault("radius", 1.0)
    window = data.get("window")
    if window is not None:
        window = dict(window)
        window.setdefault("a", 1.0)
    jobs = data.get("jobs")
    if jobs is None and os.environ.get(JOBS_ENV):
        try:
            jobs = int(os.environ[JOBS_ENV])
        except ValueError:
            raise ConfigError(f"{JOBS_ENV} must be an integer") from None
    cfg = RunConfig(shape, window, dict(data.get("method") or {}), dict(data.get("output") or {}),
                    int(data.get("seed", 20240917)), jobs)
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed must fit in 64 unsigned bits")
    return cfg


def section_file(path: str, section: str) -> dict:
    """Load a file given to --shape/--window; a bare table is taken as that section."""
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read configuration: {exc}", path) from None
    if not path.endswith(".json"):
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError:
            return load_file(path)
        if section not in data and data and not any(k in _SECTIONS or k in _TOP for k in data):
            wrapped = {section: data}
            _check(wrapped, text, path)
            return wrapped
    return load_file(path)


def parse_scalar_list(text: str, n: Optional[int] = None, name: str = "value") -> list:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"{name} must be comma-separated numbers") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{name} needs {n} comma-separated numbers")
    return vals


def parse_sweep(text: str):
    """'lo:hi:n' -> n geometrically spaced values from lo to hi."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError("sweep must look like lo:hi:n") from None
    if not (0 < lo <= hi and n >= 1):
        raise ConfigError("sweep needs 0 < lo <= hi and n >= 1")
    if n == 1:
        return [lo]
    r = (hi / lo) ** (1.0 / (n - 1))
    return [lo * r ** k for k in range(n)]
