"""TOML run configuration: ``[simulator]``, ``[target]``, ``[hm]``, ``[sweep]``, ``[output]``.

Unknown keys and invalid values are rejected with the offending line number.
"""

from __future__ import annotations

import csv
import re
import secrets
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import tomli
import tomli_w

from .histmatch import HmConfig, resolve_dps
from .simulator import (BUILTIN, EXTERNAL, InputBounds, SimulatorSpec, TimeGrid, TimeSeries,
                        default_grid, target_from_point)
from .surrogate import FitOptions

SECTIONS = {
    "simulator": {"kind", "d", "t_start", "t_stop", "length", "times", "lower", "upper",
                  "names", "exec_path", "args", "parallelism", "timeout"},
    "target": {"point", "file"},
    "hm": {"n1", "c", "T_k", "dps", "M", "max_iterations", "budget", "subsample_size",
           "training_set", "seed", "restarts", "power", "theta_min", "theta_max", "nugget"},
    "sweep": {"n1", "c", "T_k", "M", "dps_mode", "replications", "quick_replications",
              "dps_comparison", "dps_T_k", "dps_replications"},
    "output": {"dir"},
}


class ConfigError(ValueError):
    pass


@dataclass
class SweepSettings:
    n1: tuple = (5, 10, 20)
    c: tuple = (1.0, 2.0, 3.0)
    T_k: tuple = (2, 4, 8)
    M: tuple = (500, 2000, 5000)
    dps_mode: str = "auto-random"
    replications: int = 25
    quick_replications: int = 5
    dps_comparison: bool = True
    dps_T_k: int = 2
    dps_replications: Optional[int] = None  # defaults to replications


@dataclass
class RunConfig:
    spec: SimulatorSpec
    hm: HmConfig
    sweep: SweepSettings = field(default_factory=SweepSettings)
    out_dir: str = "hm_out"
    target_point: Optional[tuple] = None
    target_file: Optional[str] = None
    seed_drawn: bool = False
    _target: Optional[TimeSeries] = field(default=None, repr=False)

    @property
    def target(self) -> TimeSeries:
        """Target series; a point target runs the simulator on first access."""
        if self._target is None:
            self._target = target_from_point(self.target_point, self.spec)
        return self._target


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    current, header_line = None, 0
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if current == section:
                header_line = no
            continue
        if current == section and key is not None and re.match(
                rf"{re.escape(key)}\s*=", s):
            return no
    return header_line


class _Reader:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def error(self, section, key, msg) -> ConfigError:
        line = _line_of(self.text, section, key)
        where = f"{self.source}:{line}" if line else self.source
        what = f"[{section}] {key}" if key else f"[{section}]"
        return ConfigError(f"{where}: {what}: {msg}")

    def get(self, data, section, key, kind, default=None):
        if key not in data:
            return default
        v = data[key]
        try:
            if kind is int:
                if isinstance(v, bool) or not isinstance(v, int):
                    raise TypeError("expected an integer")
            elif kind is float:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise TypeError("expected a number")
                v = float(v)
            elif kind is str:
                if not isinstance(v, str):
                    raise TypeError("expected a string")
            elif kind is bool:
                if not isinstance(v, bool):
                    raise TypeError("expected true or false")
            elif kind == "floats":
                if not isinstance(v, list) or not all(
                        isinstance(e, (int, float)) and not isinstance(e, bool) for e in v):
                    raise TypeError("expected a list of numbers")
                v = tuple(float(e) for e in v)
            elif kind == "ints":
                if not isinstance(v, list) or not all(
                        isinstance(e, int) and not isinstance(e, bool) for e in v):
                    raise TypeError("expected a list of integers")
                v = tuple(v)
            elif kind == "strs":
                if not isinstance(v, list) or not all(isinstance(e, str) for e in v):
                    raise TypeError("expected a list of strings")
                v = tuple(v)
        except TypeError as exc:
            raise self.error(section, key, f"{exc}, got {v!r}") from None
        return v


def read_series_csv(path) -> list:
    """Values of a single-column CSV; a non-numeric first row is treated as a header."""
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        for no, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 1:
                raise ConfigError(f"{path}:{no}: expected a single column, got {len(row)}")
            try:
                values.append(float(row[0]))
            except ValueError:
                if no == 1:
                    continue
                raise ConfigError(f"{path}:{no}: not a number: {row[0]!r}") from None
    return values


def parse_config(text: str, source: str = "<config>", base_dir: Optional[Path] = None,
                 seed: Optional[int] = None) -> RunConfig:
    """Parse and validate a configuration; ``seed`` overrides ``[hm] seed``."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    r = _Reader(text, source)
    base_dir = Path(base_dir) if base_dir else Path.cwd()

    for section, body in data.items():
        if section not in SECTIONS:
            raise r.error(section, None, "unknown section")
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: {section} must be a [section]")
        for key in body:
            if key not in SECTIONS[section]:
                raise r.error(section, key, "unknown key")

    s = data.get("simulator", {})
    kind = r.get(s, "simulator", "kind", str, BUILTIN)
    if kind not in (BUILTIN, EXTERNAL):
        raise r.error("simulator", "kind", f"must be {BUILTIN!r} or {EXTERNAL!r}")
    d = r.get(s, "simulator", "d", int, 2)
    times = r.get(s, "simulator", "times", "floats")
    try:
        if times is not None:
            grid = TimeGrid(times)
        elif any(k in s for k in ("t_start", "t_stop", "length")):
            grid = TimeGrid.linspace(r.get(s, "simulator", "t_start", float, 0.5),
                                     r.get(s, "simulator", "t_stop", float, 2.5),
                                     r.get(s, "simulator", "length", int, 101))
        else:
            grid = default_grid()
    except ValueError as exc:
        raise r.error("simulator", "times" if times is not None else "length", str(exc)) from None

    bounds = None
    if kind == EXTERNAL:
        if "exec_path" not in s:
            raise r.error("simulator", None, "external-exec needs exec_path")
        lower = r.get(s, "simulator", "lower", "floats", (0.0,) * d)
        upper = r.get(s, "simulator", "upper", "floats", (1.0,) * d)
        names = r.get(s, "simulator", "names", "strs", ())
        try:
            bounds = InputBounds(lower, upper, names)
        except ValueError as exc:
            raise r.error("simulator", "lower", str(exc)) from None
        if bounds.dim != d:
            raise r.error("simulator", "lower", f"bounds have {bounds.dim} entries, d = {d}")
    exec_path = r.get(s, "simulator", "exec_path", str)
    if exec_path is not None and not Path(exec_path).is_absolute() and "/" in exec_path:
        exec_path = str((base_dir / exec_path).resolve())
    try:
        spec = SimulatorSpec(kind=kind, d=d, grid=grid, bounds=bounds, exec_path=exec_path,
                             args=r.get(s, "simulator", "args", "strs", ()),
                             parallelism=r.get(s, "simulator", "parallelism", int, 1),
                             timeout=r.get(s, "simulator", "timeout", float))
    except ValueError as exc:
        raise r.error("simulator", "kind", str(exc)) from None

    h = data.get("hm", {})
    seed_drawn = False
    if seed is None:
        seed = r.get(h, "hm", "seed", int)
    if seed is None:
        seed, seed_drawn = secrets.randbits(63), True
    if not 0 <= seed < 2 ** 64:
        raise r.error("hm", "seed", "seed must be an unsigned 64-bit integer")
    dps = h.get("dps", "auto-fixed")
    if isinstance(dps, list):
        dps = r.get(h, "hm", "dps", "ints")
    elif not isinstance(dps, str):
        raise r.error("hm", "dps", "expected a mode string or a list of indices")
    fit_defaults = FitOptions()
    try:
        fit_opts = FitOptions(
            power=r.get(h, "hm", "power", float, fit_defaults.power),
            theta_bounds=(r.get(h, "hm", "theta_min", float, fit_defaults.theta_bounds[0]),
                          r.get(h, "hm", "theta_max", float, fit_defaults.theta_bounds[1])),
            nugget=r.get(h, "hm", "nugget", float, fit_defaults.nugget))
        if not 0 < fit_opts.power <= 2:
            raise ValueError("power must be in (0, 2]")
        if not fit_opts.theta_bounds[0] < fit_opts.theta_bounds[1]:
            raise ValueError("theta_min must be below theta_max")
    except ValueError as exc:
        raise r.error("hm", "power", str(exc)) from None
    hm_kwargs = dict(
        n1=r.get(h, "hm", "n1", int, 10), c=r.get(h, "hm", "c", float, 3.0),
        T_k=r.get(h, "hm", "T_k", int, 2), dps=dps, M=r.get(h, "hm", "M", int, 5000),
        max_iterations=r.get(h, "hm", "max_iterations", int, 20),
        budget=r.get(h, "hm", "budget", int, 1000),
        subsample_size=r.get(h, "hm", "subsample_size", int),
        training_set=r.get(h, "hm", "training_set", str, "cumulative"),
        restarts=r.get(h, "hm", "restarts", int), seed=seed, fit=fit_opts)
    try:
        hm = HmConfig(**hm_kwargs)
    except ValueError as exc:
        raise r.error("hm", _guess_key(str(exc), h), str(exc)) from None
    try:
        resolved = resolve_dps(hm, len(grid))
    except ValueError as exc:
        raise r.error("hm", "dps" if "dps" in h else "T_k", str(exc)) from None
    hm = replace(hm, dps=resolved)

    t = data.get("target", {})
    point = r.get(t, "target", "point", "floats")
    tfile = r.get(t, "target", "file", str)
    if (point is None) == (tfile is None):
        raise r.error("target", None, "give exactly one of point or file")
    target = None
    if point is not None:
        if len(point) != d:
            raise r.error("target", "point", f"expected {d} coordinates")
        if any(not 0 <= v <= 1 for v in point):
            raise r.error("target", "point", "coordinates must lie in [0, 1]")
    else:
        path = Path(tfile)
        tfile = str(path if path.is_absolute() else (base_dir / path).resolve())
        try:
            values = read_series_csv(tfile)
        except OSError as exc:
            raise r.error("target", "file", f"cannot read: {exc}") from None
        if len(values) != len(grid):
            raise r.error("target", "file",
                          f"target has {len(values)} values, the grid has {len(grid)}")
        target = TimeSeries(grid, values)

    w = data.get("sweep", {})
    sw = SweepSettings()
    sweep = SweepSettings(
        n1=r.get(w, "sweep", "n1", "ints", sw.n1), c=r.get(w, "sweep", "c", "floats", sw.c),
        T_k=r.get(w, "sweep", "T_k", "ints", sw.T_k), M=r.get(w, "sweep", "M", "ints", sw.M),
        dps_mode=r.get(w, "sweep", "dps_mode", str, sw.dps_mode),
        replications=r.get(w, "sweep", "replications", int, sw.replications),
        quick_replications=r.get(w, "sweep", "quick_replications", int,
                                 sw.quick_replications),
        dps_comparison=r.get(w, "sweep", "dps_comparison", bool, sw.dps_comparison),
        dps_T_k=r.get(w, "sweep", "dps_T_k", int, sw.dps_T_k),
        dps_replications=r.get(w, "sweep", "dps_replications", int))
    if sweep.dps_mode not in ("auto-fixed", "auto-random"):
        raise r.error("sweep", "dps_mode", "must be auto-fixed or auto-random")
    for key in ("replications", "quick_replications"):
        if getattr(sweep, key) < 1:
            raise r.error("sweep", key, "must be at least 1")
    for key in ("n1", "c", "T_k", "M"):
        if not getattr(sweep, key):
            raise r.error("sweep", key, "needs at least one level")
        for level in getattr(sweep, key):
            try:
                replace(hm, dps="auto-fixed", **{key: level})
            except ValueError as exc:
                raise r.error("sweep", key, f"level {level}: {exc}") from None

    out = r.get(data.get("output", {}), "output", "dir", str, "hm_out")
    return RunConfig(spec, hm, sweep, out, point, tfile, seed_drawn, target)


def _guess_key(message: str, section: dict) -> Optional[str]:
    for key in sorted(SECTIONS["hm"], key=len, reverse=True):
        if message.startswith(key) or f" {key} " in f" {message} ":
            return key
    return None


def load_config(path, seed: Optional[int] = None) -> RunConfig:
    """Read and parse a configuration file (``OSError`` if it cannot be read)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config(text, str(path), path.parent, seed)


def echo(cfg: RunConfig) -> str:
    """Resolved configuration as TOML (explicit DPS, explicit seed)."""
    s = cfg.spec
    v = s.grid.values
    if TimeGrid.linspace(v[0], v[-1], len(v)) == s.grid:
        sim = {"kind": s.kind, "d": s.d, "t_start": v[0], "t_stop": v[-1], "length": len(v)}
    else:
        sim = {"kind": s.kind, "d": s.d, "times": list(v)}
    if s.kind == EXTERNAL:
        sim.update(lower=list(s.bounds.lower), upper=list(s.bounds.upper),
                   names=list(s.bounds.names), exec_path=s.exec_path, args=list(s.args),
                   parallelism=s.parallelism)
        if s.timeout is not None:
            sim["timeout"] = s.timeout
    h = cfg.hm
    hm = {"n1": h.n1, "c": h.c, "T_k": h.T_k, "dps": list(h.dps), "M": h.M,
          "max_iterations": h.max_iterations, "budget": h.budget,
          "training_set": h.training_set, "seed": h.seed, "power": h.fit.power,
          "theta_min": h.fit.theta_bounds[0], "theta_max": h.fit.theta_bounds[1],
          "nugget": h.fit.nugget}
    if h.subsample_size is not None:
        hm["subsample_size"] = h.subsample_size
    if h.restarts is not None:
        hm["restarts"] = h.restarts
    target = ({"point": list(cfg.target_point)} if cfg.target_point is not None
              else {"file": cfg.target_file})
    w = cfg.sweep
    sweep = {"n1": list(w.n1), "c": list(w.c), "T_k": list(w.T_k), "M": list(w.M),
             "dps_mode": w.dps_mode, "replications": w.replications,
             "quick_replications": w.quick_replications, "dps_comparison": w.dps_comparison,
             "dps_T_k": w.dps_T_k}
    if w.dps_replications is not None:
        sweep["dps_replications"] = w.dps_replications
    doc = {"simulator": sim, "target": target, "hm": hm, "sweep": sweep,
           "output": {"dir": cfg.out_dir}}
    return tomli_w.dumps(doc)
