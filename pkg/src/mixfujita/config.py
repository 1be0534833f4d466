"""Experiment configuration: a versioned TOML schema with line-precise errors.

A minimal config::

    schema = 1
    mode = "cauchy"          # linear | eigen | cauchy | dirichlet | sweep | rate

    [operator]
    a = 1.0                  # local diffusivity [length^2 / time]
    b = 1.0                  # nonlocal diffusivity [length^2s / time]
    s = 0.5                  # fractional order, 0 < s < 1

    [grid]                   # periodic box [-L, L)^N
    dim = 1
    half_width = 1024.0      # L [length]
    n = 16384                # points per axis

    [problem]
    p = 3.0
    initial = { kind = "bump", amplitude = 1.0, width = 1.0 }

Every table and key is listed in :data:`SCHEMA`; anything else is rejected.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path

import tomli

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}" + (f":{line}" if line else "")
        super().__init__(f"{where}: {message}")


class Mode(str, enum.Enum):
    LINEAR = "linear"
    EIGEN = "eigen"
    CAUCHY = "cauchy"
    DIRICHLET = "dirichlet"
    SWEEP = "sweep"
    RATE = "rate"


class InitialKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BUMP = "bump"
    CONSTANT = "constant"
    EIGENFUNCTION = "eigenfunction"


_NUM = (int, float)

# table -> key -> accepted python types
SCHEMA: dict[str, dict[str, tuple]] = {
    "": {"schema": (int,), "mode": (str,)},
    "operator": {"a": _NUM, "b": _NUM, "s": _NUM},
    "grid": {"dim": (int,), "half_width": _NUM, "n": (int,)},
    "domain": {"kind": (str,), "radius": _NUM, "n": (int,)},
    "problem": {"p": _NUM, "initial": (dict,)},
    "problem.initial": {"kind": (str,), "amplitude": _NUM, "width": _NUM, "value": _NUM,
                        "scale": _NUM},
    "controls": {"dt0": _NUM, "c_dt": _NUM, "picard_tol": _NUM, "picard_max": (int,),
                 "blowup_threshold": _NUM, "t_max": _NUM, "collapse_factor": _NUM,
                 "max_steps": (int,), "snapshot_every": (int,), "sample_times": (list,)},
    "linear": {"times": (list,), "t_first": _NUM, "t_last": _NUM, "n_times": (int,),
               "fit_window": (list,), "tail_tol": _NUM},
    "eigen": {"tol": _NUM, "max_sweeps": (int,)},
    "sweep": {"p_list": (list,), "mass_list": (list,), "band": _NUM, "include_critical": (bool,),
              "t0": _NUM, "width": _NUM},
    "rate": {"setting": (str,), "decades": _NUM, "theta": _NUM},
    "output": {"directory": (str,), "formats": (list,)},
}

FORMATS = ("json", "csv", "png")


@dataclass(frozen=True)
class InitialSpec:
    kind: InitialKind = InitialKind.BUMP
    amplitude: float = 1.0
    width: float = 1.0
    value: float = 1.0
    scale: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    mode: Mode
    operator: dict
    grid: dict | None = None
    domain: dict | None = None
    p: float | None = None
    initial: InitialSpec = field(default_factory=InitialSpec)
    controls: dict = field(default_factory=dict)
    linear: dict = field(default_factory=dict)
    eigen: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    rate: dict = field(default_factory=dict)
    output_dir: str | None = None
    formats: tuple = FORMATS
    source: str | None = None


_HEADER = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-\s]+?)\s*\]\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def _locate(text: str, table: str, key: str | None = None) -> int | None:
    """Line of ``key`` inside ``[table]`` (or of the header itself when ``key`` is None).

    Inline tables (``initial = { ... }``) resolve to the line of their parent key.
    """
    current = ""
    parent, _, leaf = table.rpartition(".")
    for no, line in enumerate(text.splitlines(), 1):
        m = _HEADER.match(line)
        if m:
            current = re.sub(r"\s+", "", m.group(1))
            if key is None and current == table:
                return no
            continue
        k = _KEY.match(line)
        if not k:
            continue
        if current == table and k.group(1) == key:
            return no
        if parent == current and k.group(1) == leaf and "{" in line:
            if key is None or re.search(rf"[{{,]\s*{re.escape(key)}\s*=", line):
                return no
    return None


class _Reader:
    def __init__(self, text: str, path: str | None):
        self.text, self.path = text, path

    def fail(self, msg, table="", key=None):
        line = _locate(self.text, table, key)
        if line is None and key is not None:
            line = _locate(self.text, table)
        raise ConfigError(msg, line, self.path)

    def check_table(self, table: str, data: dict):
        allowed = SCHEMA[table]
        for key, val in data.items():
            qual = f"{table}.{key}" if table else key
            if key not in allowed:
                if table == "" and isinstance(val, dict):
                    self.fail(f"unknown table [{key}]", key)
                self.fail(f"unknown key '{qual}'", table, key)
            types = allowed[key]
            if isinstance(val, bool) and bool not in types:
                self.fail(f"'{qual}' must be {_typename(types)}, got a boolean", table, key)
            if not isinstance(val, types):
                self.fail(f"'{qual}' must be {_typename(types)}, got {type(val).__name__}",
                          table, key)

    def number(self, data, table, key, default=None, *, positive=False, minimum=None,
               integer=False, required=False):
        if key not in data:
            if required:
                self.fail(f"missing required key '{table}.{key}'", table)
            return default
        v = data[key]
        if positive and not v > 0:
            self.fail(f"'{table}.{key}' must be positive, got {v}", table, key)
        if minimum is not None and v < minimum:
            self.fail(f"'{table}.{key}' must be >= {minimum}, got {v}", table, key)
        return int(v) if integer else float(v)

    def num_list(self, data, table, key, default=None, *, positive=False, increasing=False):
        if key not in data:
            return default
        vals = data[key]
        if not vals or not all(isinstance(v, _NUM) and not isinstance(v, bool) for v in vals):
            self.fail(f"'{table}.{key}' must be a non-empty list of numbers", table, key)
        vals = [float(v) for v in vals]
        if positive and min(vals) <= 0:
            self.fail(f"'{table}.{key}' entries must be positive", table, key)
        if increasing and any(b <= a for a, b in zip(vals, vals[1:])):
            self.fail(f"'{table}.{key}' must be strictly increasing", table, key)
        return tuple(vals)


def _typename(types) -> str:
    names = {int: "an integer", float: "a number", str: "a string", bool: "a boolean",
             list: "a list", dict: "a table"}
    if types == _NUM:
        return "a number"
    return " or ".join(names[t] for t in types)


def parse_config(text: str, path: str | None = None, mode: Mode | str | None = None) -> ExperimentConfig:
    """Validate ``text`` and build an :class:`ExperimentConfig`.

    ``mode`` (from the CLI subcommand) fills a missing ``mode`` key and must agree
    with it when both are present.
    """
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", int(m.group(1)) if m else None, path) from None
    rd = _Reader(text, path)

    top = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in raw.items() if isinstance(v, dict)}
    rd.check_table("", top)
    for name, data in tables.items():
        if name not in SCHEMA or name == "":
            rd.fail(f"unknown table [{name}]", name)
        rd.check_table(name, data)

    version = top.get("schema")
    if version is None:
        rd.fail("missing 'schema' version key")
    if version != SCHEMA_VERSION:
        rd.fail(f"unsupported schema version {version} (expected {SCHEMA_VERSION})", "", "schema")

    cli_mode = Mode(mode) if mode is not None else None
    file_mode = None
    if "mode" in top:
        try:
            file_mode = Mode(top["mode"].lower())
        except ValueError:
            rd.fail(f"unknown mode '{top['mode']}' (expected one of "
                    f"{', '.join(m.value for m in Mode)})", "", "mode")
    if cli_mode and file_mode and cli_mode is not file_mode:
        rd.fail(f"config mode '{file_mode.value}' does not match subcommand '{cli_mode.value}'",
                "", "mode")
    final_mode = file_mode or cli_mode
    if final_mode is None:
        rd.fail("missing 'mode' key")

    op = tables.get("operator")
    if op is None:
        rd.fail("missing [operator] table")
    operator = {
        "a": rd.number(op, "operator", "a", 0.0, minimum=0.0),
        "b": rd.number(op, "operator", "b", 0.0, minimum=0.0),
        "s": rd.number(op, "operator", "s", 0.5, positive=True),
    }
    if not operator["s"] < 1:
        rd.fail("'operator.s' must lie in (0, 1)", "operator", "s")
    if operator["a"] == 0 and operator["b"] == 0:
        rd.fail("at least one of 'operator.a', 'operator.b' must be positive", "operator")

    grid = None
    if "grid" in tables:
        g = tables["grid"]
        grid = {
            "dim": rd.number(g, "grid", "dim", 1, integer=True, minimum=1),
            "half_width": rd.number(g, "grid", "half_width", required=True, positive=True),
            "n": rd.number(g, "grid", "n", required=True, integer=True, minimum=8),
        }
        if grid["dim"] > 2:
            rd.fail("'grid.dim' must be 1 or 2", "grid", "dim")
        if grid["n"] & (grid["n"] - 1):
            rd.fail(f"'grid.n' must be a power of two, got {grid['n']}", "grid", "n")
    domain = None
    if "domain" in tables:
        d = tables["domain"]
        kind = d.get("kind", "interval").lower()
        if kind not in ("interval", "disk"):
            rd.fail(f"'domain.kind' must be 'interval' or 'disk', got '{kind}'", "domain", "kind")
        domain = {
            "kind": kind,
            "radius": rd.number(d, "domain", "radius", 1.0, positive=True),
            "n": rd.number(d, "domain", "n", required=True, integer=True, minimum=64),
        }

    prob = tables.get("problem", {})
    p = rd.number(prob, "problem", "p")
    if p is not None and not p > 1:
        rd.fail(f"'problem.p' must exceed 1, got {p}", "problem", "p")
    initial = InitialSpec()
    if "initial" in prob:
        ini = prob["initial"]
        rd.check_table("problem.initial", ini)
        try:
            kind = InitialKind(ini.get("kind", "bump").lower())
        except ValueError:
            rd.fail(f"unknown initial kind '{ini.get('kind')}' (expected one of "
                    f"{', '.join(k.value for k in InitialKind)})", "problem.initial", "kind")
        t = "problem.initial"
        initial = InitialSpec(
            kind=kind,
            amplitude=rd.number(ini, t, "amplitude", 1.0, minimum=0.0),
            width=rd.number(ini, t, "width", 1.0, positive=True),
            value=rd.number(ini, t, "value", 1.0, minimum=0.0),
            scale=rd.number(ini, t, "scale", 1.0, minimum=0.0),
        )

    c = tables.get("controls", {})
    controls = {}
    for key in ("dt0", "c_dt", "picard_tol", "blowup_threshold", "t_max", "collapse_factor"):
        if key in c:
            controls[key] = rd.number(c, "controls", key, positive=True)
    for key in ("picard_max", "max_steps"):
        if key in c:
            controls[key] = rd.number(c, "controls", key, integer=True, minimum=1)
    if "snapshot_every" in c:
        controls["snapshot_every"] = rd.number(c, "controls", "snapshot_every", integer=True,
                                               minimum=0)
    if "sample_times" in c:
        controls["sample_times"] = rd.num_list(c, "controls", "sample_times", positive=True,
                                               increasing=True)
    if "c_dt" in controls and controls["c_dt"] > 1:
        rd.fail("'controls.c_dt' must lie in (0, 1]", "controls", "c_dt")

    lin = tables.get("linear", {})
    linear = {
        "times": rd.num_list(lin, "linear", "times", positive=True, increasing=True),
        "t_first": rd.number(lin, "linear", "t_first", 1.0, positive=True),
        "t_last": rd.number(lin, "linear", "t_last", 100.0, positive=True),
        "n_times": rd.number(lin, "linear", "n_times", 41, integer=True, minimum=2),
        "fit_window": rd.num_list(lin, "linear", "fit_window", positive=True, increasing=True),
        "tail_tol": rd.number(lin, "linear", "tail_tol", positive=True),
    }
    if linear["fit_window"] is not None and len(linear["fit_window"]) != 2:
        rd.fail("'linear.fit_window' must have two entries", "linear", "fit_window")
    if linear["t_last"] <= linear["t_first"]:
        rd.fail("'linear.t_last' must exceed 'linear.t_first'", "linear", "t_last")

    e = tables.get("eigen", {})
    eigen = {"tol": rd.number(e, "eigen", "tol", 1e-11, positive=True),
             "max_sweeps": rd.number(e, "eigen", "max_sweeps", 1000, integer=True, minimum=1)}

    sw = tables.get("sweep", {})
    sweep = {
        "p_list": rd.num_list(sw, "sweep", "p_list"),
        "mass_list": rd.num_list(sw, "sweep", "mass_list", positive=True),
        "band": rd.number(sw, "sweep", "band", 0.1, minimum=0.0),
        "include_critical": bool(sw.get("include_critical", False)),
        "t0": rd.number(sw, "sweep", "t0", 1.0, positive=True),
        "width": rd.number(sw, "sweep", "width", 1.0, positive=True),
    }
    if sweep["p_list"] is not None and min(sweep["p_list"]) <= 1:
        rd.fail("'sweep.p_list' entries must exceed 1", "sweep", "p_list")

    r = tables.get("rate", {})
    setting = r.get("setting", "dirichlet" if domain is not None else "periodic").lower()
    if setting not in ("periodic", "dirichlet"):
        rd.fail(f"'rate.setting' must be 'periodic' or 'dirichlet', got '{setting}'", "rate",
                "setting")
    rate = {"setting": setting,
            "decades": rd.number(r, "rate", "decades", 2.0, positive=True),
            "theta": rd.number(r, "rate", "theta", 0.01, positive=True)}
    if rate["theta"] > 1:
        rd.fail("'rate.theta' must lie in (0, 1]", "rate", "theta")

    out = tables.get("output", {})
    formats = tuple(out.get("formats", FORMATS))
    bad = [f for f in formats if f not in FORMATS]
    if bad or not formats:
        rd.fail(f"'output.formats' entries must be among {', '.join(FORMATS)}", "output", "formats")

    cfg = ExperimentConfig(
        mode=final_mode, operator=operator, grid=grid, domain=domain, p=p, initial=initial,
        controls=controls, linear=linear, eigen=eigen, sweep=sweep, rate=rate,
        output_dir=out.get("directory"), formats=formats, source=path,
    )
    _check_mode_requirements(cfg, rd)
    return cfg


def _check_mode_requirements(cfg: ExperimentConfig, rd: _Reader):
    m = cfg.mode
    needs_grid = m in (Mode.LINEAR, Mode.CAUCHY, Mode.SWEEP) or (
        m is Mode.RATE and cfg.rate["setting"] == "periodic")
    needs_domain = m in (Mode.EIGEN, Mode.DIRICHLET) or (
        m is Mode.RATE and cfg.rate["setting"] == "dirichlet")
    if needs_grid and cfg.grid is None:
        rd.fail(f"mode '{m.value}' needs a [grid] table")
    if needs_domain and cfg.domain is None:
        rd.fail(f"mode '{m.value}' needs a [domain] table")
    if m in (Mode.CAUCHY, Mode.DIRICHLET, Mode.RATE) and cfg.p is None:
        rd.fail(f"mode '{m.value}' needs 'problem.p'", "problem")
    if m is Mode.SWEEP and (cfg.sweep["p_list"] is None or cfg.sweep["mass_list"] is None):
        rd.fail("mode 'sweep' needs 'sweep.p_list' and 'sweep.mass_list'", "sweep")
    if m is Mode.SWEEP and cfg.operator["b"] == 0:
        rd.fail("mode 'sweep' needs a nonlocal part ('operator.b' > 0)", "operator", "b")
    if cfg.initial.kind is InitialKind.EIGENFUNCTION and needs_grid and m is not Mode.SWEEP:
        rd.fail("initial kind 'eigenfunction' needs a bounded [domain]", "problem.initial", "kind")


def load_config(path, mode: Mode | str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}", None, str(path)) from None
    return parse_config(text, str(path), mode)
