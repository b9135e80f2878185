"""TOML run configuration: schema, defaults and validation.

Layout (every key except ``model.b`` and ``model.rates.base`` has a default)::

    [model]              d, a, b, decay_rate
    [[model.regime]]     b1 = {...}, b2 = {...}, sigma = {...}   (one per regime)
    [model.rates]        shape, base, sensitivity, bound, lipschitz
    [initial]            tail, value, times, values, regime
    [simulation]         T, h, paths, seed, mode, include_b2, threads
    [output]             dir, trace_paths

Unknown keys are rejected.  All problems are collected and reported
together, each with the line of the offending key when it can be located.
"""
from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import Coefficients, Diffusion, FunctionalDrift, ModelError, ModelSpec, PointDrift, RateSpec
from .sde import MODES
from .segment import Segment, SegmentError

__all__ = ["ConfigError", "RunConfig", "bundled", "bundled_names", "dump_config", "load_config",
           "parse_config"]


class ConfigError(ValueError):
    """Schema violations; ``errors`` lists one message per problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


_B1_KEYS = {f.name: f.default for f in dataclasses.fields(FunctionalDrift)}
_B2_KEYS = {f.name: f.default for f in dataclasses.fields(PointDrift)}
_SIGMA_KEYS = {f.name: f.default for f in dataclasses.fields(Diffusion)}

SECTIONS = {
    "model": {"d": 1, "a": 0.0, "b": None, "decay_rate": 1.0, "regime": None, "rates": None},
    "initial": {"tail": "constant", "value": None, "times": None, "values": None, "regime": 0},
    "simulation": {"T": 1.0, "h": 1e-3, "paths": 1000, "seed": 0, "mode": "state_dependent",
                   "include_b2": True, "threads": None},
    "output": {"dir": "run", "trace_paths": 0},
}
RATE_KEYS = {"shape": "rational", "base": None, "sensitivity": None, "bound": None, "lipschitz": None}
REGIME_KEYS = ("b1", "b2", "sigma")


@dataclass(frozen=True)
class SimulationConfig:
    T: float = 1.0
    h: float = 1e-3
    paths: int = 1000
    seed: int = 0
    mode: str = "state_dependent"
    include_b2: bool = True
    threads: int | None = None


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "run"
    trace_paths: int = 0


@dataclass(frozen=True, eq=False)
class RunConfig:
    model: ModelSpec
    initial: Segment
    k0: int
    simulation: SimulationConfig
    output: OutputConfig
    data: dict = field(repr=False)
    source: str | None = None

    def replace_simulation(self, **kw) -> RunConfig:
        sim = dataclasses.replace(self.simulation, **{k: v for k, v in kw.items() if v is not None})
        data = {**self.data, "simulation": {**self.data["simulation"],
                                            **{k: v for k, v in dataclasses.asdict(sim).items()
                                               if v is not None}}}
        return dataclasses.replace(self, simulation=sim, data=data)


class _Locator:
    """Maps ``(section path, key)`` to a line number by scanning the TOML text."""

    header = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\-]+)\s*\]\]?")
    assign = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")

    def __init__(self, text: str):
        self.lines = {}
        section, counts = "", {}
        for no, line in enumerate(text.splitlines(), start=1):
            m = self.header.match(line)
            if m:
                name = m.group(1)
                if line.lstrip().startswith("[["):
                    counts[name] = counts.get(name, -1) + 1
                    name = f"{name}[{counts[name]}]"
                section = name
                self.lines.setdefault(section, no)
                continue
            m = self.assign.match(line)
            if m:
                self.lines.setdefault(f"{section}.{m.group(1)}" if section else m.group(1), no)

    def __call__(self, path: str) -> str:
        probe = path
        while probe:
            if probe in self.lines:
                return f"line {self.lines[probe]}: "
            probe = probe.rpartition(".")[0]
        return ""


def _num(errors, loc, path, value, *, positive=False, nonneg=False, integer=False):
    ok_type = (int,) if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, ok_type):
        errors.append(f"{loc(path)}{path}: expected {'an integer' if integer else 'a number'}, got {value!r}")
        return None
    if positive and not value > 0:
        errors.append(f"{loc(path)}{path}: must be positive, got {value!r}")
        return None
    if nonneg and value < 0:
        errors.append(f"{loc(path)}{path}: must be nonnegative, got {value!r}")
        return None
    return value


def _check_keys(errors, loc, path, table, allowed):
    if not isinstance(table, dict):
        errors.append(f"{loc(path)}{path}: expected a table")
        return False
    for key in table:
        if key not in allowed:
            errors.append(f"{loc(f'{path}.{key}')}{path}.{key}: unknown key")
    return True


def _matrix(errors, loc, path, value, n=None):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{loc(path)}{path}: expected a numeric matrix")
        return None
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or (n is not None and arr.shape[0] != n):
        want = f"{n} x {n}" if n else "square"
        errors.append(f"{loc(path)}{path}: expected a {want} matrix, got shape {arr.shape}")
        return None
    if np.any(arr < 0):
        errors.append(f"{loc(path)}{path}: entries must be nonnegative")
        return None
    return arr


def _component(errors, loc, path, spec, keys, cls):
    if not _check_keys(errors, loc, path, spec, keys):
        return None
    full = {k: spec.get(k, v) for k, v in keys.items()}
    for key, val in full.items():
        if isinstance(keys[key], float) and val is not None:
            if _num(errors, loc, f"{path}.{key}", val) is None:
                return None
            full[key] = float(val)
    try:
        return cls(**full), full
    except ModelError as exc:
        errors.append(f"{loc(path)}{path}: {exc}")
        return None


def parse_config(data: dict, text: str = "", source: str | None = None) -> RunConfig:
    """Validate a parsed TOML document and build the run objects."""
    loc = _Locator(text)
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a table"])
    for key in data:
        if key not in SECTIONS:
            errors.append(f"{loc(key)}{key}: unknown section")
    if "model" not in data:
        errors.append("model: section is required")
        raise ConfigError(errors)
    norm = {}
    for sec, keys in SECTIONS.items():
        table = data.get(sec, {})
        if _check_keys(errors, loc, sec, table, keys):
            norm[sec] = {k: table.get(k, v) for k, v in keys.items()}
    if len(norm) != len(SECTIONS):
        raise ConfigError(errors)

    mdl = norm["model"]
    d = _num(errors, loc, "model.d", mdl["d"], positive=True, integer=True)
    a = _num(errors, loc, "model.a", mdl["a"], nonneg=True)
    if mdl["b"] is None:
        errors.append(f"{loc('model')}model.b: required")
        b = None
    else:
        b = _num(errors, loc, "model.b", mdl["b"])
        if b == 0:
            errors.append(f"{loc('model.b')}model.b: must be nonzero")
    r = _num(errors, loc, "model.decay_rate", mdl["decay_rate"], positive=True)

    regimes = mdl["regime"]
    b1s, b2s, sigs, reg_out = [], [], [], []
    if not isinstance(regimes, list) or not regimes:
        errors.append(f"{loc('model')}model.regime: at least one [[model.regime]] table is required")
    else:
        for j, reg in enumerate(regimes):
            path = f"model.regime[{j}]"
            if not _check_keys(errors, loc, path, reg, REGIME_KEYS):
                continue
            out = {}
            for key, keys, cls, bucket in (("b1", _B1_KEYS, FunctionalDrift, b1s),
                                           ("b2", _B2_KEYS, PointDrift, b2s),
                                           ("sigma", _SIGMA_KEYS, Diffusion, sigs)):
                got = _component(errors, loc, f"{path}.{key}", reg.get(key, {}), keys, cls)
                if got is not None:
                    bucket.append(got[0])
                    out[key] = {k: v for k, v in got[1].items() if v is not None}
            reg_out.append(out)
    n_reg = len(regimes) if isinstance(regimes, list) else None

    rates_tab = mdl["rates"]
    rates = None
    rates_out = {}
    if rates_tab is None:
        errors.append(f"{loc('model')}model.rates: section is required")
    elif _check_keys(errors, loc, "model.rates", rates_tab, RATE_KEYS):
        rt = {k: rates_tab.get(k, v) for k, v in RATE_KEYS.items()}
        base = None
        if rt["base"] is None:
            errors.append(f"{loc('model.rates')}model.rates.base: required")
        else:
            base = _matrix(errors, loc, "model.rates.base", rt["base"], n_reg)
        sens = np.zeros_like(base) if base is not None else None
        if rt["sensitivity"] is not None:
            sens = _matrix(errors, loc, "model.rates.sensitivity", rt["sensitivity"], n_reg)
        for key in ("bound", "lipschitz"):
            if rt[key] is not None:
                _num(errors, loc, f"model.rates.{key}", rt[key], nonneg=True)
        if base is not None and sens is not None:
            try:
                rates = RateSpec(base, sens, rt["shape"], rt["bound"], rt["lipschitz"])
                rates_out = {"shape": rt["shape"], "base": rates.base.tolist(),
                             "sensitivity": rates.sensitivity.tolist()}
                for key in ("bound", "lipschitz"):
                    if rt[key] is not None:
                        rates_out[key] = float(rt[key])
            except ModelError as exc:
                errors.append(f"{loc('model.rates')}model.rates: {exc}")

    model = None
    if not errors:
        try:
            co = Coefficients(float(a), float(b), int(d), tuple(b1s), tuple(b2s), tuple(sigs))
            model = ModelSpec(co, rates, float(r))
        except ModelError as exc:
            errors.append(f"{loc('model')}model: {exc}")

    ini = norm["initial"]
    initial = None
    k0 = ini["regime"]
    if _num(errors, loc, "initial.regime", k0, nonneg=True, integer=True) is not None and n_reg:
        if k0 >= n_reg:
            errors.append(f"{loc('initial.regime')}initial.regime: {k0} outside 0..{n_reg - 1}")
    if model is not None:
        dim = 2 * model.d
        try:
            if ini["times"] is not None or ini["values"] is not None:
                if ini["times"] is None or ini["values"] is None:
                    raise SegmentError("initial.times and initial.values go together")
                vals = np.asarray(ini["values"], dtype=float).reshape(len(ini["times"]), -1)
                if vals.shape[1] != dim:
                    raise SegmentError(f"initial.values rows need {dim} entries")
                initial = Segment.from_grid(ini["times"], vals, model.decay_rate, ini["tail"],
                                            ini["value"])
            else:
                value = np.zeros(dim) if ini["value"] is None else np.asarray(ini["value"], dtype=float)
                if value.shape != (dim,):
                    raise SegmentError(f"initial.value needs {dim} entries")
                if ini["tail"] == "constant":
                    initial = Segment.constant(value, model.decay_rate)
                elif ini["tail"] == "exponential":
                    initial = Segment.exponential(value, model.decay_rate)
                elif ini["tail"] == "zero":
                    initial = Segment.from_grid([0.0], value[None, :], model.decay_rate, "zero")
                else:
                    raise SegmentError(f"unknown tail family {ini['tail']!r}")
        except (SegmentError, ValueError, TypeError) as exc:
            errors.append(f"{loc('initial')}initial: {exc}")

    sim = norm["simulation"]
    _num(errors, loc, "simulation.T", sim["T"], positive=True)
    _num(errors, loc, "simulation.h", sim["h"], positive=True)
    _num(errors, loc, "simulation.paths", sim["paths"], positive=True, integer=True)
    _num(errors, loc, "simulation.seed", sim["seed"], nonneg=True, integer=True)
    if sim["threads"] is not None:
        _num(errors, loc, "simulation.threads", sim["threads"], positive=True, integer=True)
    if sim["mode"] not in MODES:
        errors.append(f"{loc('simulation.mode')}simulation.mode: expected one of {MODES}")
    if not isinstance(sim["include_b2"], bool):
        errors.append(f"{loc('simulation.include_b2')}simulation.include_b2: expected true/false")
    if not errors:
        T, h = float(sim["T"]), float(sim["h"])
        if abs(round(T / h) * h - T) > 1e-9 * max(T, 1.0):
            errors.append(f"{loc('simulation.h')}simulation.h: T={T} is not a multiple of h={h}")

    out = norm["output"]
    if not isinstance(out["dir"], str):
        errors.append(f"{loc('output.dir')}output.dir: expected a string")
    _num(errors, loc, "output.trace_paths", out["trace_paths"], nonneg=True, integer=True)

    if errors:
        raise ConfigError(errors)

    normalized = {
        "model": {"d": int(d), "a": float(a), "b": float(b), "decay_rate": float(r),
                  "regime": reg_out, "rates": rates_out},
        "initial": {k: v for k, v in ini.items() if v is not None},
        "simulation": {k: v for k, v in sim.items() if v is not None},
        "output": dict(out),
    }
    simcfg = SimulationConfig(float(sim["T"]), float(sim["h"]), int(sim["paths"]), int(sim["seed"]),
                              sim["mode"], bool(sim["include_b2"]), sim["threads"])
    return RunConfig(model, initial, int(k0), simcfg, OutputConfig(out["dir"], int(out["trace_paths"])),
                     normalized, source)


def load_config(path) -> RunConfig:
    """Read and validate a TOML configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from None
    return loads_config(text, str(path))


def loads_config(text: str, source: str | None = None) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"parse error: {exc}"]) from None
    return parse_config(data, text, source)


def dump_config(cfg: RunConfig) -> str:
    """Serialize the normalized (defaults filled) configuration back to TOML."""
    return tomli_w.dumps(cfg.data)


def bundled_names() -> list[str]:
    files = resources.files("hamswitch") / "configs"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml"))


def bundled(name: str) -> RunConfig:
    """Load one of the configurations shipped with the package (e.g. ``"reference"``)."""
    ref = resources.files("hamswitch") / "configs" / f"{name}.toml"
    if not ref.is_file():
        raise ConfigError([f"no bundled configuration named {name!r}; have {bundled_names()}"])
    return loads_config(ref.read_text(), f"<bundled:{name}>")
