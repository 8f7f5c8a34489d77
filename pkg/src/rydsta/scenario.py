"""Declarative run configuration with explicit units.

A scenario is a TOML file.  Every frequency and time is an inline table
``{value = ..., unit = "..."}``; bare numbers are rejected so that the
``Omega/2pi in MHz`` convention can never be confused with rad/s::

    [gate]
    kind = "cnot"                      # cnot | toffoli | ck-not (then set n)

    [drive]
    omega = { value = 30, unit = "2pi*MHz" }
    omega_c = { value = 1, unit = "omega" }
    detuning = { value = 15, unit = "omega" }   # or "rab-solve" with interaction + alpha
    gamma = { value = 1, unit = "2pi*kHz" }

    [pulse]
    tau = { value = 0.2, unit = "1/omega_eff" }

Frequency units: ``rad/s``, ``2pi*Hz``, ``2pi*kHz``, ``2pi*MHz``,
``2pi*GHz`` and ``omega`` (multiples of the pulse rms amplitude).  Time
units: ``s``, ``ns``, ``us``, ``1/omega`` and ``1/omega_eff`` (the
effective amplitude ``n! alpha^(n-1)/2^n * omega``).
"""
from __future__ import annotations

import math
import re
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamo import IntegratorConfig
from .gateproto import GATE_CONFIG, GateProtocol, canonical_model
from .hammodel import (DriveParams, default_couplings, effective_prefactor, rab_interaction, rab_residual,
                       rab_solve)
from .pulsegen import VitanovPulseSpec

TWO_PI = 2 * math.pi
FREQ_UNITS = {"rad/s": 1.0, "2pi*Hz": TWO_PI, "2pi*kHz": TWO_PI * 1e3, "2pi*MHz": TWO_PI * 1e6,
              "2pi*GHz": TWO_PI * 1e9}
TIME_UNITS = {"s": 1.0, "ns": 1e-9, "us": 1e-6}
GATES = {"cnot": 2, "toffoli": 3}
SWEEP_FIELDS = {"gamma": "frequency", "detuning": "frequency", "tau": "time", "amplitude_error": "number"}
MAX_AXIS_POINTS = 50
MAX_SWEEP_POINTS = 400

_SCHEMA = {
    "name": None,
    "gate": {"kind", "n"},
    "drive": {"omega", "omega_c", "detuning", "gamma", "interaction", "couplings", "alpha"},
    "pulse": {"tau", "edge_tol", "dressing", "samples"},
    "model": {"name", "dissipation", "rab_tracking"},
    "integrator": {"method", "rtol", "atol", "max_step", "samples"},
    "output": {"dir", "theta_grid", "step_tables"},
    "sweep": {"axes"},
}


class ScenarioError(ValueError):
    """Configuration is malformed; the message names the field and, when known, the line."""


def _line_of(text: str, section: str | None, key: str) -> int | None:
    lines = text.splitlines()
    start = 0
    if section:
        pat = re.compile(rf"^\s*\[\s*{re.escape(section)}\s*\]")
        for i, l in enumerate(lines):
            if pat.match(l):
                start = i
                break
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i in range(start, len(lines)):
        if pat.match(lines[i]):
            return i + 1
    return None


class _Reader:
    def __init__(self, data: dict, text: str, source: str):
        self.data, self.text, self.source = data, text, source

    def fail(self, section: str | None, key: str, msg: str):
        path = f"{section}.{key}" if section else key
        line = _line_of(self.text, section, key.split(".")[0])
        where = f"{self.source}:{line}" if line else self.source
        raise ScenarioError(f"{where}: field '{path}': {msg}")

    def get(self, section: str, key: str, default=..., kinds=None):
        sec = self.data.get(section, {})
        if key not in sec:
            if default is ...:
                self.fail(section, key, "required field is missing")
            return default
        v = sec[key]
        bad_bool = isinstance(v, bool) and kinds is not None and bool not in kinds
        if kinds is not None and (bad_bool or not isinstance(v, kinds)):
            self.fail(section, key, f"expected {' or '.join(k.__name__ for k in kinds)}, got {type(v).__name__}")
        return v

    def quantity(self, section: str, key: str, units: dict, default=..., extra: dict | None = None):
        sec = self.data.get(section, {})
        if key not in sec:
            if default is ...:
                self.fail(section, key, "required field is missing")
            return default
        v = sec[key]
        if not isinstance(v, dict):
            self.fail(section, key, f"needs an explicit unit tag, e.g. {{ value = {v!r}, unit = \"...\" }}")
        unknown = set(v) - {"value", "unit"}
        if unknown or "value" not in v or "unit" not in v:
            self.fail(section, key, "must be an inline table with exactly 'value' and 'unit'")
        val, unit = v["value"], v["unit"]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(section, key, f"value must be a number, got {val!r}")
        table = dict(units)
        table.update(extra or {})
        if unit not in table:
            self.fail(section, key, f"unknown unit {unit!r}; allowed: {', '.join(table)}")
        return float(val), unit


def convert_frequency(value: float, unit: str, omega: float | None = None) -> float:
    if unit == "omega":
        if omega is None:
            raise ScenarioError("unit 'omega' needs the pulse amplitude")
        return value * omega
    return value * FREQ_UNITS[unit]


def convert_time(value: float, unit: str, omega: float | None = None, omega_eff: float | None = None) -> float:
    if unit == "1/omega":
        return value / omega
    if unit == "1/omega_eff":
        return value / omega_eff
    return value * TIME_UNITS[unit]


@dataclass(frozen=True)
class SweepAxis:
    field: str
    values: tuple
    unit: str | None = None


@dataclass(frozen=True)
class Scenario:
    """Fully resolved run configuration in SI units (rad/s, s)."""

    name: str
    gate: str
    n: int
    omega: float
    omega_c: float
    detuning: float
    detuning_source: str
    interaction: float
    couplings: dict
    gamma: float
    tau: float
    tau_eff_units: float
    edge_tol: float
    dressing: str
    design_samples: int
    model: str
    dissipation: bool
    rab_tracking: bool
    integrator: IntegratorConfig
    out_dir: str
    theta_grid: int
    step_tables: bool
    rab_residual: float = 0.0
    amplitude_error: float = 0.0
    sweep: tuple[SweepAxis, ...] = ()
    source: str = "<memory>"

    @property
    def alpha(self) -> float:
        return self.omega_c / self.detuning

    @property
    def omega_eff(self) -> float:
        return effective_prefactor(self.n, self.alpha) * self.omega

    def drive_params(self) -> DriveParams:
        half = self.omega / math.sqrt(2)
        return DriveParams(self.omega_c, half, half, self.detuning, self.couplings, self.gamma, self.n)

    def pulse_spec(self) -> VitanovPulseSpec:
        return VitanovPulseSpec.symmetric(self.omega_eff, self.tau, self.edge_tol,
                                          dressing_aware=self.dressing == "simplest")

    def protocol(self) -> GateProtocol:
        return GateProtocol(self.drive_params(), self.pulse_spec(), self.model, self.dissipation, self.dressing,
                            self.rab_tracking, self.integrator, self.design_samples,
                            amplitude_scale=1.0 + self.amplitude_error)

    def with_value(self, field_name: str, value) -> "Scenario":
        """Copy with one sweepable field changed, re-deriving dependent quantities."""
        if field_name == "gamma":
            return replace(self, gamma=float(value))
        if field_name == "amplitude_error":
            return replace(self, amplitude_error=float(value))
        if field_name == "tau":
            return replace(self, tau=float(value), tau_eff_units=float(value) * self.omega_eff)
        if field_name == "detuning":
            alpha = self.alpha
            d = float(value)
            v = rab_interaction(d, self.omega**2, alpha, self.n)
            if v < 0:
                raise ScenarioError(f"detuning {d:.6g} rad/s admits no non-negative anti-blockade interaction")
            new = replace(self, detuning=d, omega_c=alpha * d, interaction=v,
                          couplings=default_couplings(self.n, v), detuning_source="given")
            return replace(new, tau=self.tau_eff_units / new.omega_eff)
        raise ScenarioError(f"field '{field_name}' cannot be swept; choose from {sorted(SWEEP_FIELDS)}")

    def header_lines(self) -> list[str]:
        """Resolved scenario as ``key = value`` lines with fixed formatting."""
        out = [f"scenario = {self.name}", f"source = {Path(self.source).name}"]
        d = asdict(self)
        d.pop("source")
        d.pop("name")
        integ = d.pop("integrator")
        sweep = d.pop("sweep")
        cpl = d.pop("couplings")
        for k in sorted(d):
            out.append(f"{k} = {_fmt(d[k])}")
        for k in sorted(integ):
            out.append(f"integrator.{k} = {_fmt(integ[k])}")
        for (i, j), v in sorted(self.couplings.items()):
            out.append(f"V_{i}{j} = {_fmt(v)}")
        for ax in self.sweep:
            out.append(f"sweep.{ax.field} = [{', '.join(_fmt(v) for v in ax.values)}]")
        out.append("units = rad/s, s")
        return out

    def as_dict(self) -> dict:
        d = {}
        for line in self.header_lines():
            k, _, v = line.partition(" = ")
            d[k] = v
        return d


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12e}"
    return str(v)


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    r = _Reader(data, text, source)
    for sec, val in data.items():
        if sec not in _SCHEMA:
            r.fail(None, sec, f"unknown section; allowed: {', '.join(_SCHEMA)}")
        keys = _SCHEMA[sec]
        if keys is None:
            continue
        if not isinstance(val, dict):
            r.fail(None, sec, "must be a table")
        for k in val:
            if k not in keys:
                r.fail(sec, k, f"unknown field; allowed: {', '.join(sorted(keys))}")

    name = data.get("name", Path(source).stem)
    kind = r.get("gate", "kind", kinds=(str,))
    if kind in GATES:
        n = GATES[kind]
        if "n" in data.get("gate", {}) and r.get("gate", "n", kinds=(int,)) != n:
            r.fail("gate", "n", f"{kind} has n = {n}")
    elif kind == "ck-not":
        n = r.get("gate", "n", kinds=(int,))
        if n < 2:
            r.fail("gate", "n", "need n >= 2")
    else:
        r.fail("gate", "kind", f"unknown gate {kind!r}; use cnot, toffoli or ck-not")

    omega = convert_frequency(*r.quantity("drive", "omega", FREQ_UNITS))
    if not omega > 0:
        r.fail("drive", "omega", "must be positive")
    fu_omega = dict(FREQ_UNITS, omega=None)
    gamma = convert_frequency(*r.quantity("drive", "gamma", fu_omega, default=(0.0, "rad/s")), omega)
    if gamma < 0:
        r.fail("drive", "gamma", "must be non-negative")

    det_raw = data.get("drive", {}).get("detuning")
    residual = 0.0
    if det_raw == "rab-solve":
        alpha = r.get("drive", "alpha", kinds=(int, float))
        if not 0 <= alpha < 1:
            r.fail("drive", "alpha", "must lie in [0, 1)")
        v_total = convert_frequency(*r.quantity("drive", "interaction", fu_omega), omega)
        half = omega / math.sqrt(2)
        detuning = rab_solve(v_total, half, half, alpha, n)
        residual = float(rab_residual(v_total, half, half, alpha, n, detuning))
        if "omega_c" in data.get("drive", {}):
            r.fail("drive", "omega_c", "omega_c follows from alpha when the detuning is solved")
        omega_c = alpha * detuning
        source_kind = "rab-solve"
        couplings = default_couplings(n, v_total)
    else:
        if isinstance(det_raw, str):
            r.fail("drive", "detuning", "use a quantity table or the string \"rab-solve\"")
        detuning = convert_frequency(*r.quantity("drive", "detuning", fu_omega), omega)
        if not detuning > 0:
            r.fail("drive", "detuning", "must be positive")
        omega_c = convert_frequency(*r.quantity("drive", "omega_c", fu_omega, default=(1.0, "omega")), omega)
        if not omega_c > 0:
            r.fail("drive", "omega_c", "must be positive")
        if "alpha" in data.get("drive", {}):
            r.fail("drive", "alpha", "alpha is only used with detuning = \"rab-solve\"")
        source_kind = "given"
        if "interaction" in data.get("drive", {}):
            v_total = convert_frequency(*r.quantity("drive", "interaction", fu_omega), omega)
        else:
            v_total = rab_interaction(detuning, omega**2, omega_c / detuning, n)
            if v_total < 0:
                r.fail("drive", "detuning", "no non-negative interaction meets the anti-blockade condition")
        couplings = default_couplings(n, v_total)
    if "couplings" in data.get("drive", {}):
        couplings = {}
        entries = r.get("drive", "couplings", kinds=(list,))
        for e in entries:
            if not isinstance(e, dict) or set(e) != {"pair", "value", "unit"}:
                r.fail("drive", "couplings", "entries must be { pair = [i, j], value = ..., unit = \"...\" }")
            if e["unit"] not in fu_omega:
                r.fail("drive", "couplings", f"unknown unit {e['unit']!r}")
            i, j = sorted(int(x) for x in e["pair"])
            couplings[(i, j)] = convert_frequency(float(e["value"]), e["unit"], omega)
        v_total = sum(couplings.values())

    alpha = omega_c / detuning
    omega_eff = effective_prefactor(n, alpha) * omega
    tu = dict(TIME_UNITS, **{"1/omega": None, "1/omega_eff": None})
    tau = convert_time(*r.quantity("pulse", "tau", tu), omega, omega_eff)
    if not tau > 0:
        r.fail("pulse", "tau", "must be positive")
    edge_tol = float(r.get("pulse", "edge_tol", 1e-4, kinds=(int, float)))
    dressing = r.get("pulse", "dressing", "simplest", kinds=(str,))
    if dressing not in ("simplest", "none"):
        r.fail("pulse", "dressing", "must be 'simplest' or 'none'")
    samples = r.get("pulse", "samples", 8001, kinds=(int,))

    try:
        model = canonical_model(r.get("model", "name", "full-cosine", kinds=(str,)))
    except ValueError as exc:
        r.fail("model", "name", str(exc))
    dissipation = r.get("model", "dissipation", True, kinds=(bool,))
    tracking = r.get("model", "rab_tracking", True, kinds=(bool,))

    max_step = r.quantity("integrator", "max_step", tu, default=None)
    try:
        integ = IntegratorConfig(
            method=r.get("integrator", "method", GATE_CONFIG.method, kinds=(str,)),
            rtol=float(r.get("integrator", "rtol", GATE_CONFIG.rtol, kinds=(int, float))),
            atol=float(r.get("integrator", "atol", GATE_CONFIG.atol, kinds=(int, float))),
            max_step=math.inf if max_step is None else convert_time(*max_step, omega, omega_eff),
            samples=r.get("integrator", "samples", GATE_CONFIG.samples, kinds=(int,)),
        )
    except ValueError as exc:
        raise ScenarioError(f"{source}: section 'integrator': {exc}") from None

    out_dir = r.get("output", "dir", f"out/{name}", kinds=(str,))
    grid = r.get("output", "theta_grid", 101, kinds=(int,))
    if grid < 21 or grid % 2 == 0:
        r.fail("output", "theta_grid", "must be odd and at least 21")
    step_tables = r.get("output", "step_tables", True, kinds=(bool,))

    axes = []
    for ax in data.get("sweep", {}).get("axes", []):
        if not isinstance(ax, dict) or "field" not in ax or "values" not in ax:
            r.fail("sweep", "axes", "entries need 'field' and 'values'")
        f = ax["field"]
        if f not in SWEEP_FIELDS:
            r.fail("sweep", "axes", f"cannot sweep {f!r}; choose from {sorted(SWEEP_FIELDS)}")
        vals = ax["values"]
        if not isinstance(vals, list) or not vals or len(vals) > MAX_AXIS_POINTS:
            r.fail("sweep", "axes", f"'{f}' needs 1 to {MAX_AXIS_POINTS} values")
        kind_ = SWEEP_FIELDS[f]
        unit = ax.get("unit")
        if kind_ == "number":
            conv = tuple(float(v) for v in vals)
        elif unit is None:
            r.fail("sweep", "axes", f"'{f}' values need an explicit unit")
        elif kind_ == "frequency":
            if unit not in fu_omega:
                r.fail("sweep", "axes", f"unknown unit {unit!r}")
            conv = tuple(convert_frequency(float(v), unit, omega) for v in vals)
        else:
            if unit not in tu:
                r.fail("sweep", "axes", f"unknown unit {unit!r}")
            conv = tuple(convert_time(float(v), unit, omega, omega_eff) for v in vals)
        axes.append(SweepAxis(f, conv, unit))
    if len(axes) > 2:
        r.fail("sweep", "axes", "at most two sweep axes")
    if math.prod(len(a.values) for a in axes) > MAX_SWEEP_POINTS:
        r.fail("sweep", "axes", f"at most {MAX_SWEEP_POINTS} grid points")

    return Scenario(str(name), kind, n, omega, omega_c, detuning, source_kind, float(v_total), couplings, gamma,
                    tau, tau * omega_eff, edge_tol, dressing, samples, model, dissipation, tracking, integ,
                    out_dir, grid, step_tables, residual, 0.0, tuple(axes), source)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text, str(p))


def bundled_scenarios() -> dict[str, Path]:
    root = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.toml"))}
