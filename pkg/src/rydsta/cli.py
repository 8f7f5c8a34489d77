"""Command-line runner: ``rydsta <command> --scenario FILE``.

Exit status is 0 on success, 1 for a physics or numerics failure (no
anti-blockade root, integrator breakdown, bad pulse window) and 2 for a
configuration error.  Every file written starts with the resolved scenario.
"""
from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import reporting
from .dynamo import IntegrationError
from .gateproto import ProtocolError, canonical_model, simulate_gate, sphere_path
from .hammodel import STEPS, RabSolveError, rab_residual
from .pulsegen import ScheduleSingularityError, WindowError, base_pulses, design_pulse
from .scenario import Scenario, ScenarioError, bundled_scenarios, load_scenario

DOMAIN_ERRORS = (RabSolveError, IntegrationError, WindowError, ScheduleSingularityError, ProtocolError)
MODEL_CHOICES = ("effective", "full-rw", "full-rotating-wave", "full-cosine")


class _Output:
    """Single writer for one command: tracks files for the manifest."""

    def __init__(self, root: Path, header: list[str]):
        self.root = root
        self.header = header
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def manifest(self, status: str, error: str | None = None):
        doc = {"status": status, "files": sorted(self.files)}
        if error is not None:
            doc["error"] = error
        reporting.write_json(self.root / "manifest.json", _scenario_map(self.header), doc)


def _scenario_map(header: list[str]) -> dict:
    out = {}
    for line in header:
        k, _, v = line.partition(" = ")
        out[k] = v
    return out


def _resolve_scenario(arg: str) -> Scenario:
    p = Path(arg)
    if not p.exists():
        bundled = bundled_scenarios()
        if arg in bundled:
            p = bundled[arg]
        else:
            raise ScenarioError(f"no scenario file {arg!r}; bundled: {', '.join(bundled)}")
    return load_scenario(p)


def _prepare(args) -> tuple[Scenario, _Output]:
    sc = _resolve_scenario(args.scenario)
    if args.model is not None:
        sc = replace(sc, model=canonical_model(args.model))
    out_dir = Path(args.out) if args.out is not None else Path(sc.out_dir)
    header = sc.header_lines() + [f"command = {args.command}"]
    return sc, _Output(out_dir, header)


# ---------------------------------------------------------------------------
# commands


def cmd_design_pulse(sc: Scenario, out: _Output) -> dict:
    spec = sc.pulse_spec()
    design = design_pulse(spec, sc.dressing, sc.design_samples)
    sched, corr, ang = design.schedule, design.corrections, design.angles
    bp, bs = base_pulses(sched.t, spec)
    reporting.write_csv(out.path("waveform.csv"), out.header, {
        "t_s": sched.t, "theta": ang.theta, "base_rms": ang.rms, "base_pump": bp, "base_stokes": bs,
        "mu": design.dressed.mu, "xi": design.dressed.xi, "eta": design.dressed.eta,
        "g_x": corr.g_x, "g_z": corr.g_z, "theta_new": sched.theta, "rms_new": sched.rms,
        "pump_new": sched.omega_p, "stokes_new": sched.omega_s,
    })
    peak = float(np.max(sched.rms))
    summary = {
        "window_s": [spec.t_start, spec.t_end],
        "step_duration_s": spec.duration,
        "tau_s": spec.tau,
        "omega_eff_rad_s": spec.amplitude,
        "edge_tol": spec.edge_tol,
        "dressing": sc.dressing,
        "boundary_error": design.dressed.boundary_error(),
        "max_omega_new_rad_s": peak,
        "max_omega_new_over_omega_eff": peak / spec.amplitude,
        "flagged_samples": int(np.count_nonzero(sched.flagged)),
    }
    reporting.write_json(out.path("design.json"), _scenario_map(out.header), summary)
    reporting.plot_waveforms(out.path("waveforms.png"), out.header, sched.t, bp, bs,
                             sched.omega_p, sched.omega_s, spec.tau)
    return summary


def cmd_rab_solve(sc: Scenario, out: _Output) -> dict:
    half = sc.omega / math.sqrt(2)
    residual = float(rab_residual(sc.interaction, half, half, sc.alpha, sc.n, sc.detuning))
    doc = {
        "n": sc.n,
        "source": sc.detuning_source,
        "interaction_rad_s": sc.interaction,
        "alpha": sc.alpha,
        "detuning_rad_s": sc.detuning,
        "detuning_2pi_MHz": sc.detuning / (2 * math.pi * 1e6),
        "residual_delta_eff_rad_s": residual,
        "relative_residual": abs(residual) / sc.detuning,
    }
    reporting.write_json(out.path("rab_solve.json"), _scenario_map(out.header), doc)
    return doc


def _step_slices(times: np.ndarray, duration: float, count: int):
    rel = times - times[0]
    tol = 1e-9 * duration
    for k in range(count):
        lo, hi = k * duration, (k + 1) * duration
        yield np.flatnonzero((rel >= lo - tol) & (rel <= hi + tol))


def cmd_simulate(sc: Scenario, out: _Output, tables_only: bool = False) -> dict:
    proto = sc.protocol()
    report = simulate_gate(proto, grid=sc.theta_grid, step_tables=sc.step_tables)
    labels = report.labels
    reporting.write_table_csv(out.path("truth_table.csv"), out.header, labels, labels, report.truth_table)
    for k, tab in enumerate(report.step_tables, 1):
        reporting.write_table_csv(out.path(f"step{k}_table.csv"), out.header, report.step_labels,
                                  report.step_labels, tab)
    doc = report.to_dict()
    doc["correct_entries_min"] = float(report.correct_entries().min())
    reporting.write_json(out.path("report.json"), _scenario_map(out.header), doc)
    reporting.plot_truth_table(out.path("truth_table.png"), out.header, labels, report.truth_table,
                               f"F_av = {report.average_fidelity:.4f}")
    if tables_only:
        return doc

    traj = report.trajectory
    space = proto.space
    names = [space.label_string(i) for i in range(space.dim)]
    for j, lab in enumerate(report.input_labels):
        tag = lab.replace("+", "plus")
        traj.to_csv(out.path(f"trajectory_{tag}.csv"), member=j, labels=names, header=out.header)

    ones = "1" * (sc.n - 1)
    members = {ones + "1": labels.index(ones + "1"), ones + "0": labels.index(ones + "0")}
    paths = {}
    for k, idx in enumerate(_step_slices(traj.times, proto.step_duration, len(STEPS))):
        step = STEPS[k]
        member = members[ones + "0"] if step.index == 2 else members[ones + "1"]
        sub = replace(traj, times=traj.times[idx] - traj.times[0] - k * proto.step_duration,
                      populations=traj.populations[idx], states=None)
        sp = sphere_path(sub, step, member, space)
        paths[f"step {step.index}: {step.in_label}->{step.out_label}"] = sp.coords
        reporting.write_csv(out.path(f"sphere_step{step.index}.csv"), out.header, {
            "t_s": sp.t, "a_in": sp.coords[:, 0], "b_r": sp.coords[:, 1], "c_out": sp.coords[:, 2],
            "norm_sq": sp.norm_sq, "flagged": sp.flagged.astype(int),
        })
    reporting.plot_sphere_paths(out.path("sphere_paths.png"), out.header, paths)

    curves = {}
    member = members[ones + "1"]
    for lvl in (ones + "1", ones + "0", ones + "m", "r" * sc.n):
        if lvl in names:
            curves["|" + lvl + ">"] = traj.populations[:, member, names.index(lvl)]
    reporting.plot_populations(out.path("populations.png"), out.header, traj.times - traj.times[0], curves,
                               boundaries=[k * proto.step_duration for k in range(1, len(STEPS))])
    return doc


def _sweep_point(args):
    sc, assignment = args
    try:
        for f, v in assignment:
            sc = sc.with_value(f, v)
        rep = simulate_gate(sc.protocol(), grid=sc.theta_grid)
        return float(rep.average_fidelity), float(rep.correct_entries().min()), "ok"
    except (ScenarioError,) + DOMAIN_ERRORS as exc:
        return float("nan"), float("nan"), f"{type(exc).__name__}: {exc}"


def cmd_sweep(sc: Scenario, out: _Output, threads: int = 1) -> dict:
    axes = sc.sweep
    grids = [[(ax.field, v) for v in ax.values] for ax in axes]
    points = [tuple(p) for p in itertools.product(*grids)] if axes else [()]
    jobs = [(sc, p) for p in points]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    cols: dict[str, list] = {ax.field: [] for ax in axes}
    cols.update({"average_fidelity": [], "min_correct_entry": [], "status": []})
    for p, (fav, mce, status) in zip(points, results):
        for f, v in p:
            cols[f].append(float(v))
        cols["average_fidelity"].append(fav)
        cols["min_correct_entry"].append(mce)
        cols["status"].append(status)
    reporting.write_csv(out.path("sweep.csv"), out.header, cols)
    if axes:
        x = np.array(axes[0].values)
        y = np.array(cols["average_fidelity"]).reshape([len(a.values) for a in axes])
        series = None
        if len(axes) == 2:
            series = [f"{axes[1].field} = {v:.4g}" for v in axes[1].values]
        reporting.plot_sweep(out.path("sweep.png"), out.header, x, y, f"{axes[0].field} (SI)", series)
    return {"points": len(points), "failed": sum(s != "ok" for s in cols["status"])}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydsta", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("design-pulse", "dressed pulse waveforms and summary"),
                        ("rab-solve", "anti-blockade detuning and residual"),
                        ("simulate", "full gate run: tables, fidelity, trajectories, figures"),
                        ("truth-table", "same as simulate --tables-only"),
                        ("sweep", "average fidelity over the scenario's sweep axes")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--scenario", required=True, help="TOML file or bundled scenario name")
        p.add_argument("--model", choices=MODEL_CHOICES, default=None)
        p.add_argument("--out", default=None, help="output directory (overrides the scenario)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--seed", type=int, default=None, help="reserved; the dynamics are deterministic")
        if name == "simulate":
            p.add_argument("--tables-only", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc, out = _prepare(args)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "design-pulse":
            result = cmd_design_pulse(sc, out)
        elif args.command == "rab-solve":
            result = cmd_rab_solve(sc, out)
        elif args.command in ("simulate", "truth-table"):
            result = cmd_simulate(sc, out, tables_only=args.command == "truth-table" or args.tables_only)
        else:
            result = cmd_sweep(sc, out, max(1, args.threads))
    except ScenarioError as exc:
        out.manifest("config-error", str(exc))
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as exc:
        out.manifest("error", f"{type(exc).__name__}: {exc}")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    out.manifest("ok")
    print("----- result -----")
    print(json.dumps(reporting._jsonable(result), indent=2))
    print("----- files -----")
    for f in out.files:
        print(out.root / f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
