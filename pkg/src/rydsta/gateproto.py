"""Three-step controlled-NOT protocols: truth tables, fidelities and state paths.

A gate run applies the three transfer steps ``1 -> m``, ``0 -> 1``,
``m -> 0`` on the target back to back, with the control lasers always on
and one continuous carrier phase, carrying the full register state from
step to step.  All inputs of a run are propagated together as one batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import product

import numpy as np

from .dynamo import IntegratorConfig, Trajectory, concatenate, evolve_lindblad, evolve_schrodinger
from .hammodel import (STEPS, DriveParams, DriveTrack, StepSpec, build_effective_hamiltonian,
                       build_full_hamiltonian, drive_track, effective_basis, effective_prefactor,
                       lindblad_ops)
from .pulsegen import PulseDesign, VitanovPulseSpec, design_pulse
from .qcore import HilbertSpace, QuantumState, uhlmann_fidelity

MODELS = ("full-cosine", "full-rotating-wave", "effective")
MODEL_ALIASES = {"full-rw": "full-rotating-wave", "full-cos": "full-cosine", "rw": "full-rotating-wave",
                 "cosine": "full-cosine"}
GATE_CONFIG = IntegratorConfig(rtol=1e-9, atol=1e-11)
LEAKAGE_FLAG = 0.9


class ProtocolError(ValueError):
    """Protocol definition violates the three-step contract."""


def canonical_model(name: str) -> str:
    name = MODEL_ALIASES.get(name, name)
    if name not in MODELS:
        raise ValueError(f"model must be one of {MODELS} (or {sorted(MODEL_ALIASES)}), got {name!r}")
    return name


@dataclass(frozen=True)
class GateProtocol:
    """A C_{n-1}-NOT built from three dressed (or undressed) transfer steps.

    Attributes:
        params: drives and interactions; ``params.n`` is the qubit count.
        pulse: effective pulse pair used for every step.
        model: ``full-cosine``, ``full-rotating-wave`` or ``effective``.
        dissipation: propagate with the decay jump operators when ``gamma > 0``.
        dressing: ``simplest`` (dressed) or ``none`` (plain adiabatic pulses).
        rab_tracking: let ``Delta(t)`` follow the anti-blockade root.
        amplitude_scale: delivered/nominal pump and Stokes amplitude.
    """

    params: DriveParams
    pulse: VitanovPulseSpec
    model: str = "full-cosine"
    dissipation: bool = True
    dressing: str = "simplest"
    rab_tracking: bool = True
    integrator: IntegratorConfig = GATE_CONFIG
    design_samples: int = 8001
    amplitude_scale: float = 1.0
    steps: tuple[StepSpec, ...] = STEPS

    def __post_init__(self):
        object.__setattr__(self, "model", canonical_model(self.model))
        if tuple(self.steps) != STEPS:
            raise ProtocolError("a gate is exactly the steps 1->m, 0->1, m->0 in that order")
        if self.dressing not in ("simplest", "none"):
            raise ProtocolError(f"dressing must be 'simplest' or 'none', got {self.dressing!r}")
        if not self.params.omega_c > 0:
            raise ProtocolError("the control drive must stay on in every step")

    @property
    def n(self) -> int:
        return self.params.n

    @cached_property
    def space(self) -> HilbertSpace:
        return HilbertSpace.register(self.n)

    @cached_property
    def design(self) -> PulseDesign:
        return design_pulse(self.pulse, self.dressing, self.design_samples)

    @cached_property
    def tracks(self) -> tuple[DriveTrack, ...]:
        out, phase = [], 0.0
        for _ in self.steps:
            tr = drive_track(self.design, self.params, self.rab_tracking, phase_start=phase,
                             amplitude_scale=self.amplitude_scale)
            if not np.all(tr.omega_c > 0):
                raise ProtocolError("control drive vanishes inside a step")
            out.append(tr)
            phase = float(tr.phase[-1])
        return tuple(out)

    def hamiltonian(self, k: int):
        step, tr = self.steps[k], self.tracks[k]
        if self.model == "effective":
            return build_effective_hamiltonian(tr, step, self.space)
        form = "cosine" if self.model == "full-cosine" else "rotating-wave"
        return build_full_hamiltonian(self.params, step, form, tr)

    @property
    def open_system(self) -> bool:
        return self.dissipation and self.params.gamma > 0

    @cached_property
    def jumps(self):
        return lindblad_ops(self.params, self.space) if self.open_system else []

    @property
    def step_duration(self) -> float:
        return self.pulse.duration

    def with_(self, **kw) -> "GateProtocol":
        return replace(self, **kw)


def gate_protocol(n: int, omega: float, detuning: float, tau_units: float = 0.2, *, omega_c: float | None = None,
                  gamma: float = 0.0, edge_tol: float = 1e-4, dressing: str = "simplest", **kw) -> GateProtocol:
    """Protocol with pulse rms ``omega`` and ``tau = tau_units / Omega_eff``.

    ``Omega_eff`` is the effective amplitude ``n! alpha^(n-1) / 2^n * omega``.
    """
    params = DriveParams.for_gate(n, omega, detuning, omega_c=omega_c, gamma=gamma)
    amp = effective_prefactor(n, params.alpha) * omega
    spec = VitanovPulseSpec.symmetric(amp, tau_units / amp, edge_tol, dressing_aware=dressing == "simplest")
    return GateProtocol(params, spec, dressing=dressing, **kw)


# ---------------------------------------------------------------------------
# basis bookkeeping


def computational_labels(n: int) -> list[tuple[str, ...]]:
    return [tuple(b) for b in product("01", repeat=n)]


def extended_labels(n: int) -> list[tuple[str, ...]]:
    """Controls in ``{0, 1}``, target in ``{0, 1, m}``."""
    return [c + (t,) for c in product("01", repeat=n - 1) for t in "01m"]


def ideal_gate(n: int) -> np.ndarray:
    """Permutation on the computational basis flipping the target iff all controls are 1."""
    labels = computational_labels(n)
    u = np.zeros((len(labels), len(labels)))
    for j, lab in enumerate(labels):
        out = lab
        if all(c == "1" for c in lab[:-1]):
            out = lab[:-1] + ("1" if lab[-1] == "0" else "0",)
        u[labels.index(out), j] = 1.0
    return u


def ideal_step(n: int, step: StepSpec) -> np.ndarray:
    """Ideal transfer map of one step on the extended basis."""
    labels = extended_labels(n)
    u = np.zeros((len(labels), len(labels)))
    for j, lab in enumerate(labels):
        out = lab
        if all(c == "1" for c in lab[:-1]):
            if lab[-1] == step.in_label:
                out = lab[:-1] + (step.out_label,)
            elif lab[-1] == step.out_label:
                out = lab[:-1] + (step.in_label,)
        u[labels.index(out), j] = 1.0
    return u


def _kets(space: HilbertSpace, labels) -> np.ndarray:
    psi = np.zeros((len(labels), space.dim), dtype=complex)
    for i, lab in enumerate(labels):
        psi[i, space.index(lab)] = 1.0
    return psi


def fidelity_pair(n: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """``|1..10>`` and ``|1..11>``, the inputs of the average-fidelity integral."""
    ones = ("1",) * (n - 1)
    return ones + ("0",), ones + ("1",)


# ---------------------------------------------------------------------------
# propagation


def propagate(protocol: GateProtocol, states, steps=None, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Run a batch of states through the given step indices (default: all three).

    ``states`` is ``(B, d)`` kets or ``(B, d, d)`` density matrices; kets are
    promoted when the protocol is dissipative.
    """
    cfg = protocol.integrator if cfg is None else cfg
    steps = range(len(protocol.steps)) if steps is None else steps
    state = np.asarray(states, dtype=complex)
    if protocol.open_system and state.ndim == 2:
        state = np.einsum("bi,bj->bij", state, state.conj())
    pieces = []
    for k in steps:
        H = protocol.hamiltonian(k)
        if state.ndim == 3:
            tr = evolve_lindblad(H, protocol.jumps, state, cfg=cfg)
        else:
            tr = evolve_schrodinger(H, state, cfg=cfg)
        pieces.append(tr)
        state = tr.final
    return concatenate(pieces)


def run_gate(protocol: GateProtocol, input_state) -> tuple[QuantumState, Trajectory]:
    """Propagate one input through the whole gate."""
    space = protocol.space
    if isinstance(input_state, QuantumState):
        data = input_state.data
    else:
        data = np.asarray(input_state, dtype=complex)
    pops = np.abs(data) ** 2 if data.ndim == 1 else np.real(np.diagonal(data))
    comp = [space.index(l) for l in computational_labels(protocol.n)]
    if abs(pops[comp].sum() - 1) > 1e-9:
        raise ValueError("input must be supported on the computational levels 0, 1")
    traj = propagate(protocol, data[None])
    return QuantumState(traj.final[0], space, validate=False), traj


def run_step(protocol: GateProtocol, step_index: int, input_state) -> tuple[QuantumState, Trajectory]:
    """Propagate one input through a single step (1, 2 or 3)."""
    data = input_state.data if isinstance(input_state, QuantumState) else np.asarray(input_state, dtype=complex)
    traj = propagate(protocol, data[None], steps=[step_index - 1])
    return QuantumState(traj.final[0], protocol.space, validate=False), traj


# ---------------------------------------------------------------------------
# reports


def _output_populations(final: np.ndarray, space: HilbertSpace, labels) -> np.ndarray:
    idx = [space.index(l) for l in labels]
    if final.ndim == 2:
        p = np.abs(final) ** 2
    else:
        p = np.real(np.diagonal(final, axis1=1, axis2=2))
    return p[:, idx].T  # rows: outputs, columns: inputs


def _fidelity_integrand(e_aa, e_bb, e_ab, out_a, out_b, thetas):
    c, s = np.cos(thetas / 2), np.sin(thetas / 2)
    vals = []
    for ci, si in zip(c, s):
        rho = ci * ci * e_aa + si * si * e_bb + ci * si * (e_ab + e_ab.conj().T)
        ideal = ci * out_a + si * out_b
        vals.append(float(np.real(np.vdot(ideal, rho @ ideal))))
    return np.array(vals)


def _check_grid(grid: int):
    if grid < 21 or grid % 2 == 0:
        raise ValueError(f"theta grid must be odd and at least 21, got {grid}")


def average_fidelity_from_maps(e_aa, e_bb, e_ab, out_a, out_b, grid: int = 101) -> float:
    """``(1/2 pi) int dtheta <psi_id(theta)| rho_out(theta) |psi_id(theta)>`` by the trapezoid rule.

    ``e_xy`` are the channel outputs for ``|x><y|`` and ``out_x`` the ideal
    output kets of the two inputs.
    """
    _check_grid(grid)
    th = np.linspace(-np.pi, np.pi, grid)
    return float(np.trapezoid(_fidelity_integrand(e_aa, e_bb, e_ab, out_a, out_b, th), th) / (2 * np.pi))


@dataclass
class GateReport:
    """Results of a gate run.

    ``truth_table[i, j]`` is the population of computational output ``i``
    for input ``j``; ``step_tables[k]`` is the same on the extended basis
    for step ``k`` alone.
    """

    n: int
    model: str
    labels: list[str]
    truth_table: np.ndarray
    ideal: np.ndarray
    per_input_fidelity: dict[str, float]
    average_fidelity: float
    phases: dict[str, float]
    leakage: dict[str, float]
    step_labels: list[str] = field(default_factory=list)
    step_tables: list[np.ndarray] = field(default_factory=list)
    trajectory: Trajectory | None = None
    input_labels: list[str] = field(default_factory=list)
    step_duration: float = 0.0
    max_conservation_error: float = 0.0
    min_eigenvalue: float | None = None

    def correct_entries(self) -> np.ndarray:
        """Simulated populations at the positions where the ideal table has a 1."""
        return self.truth_table[self.ideal > 0.5]

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "model": self.model,
            "labels": self.labels,
            "truth_table": self.truth_table.tolist(),
            "ideal_truth_table": self.ideal.tolist(),
            "per_input_fidelity": self.per_input_fidelity,
            "average_fidelity": self.average_fidelity,
            "phases": self.phases,
            "leakage": self.leakage,
            "step_duration_s": self.step_duration,
            "max_conservation_error": self.max_conservation_error,
        }
        if self.min_eigenvalue is not None:
            d["min_eigenvalue"] = self.min_eigenvalue
        if self.step_tables:
            d["step_labels"] = self.step_labels
            d["step_tables"] = [t.tolist() for t in self.step_tables]
        return d


def simulate_gate(protocol: GateProtocol, grid: int = 101, step_tables: bool = False,
                  cfg: IntegratorConfig | None = None) -> GateReport:
    """Truth table, fidelities and phases from one batched gate run.

    The batch holds every computational basis input; dissipative runs add
    ``|+> = (|a>+|b>)/sqrt2`` and ``|+i> = (|a>+i|b>)/sqrt2`` for the
    fidelity pair ``a, b`` so that the channel output on ``|a><b|`` follows
    by linearity.
    """
    _check_grid(grid)
    n, space = protocol.n, protocol.space
    labels = computational_labels(n)
    kets = _kets(space, labels)
    a_lab, b_lab = fidelity_pair(n)
    ia, ib = labels.index(a_lab), labels.index(b_lab)
    extra = []
    if protocol.open_system:
        extra = [(kets[ia] + kets[ib]) / math.sqrt(2), (kets[ia] + 1j * kets[ib]) / math.sqrt(2)]
    batch = np.vstack([kets] + ([np.array(extra)] if extra else []))
    traj = propagate(protocol, batch, cfg=cfg)
    final = traj.final

    table = _output_populations(final[: len(labels)], space, labels)
    ideal = ideal_gate(n)
    ideal_kets = np.array([kets[int(np.argmax(ideal[:, j]))] for j in range(len(labels))])

    def dm(k):
        return final[k] if final.ndim == 3 else np.outer(final[k], final[k].conj())

    per_input, phases, leak = {}, {}, {}
    for j, lab in enumerate(labels):
        name = "".join(lab)
        per_input[name] = uhlmann_fidelity(_sanitize(dm(j)), ideal_kets[j])
        leak[name] = float(1 - table[:, j].sum())
        if final.ndim == 2:
            phases[name] = float(np.angle(np.vdot(ideal_kets[j], final[j])))
    if final.ndim == 2:
        e_aa, e_bb = dm(ia), dm(ib)
        e_ab = np.outer(final[ia], final[ib].conj())
    else:
        e_aa, e_bb = final[ia], final[ib]
        e_p, e_pi = final[len(labels)], final[len(labels) + 1]
        # |a><b| = |+><+| + i|+i><+i| - (1+i)/2 (|a><a| + |b><b|)
        e_ab = e_p + 1j * e_pi - 0.5 * (1 + 1j) * (e_aa + e_bb)
        phases["a-b coherence"] = float(np.angle(np.vdot(ideal_kets[ia], e_ab @ ideal_kets[ib])))
    fav = average_fidelity_from_maps(e_aa, e_bb, e_ab, ideal_kets[ia], ideal_kets[ib], grid)

    report = GateReport(n, protocol.model, ["".join(l) for l in labels], table, ideal, per_input, fav, phases, leak,
                        trajectory=traj,
                        input_labels=["".join(l) for l in labels] + (["+", "+i"] if extra else []),
                        step_duration=protocol.step_duration,
                        max_conservation_error=traj.max_conservation_error,
                        min_eigenvalue=traj.min_eigenvalue)
    if step_tables:
        ext = extended_labels(n)
        report.step_labels = ["".join(l) for l in ext]
        ext_kets = _kets(space, ext)
        for k in range(len(protocol.steps)):
            tr = propagate(protocol, ext_kets, steps=[k], cfg=cfg)
            report.step_tables.append(_output_populations(tr.final, space, ext))
    return report


def _sanitize(rho: np.ndarray) -> np.ndarray:
    """Renormalise a propagated state so the fidelity validators accept integration drift."""
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.real(np.trace(rho))


def truth_table(protocol: GateProtocol, step_tables: bool = True) -> GateReport:
    return simulate_gate(protocol, step_tables=step_tables)


def average_fidelity(protocol: GateProtocol, grid: int = 101) -> float:
    return simulate_gate(protocol, grid=grid).average_fidelity


# ---------------------------------------------------------------------------
# state paths


@dataclass(frozen=True)
class SpherePath:
    """Amplitude magnitudes ``(a, b, c)`` on ``(In, R, Out)``; ``flagged`` marks heavy leakage."""

    t: np.ndarray
    coords: np.ndarray
    flagged: np.ndarray

    @property
    def norm_sq(self) -> np.ndarray:
        return np.sum(self.coords**2, axis=1)


def sphere_path(trajectory: Trajectory, step: StepSpec, member: int = 0,
                space: HilbertSpace | None = None) -> SpherePath:
    """Project a trajectory onto the step's ``In``, ``R``, ``Out`` axes.

    Coordinates are square roots of the three populations, so
    ``a^2 + b^2 + c^2`` equals the population kept inside the subspace.
    Samples where it falls below 0.9 are flagged.
    """
    space = trajectory.space if space is None else space
    pops = trajectory.populations[:, member]
    idx = (0, 1, 2) if space is None or pops.shape[1] == 3 else effective_basis(space, step)
    coords = np.sqrt(np.clip(pops[:, list(idx)], 0.0, None))
    norm_sq = np.sum(coords**2, axis=1)
    return SpherePath(trajectory.times, coords, norm_sq < LEAKAGE_FLAG)


def adiabatic_reference_run(protocol: GateProtocol, tau_units: float = 3.0, detuning: float | None = None,
                            step_index: int = 1, window: tuple[float, float] | None = None):
    """One undressed step with ``tau = tau_units / Omega_eff`` for comparison runs.

    A ``window`` too narrow for the edge tolerance raises
    :class:`~rydsta.pulsegen.WindowError`.
    """
    params = protocol.params
    if detuning is not None:
        params = DriveParams.for_gate(params.n, math.sqrt(2) * params.omega_p, detuning,
                                      omega_c=params.alpha * detuning, gamma=params.gamma)
    amp = effective_prefactor(params.n, params.alpha) * math.sqrt(2) * params.omega_p
    tau = tau_units / amp
    if window is None:
        spec = VitanovPulseSpec.symmetric(amp, tau, protocol.pulse.edge_tol, dressing_aware=False)
    else:
        spec = VitanovPulseSpec(amp, tau, window[0], window[1], protocol.pulse.edge_tol)
    ref = protocol.with_(params=params, pulse=spec, dressing="none")
    step = ref.steps[step_index - 1]
    ones = ("1",) * (params.n - 1)
    psi = np.zeros(ref.space.dim, dtype=complex)
    psi[ref.space.index(ones + (step.in_label,))] = 1.0
    return run_step(ref, step_index, psi)
