"""Schrodinger and Lindblad propagation for time-dependent Hamiltonians.

Both propagators step a scipy embedded Runge-Kutta solver by hand so that
every accepted step can be inspected: the norm (or trace) deviation is
logged, and density matrices are re-symmetrised to ``(rho + rho^dag)/2``.
Samples on a uniform grid come from the solver's dense output.

States may be batched: a ``(B, d)`` array of kets or a ``(B, d, d)`` array
of density matrices evolves as one ODE system, which is how the gate layer
propagates all truth-table inputs at once.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import DOP853, RK23, RK45

from .hammodel import TimeDependentHamiltonian
from .qcore import HilbertSpace, Operator, QuantumState

_METHODS = {"DOP853": DOP853, "RK45": RK45, "RK23": RK23}
STEPS_PER_CARRIER_PERIOD = 20
POSITIVITY_REPORT_TOL = 1e-6


class IntegrationError(RuntimeError):
    """The solver failed (step-size underflow or tolerance failure)."""


class PositivityWarning(RuntimeWarning):
    """A propagated density matrix has an eigenvalue below the report threshold."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Adaptive Runge-Kutta settings.

    ``max_step`` is further capped at ``(2 pi / carrier) / 20`` whenever the
    Hamiltonian carries an explicit carrier frequency, so the drive
    oscillation is always resolved.
    """

    method: str = "DOP853"
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = math.inf
    samples: int = 201
    store_states: bool = True

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {sorted(_METHODS)}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.samples < 2:
            raise ValueError("need at least two samples")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")

    def step_limit(self, carrier: float = 0.0) -> float:
        if carrier > 0:
            return min(self.max_step, 2 * math.pi / carrier / STEPS_PER_CARRIER_PERIOD)
        return self.max_step

    def tightened(self, factor: float = 0.5) -> "IntegratorConfig":
        return IntegratorConfig(self.method, self.rtol * factor, self.atol * factor, self.max_step,
                                self.samples, self.store_states)


@dataclass
class Trajectory:
    """Sampled evolution of a batch of states.

    Attributes:
        times: ``(N,)`` strictly increasing sample times.
        populations: ``(N, B, d)`` basis populations.
        states: ``(N, B, d)`` kets or ``(N, B, d, d)`` density matrices, or
            ``None`` when not stored.
        final: ``(B, d)`` or ``(B, d, d)`` state at the last sample.
        step_times: times of accepted solver steps.
        conservation: max over the batch of ``|norm - 1|`` or ``|tr - 1|``
            at each accepted step.
        min_eigenvalue: smallest density-matrix eigenvalue seen at the
            samples (``None`` for kets).
    """

    times: np.ndarray
    populations: np.ndarray
    states: np.ndarray | None
    final: np.ndarray
    step_times: np.ndarray
    conservation: np.ndarray
    space: HilbertSpace | None = None
    kind: str = "ket"
    min_eigenvalue: float | None = None
    n_steps: int = 0

    @property
    def batch(self) -> int:
        return self.populations.shape[1]

    @property
    def max_conservation_error(self) -> float:
        return float(np.max(self.conservation)) if len(self.conservation) else 0.0

    def quantum_states(self, member: int = 0) -> list[QuantumState]:
        if self.states is None or self.space is None:
            raise ValueError("trajectory was run without stored states or a space")
        return [QuantumState(s, self.space, validate=False) for s in self.states[:, member]]

    def final_state(self, member: int = 0) -> QuantumState:
        if self.space is None:
            raise ValueError("trajectory has no Hilbert space attached")
        return QuantumState(self.final[member], self.space, validate=False)

    def to_csv(self, path, member: int = 0, labels: Sequence[str] | None = None,
               header: Sequence[str] = ()) -> None:
        """Write ``t`` and one population column per basis label (``%.12e``)."""
        pops = self.populations[:, member]
        if labels is None:
            labels = ([self.space.label_string(i) for i in range(pops.shape[1])] if self.space is not None
                      else [str(i) for i in range(pops.shape[1])])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"P_{l}" for l in labels])
            for t, row in zip(self.times, pops):
                w.writerow([f"{t:.12e}"] + [f"{p:.12e}" for p in row])


def concatenate(trajs: Sequence[Trajectory]) -> Trajectory:
    """Join consecutive trajectories, dropping each duplicated junction sample.

    Times of later pieces are shifted so the result is strictly increasing.
    """
    times, pops, states, st, cons = [], [], [], [], []
    offset = 0.0
    for k, tr in enumerate(trajs):
        if k:
            offset = times[-1][-1] - tr.times[0]
        sl = slice(1, None) if k else slice(None)
        times.append(tr.times[sl] + offset)
        pops.append(tr.populations[sl])
        if tr.states is not None:
            states.append(tr.states[sl])
        st.append(tr.step_times + offset)
        cons.append(tr.conservation)
    eig = [tr.min_eigenvalue for tr in trajs if tr.min_eigenvalue is not None]
    last = trajs[-1]
    return Trajectory(np.concatenate(times), np.concatenate(pops),
                      np.concatenate(states) if len(states) == len(trajs) else None,
                      last.final, np.concatenate(st), np.concatenate(cons), last.space, last.kind,
                      min(eig) if eig else None, sum(tr.n_steps for tr in trajs))


# ---------------------------------------------------------------------------
# dissipators


class _Dissipator:
    """Sum of ``L rho L^dag - {L^dag L, rho}/2`` with index-mapped monomial jumps."""

    def __init__(self, jumps: Sequence, dim: int):
        mats = [np.asarray(j.matrix if isinstance(j, Operator) else j, dtype=complex) for j in jumps]
        mats = [m for m in mats if np.any(m)]
        self.mono = []
        self.dense = []
        k = np.zeros((dim, dim), dtype=complex)
        for m in mats:
            if m.shape != (dim, dim):
                raise ValueError(f"jump operator shape {m.shape} does not match dim {dim}")
            k += m.conj().T @ m
            rows, cols = np.nonzero(m)
            if len(set(rows)) == len(rows) and len(set(cols)) == len(cols):
                v = m[rows, cols]
                self.mono.append((rows[:, None], rows[None, :], cols[:, None], cols[None, :],
                                  np.outer(v, v.conj())))
            else:
                self.dense.append((m, m.conj().T))
        self.empty = not mats
        if np.allclose(k, np.diag(np.diag(k))):
            kd = np.real(np.diag(k))
            self.k_pair = -0.5 * (kd[:, None] + kd[None, :])
            self.k = None
        else:
            self.k_pair = None
            self.k = k

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        if self.k_pair is not None:
            out = self.k_pair * rho
        else:
            out = -0.5 * (self.k @ rho + rho @ self.k)
        for ra, rb, ca, cb, w in self.mono:
            out[:, ra, rb] += w * rho[:, ca, cb]
        for m, md in self.dense:
            out += m @ rho @ md
        return out


# ---------------------------------------------------------------------------
# propagation


def _as_batch(state, dim: int, dm: bool):
    if isinstance(state, QuantumState):
        arr = state.density_matrix() if dm else state.data
        if not dm and not state.is_ket:
            raise ValueError("Schrodinger propagation needs a ket")
        return np.array(arr, dtype=complex)[None], True
    arr = np.array(state, dtype=complex)
    single = arr.ndim == 1 or (dm and arr.shape == (dim, dim))
    if single:
        arr = arr[None]
    if dm and arr.ndim == 2 and arr.shape[-1] == dim:
        # kets, promoted to projectors
        arr = np.einsum("bi,bj->bij", arr, arr.conj())
    if arr.shape[1:] != ((dim, dim) if dm else (dim,)):
        raise ValueError(f"state shape {arr.shape} does not match dim {dim}")
    return arr, single


def _window(H: TimeDependentHamiltonian, window):
    if window is None:
        window = H.window
    if window is None:
        raise ValueError("no integration window given and the Hamiltonian carries none")
    t0, t1 = (float(w) for w in window)
    if not t1 > t0:
        raise ValueError("window must be increasing")
    return t0, t1


def _run(rhs, y0: np.ndarray, shape: tuple, t0: float, t1: float, cfg: IntegratorConfig, carrier: float,
         conserved, project=None, on_sample=None):
    solver = _METHODS[cfg.method](rhs, t0, y0.ravel(), t1, rtol=cfg.rtol, atol=cfg.atol,
                                  max_step=cfg.step_limit(carrier), vectorized=False)
    samples = np.linspace(t0, t1, cfg.samples)
    out = np.empty((cfg.samples,) + shape, dtype=complex)
    out[0] = y0
    k = 1
    step_times, cons = [], []
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"integration failed at t={solver.t:.6g}: {msg}")
        j = k
        while j < cfg.samples and samples[j] <= solver.t:
            j += 1
        if j > k:
            dense = solver.dense_output()
            vals = dense(samples[k:j]) if j - k > 1 else dense(samples[k])[:, None]
            out[k:j] = vals.T.reshape((j - k,) + shape)
            k = j
        y = solver.y.reshape(shape)
        if project is not None:
            y = project(y)
            solver.y = y.ravel()
            solver.f = rhs(solver.t, solver.y)
        step_times.append(solver.t)
        cons.append(conserved(y))
    if k < cfg.samples:  # final sample exactly at t1
        out[k:] = solver.y.reshape(shape)
    if project is not None:
        out = project(out.reshape((-1,) + shape[1:])).reshape(out.shape)
    return samples, out, np.array(step_times), np.array(cons), len(step_times)


def evolve_schrodinger(H: TimeDependentHamiltonian, psi0, window=None,
                       cfg: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """Solve ``i dpsi/dt = H(t) psi`` for a ket or a ``(B, d)`` batch of kets."""
    d = H.dim
    psi, _ = _as_batch(psi0, d, dm=False)
    norms = np.linalg.norm(psi, axis=1)
    if np.any(np.abs(norms - 1) > 1e-6):
        raise ValueError("initial kets must be normalised")
    t0, t1 = _window(H, window)
    B = psi.shape[0]
    y0 = np.ascontiguousarray(psi.T)  # columns are batch members

    def rhs(t, y):
        return (-1j * (H.matrix(t) @ y.reshape(d, B))).ravel()

    def conserved(y):
        return float(np.max(np.abs(np.linalg.norm(y, axis=0) - 1.0)))

    times, out, st, cons, nst = _run(rhs, y0, (d, B), t0, t1, cfg, H.carrier, conserved)
    states = np.swapaxes(out, 1, 2)  # (N, B, d)
    pops = np.abs(states) ** 2
    return Trajectory(times, pops, states if cfg.store_states else None, states[-1].copy(), st, cons,
                      H.space, "ket", None, nst)


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))


def evolve_lindblad(H: TimeDependentHamiltonian, jumps: Sequence, rho0, window=None,
                    cfg: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """Solve ``drho/dt = -i[H, rho] + sum_L (L rho L^dag - {L^dag L, rho}/2)``.

    ``rho0`` may be a :class:`QuantumState`, a density matrix, a ``(B, d, d)``
    batch, or a ket/``(B, d)`` batch of kets (promoted to projectors).  A
    :class:`PositivityWarning` is issued if a sampled state has an
    eigenvalue below ``-1e-6``; propagation is never clamped.
    """
    d = H.dim
    rho, _ = _as_batch(rho0, d, dm=True)
    tr = np.real(np.trace(rho, axis1=1, axis2=2))
    if np.any(np.abs(tr - 1) > 1e-6):
        raise ValueError("initial density matrices must have unit trace")
    t0, t1 = _window(H, window)
    B = rho.shape[0]
    diss = _Dissipator(jumps, d)
    shape = (B, d, d)

    def rhs(t, y):
        r = y.reshape(shape)
        h = H.matrix(t)
        out = -1j * (h @ r - r @ h)
        if not diss.empty:
            out += diss(r)
        return out.ravel()

    def conserved(r):
        return float(np.max(np.abs(np.real(np.trace(r, axis1=1, axis2=2)) - 1.0)))

    times, out, st, cons, nst = _run(rhs, rho, shape, t0, t1, cfg, H.carrier, conserved, _hermitize)
    lam_min = float(np.min(np.linalg.eigvalsh(out)))
    if lam_min < -POSITIVITY_REPORT_TOL:
        warnings.warn(f"density matrix eigenvalue {lam_min:.3g} below -{POSITIVITY_REPORT_TOL:g}",
                      PositivityWarning, stacklevel=2)
    pops = np.real(np.diagonal(out, axis1=2, axis2=3))
    return Trajectory(times, pops, out if cfg.store_states else None, out[-1].copy(), st, cons,
                      H.space, "dm", lam_min, nst)
