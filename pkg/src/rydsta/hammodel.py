"""Hamiltonians for the anti-blockade transfer steps, and the frames used to dress them.

Three model levels are provided for one protocol step:

* the full register model, with every laser written either as
  ``Omega cos(phi(t))`` couplings (``drive_form="cosine"``) or as
  ``(Omega/2) e^{-i phi(t)}`` raising terms plus their conjugates
  (``drive_form="rotating-wave"``), ``phi = int Delta dt``;
* the effective three-level model on ``{In, R, Out}``, where ``R`` is the
  all-Rydberg state, optionally embedded back into the register;
* the spin-1 adiabatic and dressed frames of that three-level model.

Energies are angular frequencies (rad/s) with hbar = 1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .pulsegen import PulseDesign, ScheduleSingularityError, WindowError
from .qcore import HilbertSpace, Operator, local_operator, tensor_embed

SQRT2 = math.sqrt(2.0)
LARGE_DETUNING_RATIO = 5.0
DRIVE_FORMS = ("cosine", "rotating-wave")


class LargeDetuningWarning(UserWarning):
    """Detuning is not large compared with the drive amplitudes."""


class RabSolveError(ValueError):
    """The anti-blockade quadratic has no positive root."""


# ---------------------------------------------------------------------------
# protocol steps and parameters


@dataclass(frozen=True)
class StepSpec:
    """One transfer step: target population moves from ``in_label`` to ``out_label``."""

    index: int
    in_label: str
    out_label: str

    def __post_init__(self):
        expected = _STEP_TABLE.get(self.index)
        if expected is None:
            raise ValueError(f"unknown step {self.index}; steps are 1, 2, 3")
        if (self.in_label, self.out_label) != expected:
            raise ValueError(f"step {self.index} transfers {expected[0]}->{expected[1]}, "
                             f"not {self.in_label}->{self.out_label}")

    @classmethod
    def get(cls, index: int) -> "StepSpec":
        if index not in _STEP_TABLE:
            raise ValueError(f"unknown step {index}; steps are 1, 2, 3")
        return cls(index, *_STEP_TABLE[index])


_STEP_TABLE = {1: ("1", "m"), 2: ("0", "1"), 3: ("m", "0")}
STEPS = tuple(StepSpec(i, *_STEP_TABLE[i]) for i in (1, 2, 3))


def default_couplings(n: int, total: float) -> dict[tuple[int, int], float]:
    """Spread ``total`` equally over all atom pairs."""
    pairs = list(combinations(range(n), 2))
    return {p: total / len(pairs) for p in pairs}


@dataclass(frozen=True)
class DriveParams:
    """Laser amplitudes, detuning, pair interactions and decay for an ``n``-atom register.

    ``omega_p`` and ``omega_s`` are instantaneous pump/Stokes values; for a
    constant-rms pulse pair of amplitude ``Omega`` the midpoint values are
    ``Omega / sqrt(2)`` each (see :meth:`for_gate`).
    """

    omega_c: float
    omega_p: float
    omega_s: float
    detuning: float
    couplings: Mapping[tuple[int, int], float]
    gamma: float = 0.0
    n: int = 2

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two atoms")
        cpl = {}
        for pair, v in dict(self.couplings).items():
            i, j = sorted(int(a) for a in pair)
            if not (0 <= i < j < self.n):
                raise ValueError(f"coupling pair {pair} invalid for n={self.n}")
            if v < 0:
                raise ValueError(f"coupling V{pair} must be non-negative, got {v}")
            cpl[(i, j)] = cpl.get((i, j), 0.0) + float(v)
        object.__setattr__(self, "couplings", cpl)
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        biggest = max(abs(self.omega_c), abs(self.omega_p), abs(self.omega_s))
        if self.detuning < LARGE_DETUNING_RATIO * biggest:
            warnings.warn(f"detuning {self.detuning:.4g} rad/s is below {LARGE_DETUNING_RATIO}x the "
                          f"largest drive {biggest:.4g} rad/s; the effective model may be inaccurate",
                          LargeDetuningWarning, stacklevel=2)

    @property
    def total_coupling(self) -> float:
        return float(sum(self.couplings.values()))

    @property
    def alpha(self) -> float:
        return self.omega_c / self.detuning

    @classmethod
    def for_gate(cls, n: int, omega: float, detuning: float, omega_c: float | None = None,
                 gamma: float = 0.0, couplings: Mapping | None = None) -> "DriveParams":
        """Parameters with pulse rms ``omega`` and, unless given, interactions meeting the
        anti-blockade condition at ``detuning``."""
        omega_c = omega if omega_c is None else omega_c
        if couplings is None:
            v = rab_interaction(detuning, omega**2, omega_c / detuning, n)
            if v < 0:
                raise RabSolveError("no non-negative interaction satisfies the anti-blockade condition")
            couplings = default_couplings(n, v)
        half = omega / SQRT2
        return cls(omega_c, half, half, detuning, couplings, gamma, n)


def effective_prefactor(n: int, alpha: float) -> float:
    """``n! alpha^(n-1) / 2^n``: effective Rabi frequency per unit pump/Stokes amplitude."""
    return math.factorial(n) * alpha ** (n - 1) / 2**n


def effective_detuning(total_coupling: float, detuning: float, omega_c: float, omega_p, omega_s, n: int):
    """``sum V - n Delta + ((n-1) Omega_c^2 + Omega_p^2 + Omega_s^2) / (3 Delta)``."""
    return (total_coupling - n * detuning
            + ((n - 1) * omega_c**2 + np.square(omega_p) + np.square(omega_s)) / (3.0 * detuning))


@dataclass(frozen=True)
class EffectiveParams:
    """Three-level effective couplings of one step."""

    omega_p: float
    omega_s: float
    delta_eff: float
    alpha: float
    n: int


def effective_params(params: DriveParams) -> EffectiveParams:
    if not params.detuning > 0:
        raise ValueError("detuning must be positive")
    a = params.alpha
    k = effective_prefactor(params.n, a)
    d_eff = effective_detuning(params.total_coupling, params.detuning, params.omega_c,
                               params.omega_p, params.omega_s, params.n)
    return EffectiveParams(k * params.omega_p, k * params.omega_s, float(d_eff), a, params.n)


def rab_coefficient(n: int, alpha: float) -> float:
    """Quadratic coefficient ``3n - (n-1) alpha^2`` of the anti-blockade condition.

    Setting the n-atom effective detuning to zero with ``Omega_c = alpha Delta``
    and multiplying by ``3 Delta`` gives
    ``(3n - (n-1) alpha^2) Delta^2 - 3 sum(V) Delta - (Omega_p^2 + Omega_s^2) = 0``.
    """
    return 3 * n - (n - 1) * alpha**2


def rab_solve(v_total: float, omega_p, omega_s, alpha: float, n: int):
    """Positive root ``Delta`` of the anti-blockade quadratic (vectorised over drives)."""
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    if n < 2:
        raise ValueError("need at least two atoms")
    a = rab_coefficient(n, alpha)
    w2 = np.square(omega_p) + np.square(omega_s)
    b = 3.0 * v_total
    disc = b * b + 4.0 * a * w2
    # (b + sqrt(disc)) / 2a without cancellation when b < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.where(b >= 0, (b + np.sqrt(disc)) / (2 * a), 2 * w2 / (np.sqrt(disc) - b))
    root = np.asarray(root, dtype=float)
    if np.any(~np.isfinite(root)) or np.any(root <= 0):
        raise RabSolveError(f"no positive root for sum V={v_total}, Omega^2={np.max(w2)}")
    return float(root) if root.ndim == 0 else root


def rab_residual(v_total: float, omega_p, omega_s, alpha: float, n: int, detuning):
    """Effective detuning at ``detuning`` with ``Omega_c = alpha * detuning``."""
    return effective_detuning(v_total, detuning, alpha * np.asarray(detuning), omega_p, omega_s, n)


def rab_interaction(detuning: float, omega_sq: float, alpha: float, n: int) -> float:
    """Total interaction ``sum V`` that puts ``detuning`` on the anti-blockade root."""
    return (rab_coefficient(n, alpha) * detuning**2 - omega_sq) / (3.0 * detuning)


# ---------------------------------------------------------------------------
# time-dependent operators


class UniformSpline:
    """Vector cubic spline on a uniform grid with cheap scalar evaluation.

    Coefficients come from :class:`scipy.interpolate.CubicSpline`; evaluation
    locates the interval arithmetically, which matters inside ODE right-hand
    sides called millions of times.
    """

    def __init__(self, t: np.ndarray, values: np.ndarray):
        t = np.asarray(t, dtype=float)
        values = np.asarray(values, dtype=float)
        steps = np.diff(t)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("grid must be uniform")
        self.t0 = float(t[0])
        self.t1 = float(t[-1])
        self.h = float(steps[0])
        self._spline = CubicSpline(t, values, axis=0)
        self._c = np.ascontiguousarray(np.moveaxis(self._spline.c, 0, 1))  # (intervals, 4, channels)
        self._last = len(t) - 2

    def __call__(self, t: float) -> np.ndarray:
        i = int((t - self.t0) / self.h)
        i = 0 if i < 0 else (self._last if i > self._last else i)
        x = t - (self.t0 + i * self.h)
        c = self._c[i]
        return ((c[0] * x + c[1]) * x + c[2]) * x + c[3]

    def many(self, t) -> np.ndarray:
        return self._spline(np.asarray(t, dtype=float))

    def antiderivative(self):
        return self._spline.antiderivative()


@dataclass(frozen=True)
class TimeDependentHamiltonian:
    """``H(t) = static + sum_k c_k(t) A_k`` on ``space``.

    ``coefficients`` maps a time to the vector ``c(t)``; ``window`` is the
    natural integration interval; ``carrier`` is the fastest explicit drive
    frequency (rad/s), used to bound integrator steps.
    """

    space: HilbertSpace | None
    static: np.ndarray
    generators: np.ndarray
    coefficients: Callable[[float], np.ndarray]
    window: tuple[float, float] | None = None
    carrier: float = 0.0
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        st = np.asarray(self.static, dtype=complex)
        gens = np.asarray(self.generators, dtype=complex).reshape((-1,) + st.shape)
        object.__setattr__(self, "static", st)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "_flat", gens.reshape(len(gens), st.size))

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    def matrix(self, t: float) -> np.ndarray:
        if not len(self.generators):
            return self.static
        c = np.asarray(self.coefficients(t))
        return self.static + (c @ self._flat).reshape(self.static.shape)

    def __call__(self, t: float) -> Operator:
        return Operator(self.matrix(t), self.space) if self.space is not None else self.matrix(t)


@dataclass(frozen=True)
class DriveTrack:
    """Physical drive channels of one step sampled on a uniform grid.

    The grid is the design grid.  ``omega_p``/``omega_s`` are physical pump/Stokes amplitudes (the effective
    schedule divided by the n-body prefactor), ``detuning`` is ``Delta(t)``
    and ``phase`` its running integral with ``phase(0) = 0``.
    """

    t: np.ndarray
    omega_p: np.ndarray
    omega_s: np.ndarray
    omega_c: np.ndarray
    detuning: np.ndarray
    phase: np.ndarray
    delta_eff: np.ndarray
    eff_p: np.ndarray
    eff_s: np.ndarray

    @property
    def window(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def spline(self) -> UniformSpline:
        """Channels ``[Omega_c, Omega_p, Omega_s, Delta, phi, Delta_eff, Omega_p', Omega_s']``."""
        return UniformSpline(self.t, np.stack([self.omega_c, self.omega_p, self.omega_s, self.detuning,
                                               self.phase, self.delta_eff, self.eff_p, self.eff_s], axis=1))


def drive_track(design: PulseDesign, params: DriveParams, rab_tracking: bool = True,
                phase_start: float | None = None, amplitude_scale: float = 1.0) -> DriveTrack:
    """Physical drives realising ``design`` as the effective pulse pair.

    With ``rab_tracking`` the detuning follows the instantaneous
    anti-blockade root for the current pump/Stokes amplitudes at fixed
    ``alpha = Omega_c / Delta`` (so ``Omega_c`` tracks ``Delta`` too) and the
    effective detuning stays zero; otherwise ``Delta`` and ``Omega_c`` are
    the constants in ``params``.

    The carrier phase is zero at the pulse centre, or equals
    ``phase_start`` at the window start when given (used to keep the
    carrier continuous across consecutive steps).  ``amplitude_scale``
    multiplies the delivered pump/Stokes amplitudes after the detuning has
    been set from the nominal ones, modelling a pulse-area error.
    """
    sched = design.schedule
    t = sched.t
    eff_p, eff_s = sched.omega_p, sched.omega_s
    alpha = params.alpha
    k = effective_prefactor(params.n, alpha)
    p, s = eff_p / k, eff_s / k
    if rab_tracking:
        delta = rab_solve(params.total_coupling, p, s, alpha, params.n)
        omega_c = alpha * delta
        d_eff = np.zeros_like(t)
    else:
        delta = np.full_like(t, params.detuning)
        omega_c = np.full_like(t, params.omega_c)
        d_eff = effective_detuning(params.total_coupling, delta, omega_c, p, s, params.n)
    if amplitude_scale != 1.0:
        p, s = p * amplitude_scale, s * amplitude_scale
        eff_p, eff_s = eff_p * amplitude_scale, eff_s * amplitude_scale
        if not rab_tracking:
            d_eff = effective_detuning(params.total_coupling, delta, omega_c, p, s, params.n)
    anti = CubicSpline(t, delta).antiderivative()
    phase = anti(t) - anti(0.0) if phase_start is None else anti(t) - anti(t[0]) + phase_start
    return DriveTrack(t, p, s, omega_c, delta, phase, d_eff, eff_p, eff_s)


def _step_couplings(space: HilbertSpace, step: StepSpec):
    """Raising operators ``|r><1|`` summed over controls, ``|r><In|`` and ``|r><Out|`` on the target."""
    n = space.n_atoms
    ctrl = np.zeros((space.dim, space.dim), dtype=complex)
    for i in range(n - 1):
        ctrl += tensor_embed(local_operator(space.atoms[i], [("r", "1", 1.0)]), i, space).matrix
    tgt_levels = space.atoms[n - 1]
    pump = tensor_embed(local_operator(tgt_levels, [("r", step.in_label, 1.0)]), n - 1, space).matrix
    stokes = tensor_embed(local_operator(tgt_levels, [("r", step.out_label, 1.0)]), n - 1, space).matrix
    return ctrl, pump, stokes


def interaction_operator(space: HilbertSpace, couplings: Mapping[tuple[int, int], float]) -> np.ndarray:
    """``sum_{i<j} V_ij |r><r|_i |r><r|_j``."""
    out = np.zeros((space.dim, space.dim), dtype=complex)
    for (i, j), v in couplings.items():
        ri = tensor_embed(local_operator(space.atoms[i], [("r", "r", 1.0)]), i, space).matrix
        rj = tensor_embed(local_operator(space.atoms[j], [("r", "r", 1.0)]), j, space).matrix
        out += v * (ri @ rj)
    return out


def build_full_hamiltonian(params: DriveParams, step: StepSpec, drive_form: str = "cosine",
                           track: DriveTrack | None = None) -> TimeDependentHamiltonian:
    """Register Hamiltonian of one step.

    Without ``track`` the drives are the constants in ``params`` and the
    carrier phase is ``Delta t``.  With a :class:`DriveTrack` the amplitudes,
    detuning and phase follow the track.
    """
    if drive_form not in DRIVE_FORMS:
        raise ValueError(f"drive_form must be one of {DRIVE_FORMS}, got {drive_form!r}")
    if not isinstance(step, StepSpec):
        raise ValueError(f"unknown step {step!r}")
    space = HilbertSpace.register(params.n)
    ctrl, pump, stokes = _step_couplings(space, step)
    static = interaction_operator(space, params.couplings)

    if track is None:
        amps = np.array([params.omega_c, params.omega_p, params.omega_s])
        delta0 = params.detuning
        chan = lambda t: (amps, delta0 * t)
        carrier = params.detuning
        window = None
    else:
        spl = track.spline()
        def chan(t):
            v = spl(t)
            return v[:3], v[4]
        carrier = float(np.max(track.detuning))
        window = track.window

    if drive_form == "cosine":
        gens = np.stack([ctrl + ctrl.conj().T, pump + pump.conj().T, stokes + stokes.conj().T])
        def coeffs(t):
            amps, phi = chan(t)
            return amps * math.cos(phi)
        labels = ("Omega_c cos", "Omega_p cos", "Omega_s cos")
    else:
        gens = np.stack([ctrl, pump, stokes, ctrl.conj().T, pump.conj().T, stokes.conj().T])
        def coeffs(t):
            amps, phi = chan(t)
            e = 0.5 * np.exp(-1j * phi)
            return np.concatenate([amps * e, amps * np.conj(e)])
        labels = ("Omega_c/2 e-", "Omega_p/2 e-", "Omega_s/2 e-", "Omega_c/2 e+", "Omega_p/2 e+", "Omega_s/2 e+")
    return TimeDependentHamiltonian(space, static, gens, coeffs, window, carrier, labels)


def effective_basis(space: HilbertSpace, step: StepSpec) -> tuple[int, int, int]:
    """Register indices of ``|1..1 In>``, ``|r..r>`` and ``|1..1 Out>``."""
    ctrl = ("1",) * (space.n_atoms - 1)
    return (space.index(ctrl + (step.in_label,)), space.index(("r",) * space.n_atoms),
            space.index(ctrl + (step.out_label,)))


def build_effective_hamiltonian(eff: EffectiveParams | DriveTrack, step: StepSpec,
                                space: HilbertSpace | None = None) -> TimeDependentHamiltonian:
    """``Omega_p'|In><R| + Omega_s'|Out><R| + h.c. + Delta_eff |R><R|``.

    ``eff`` is either a constant :class:`EffectiveParams` or a
    :class:`DriveTrack` whose effective channels carry the time dependence.
    The result is 3x3 in the order ``(In, R, Out)``, or embedded in
    ``space`` when one is given.
    """
    if space is None:
        dim, (i_in, i_r, i_out) = 3, (0, 1, 2)
    else:
        dim, (i_in, i_r, i_out) = space.dim, effective_basis(space, step)
    gens = np.zeros((3, dim, dim), dtype=complex)
    gens[0, i_in, i_r] = gens[0, i_r, i_in] = 1.0
    gens[1, i_out, i_r] = gens[1, i_r, i_out] = 1.0
    gens[2, i_r, i_r] = 1.0
    if isinstance(eff, EffectiveParams):
        c = np.array([eff.omega_p, eff.omega_s, eff.delta_eff])
        coeffs = lambda t: c
        window = None
    else:
        spl = UniformSpline(eff.t, np.stack([eff.eff_p, eff.eff_s, eff.delta_eff], axis=1))
        coeffs = spl
        window = eff.window
    return TimeDependentHamiltonian(space, np.zeros((dim, dim), dtype=complex), gens, coeffs, window,
                                    0.0, ("Omega_p'", "Omega_s'", "Delta_eff"))


# ---------------------------------------------------------------------------
# spin-1 frames

MZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
MX = np.array([[0, -1, 0], [-1, 0, 1], [0, 1, 0]], dtype=complex) / SQRT2
MY = np.array([[0, 1j, 0], [-1j, 0, -1j], [0, 1j, 0]], dtype=complex) / SQRT2
for _m in (MZ, MX, MY):
    _m.flags.writeable = False


def spin1_rotation(m: np.ndarray, angle) -> np.ndarray:
    """``exp(i angle M)`` for a spin-1 generator, via ``M^3 = M``.

    Vectorised: ``angle`` of shape ``(N,)`` gives ``(N, 3, 3)``.
    """
    a = np.asarray(angle, dtype=float)[..., None, None]
    return np.eye(3) + 1j * np.sin(a) * m + (np.cos(a) - 1) * (m @ m)


def adiabatic_transform(theta) -> np.ndarray:
    """Real orthogonal map from ``(In, R, Out)`` amplitudes to ``(phi+, phi0, phi-)``.

    ``phi0 = cos(theta)|In> + sin(theta)|Out>`` is the dark state.
    """
    th = np.asarray(theta, dtype=float)
    s, c = np.sin(th), np.cos(th)
    one = np.ones_like(th)
    zero = np.zeros_like(th)
    rows = [
        np.stack([s, -one, -c], axis=-1) / SQRT2,
        np.stack([c, zero, s], axis=-1),
        np.stack([s, one, -c], axis=-1) / SQRT2,
    ]
    return np.stack(rows, axis=-2).astype(complex)


def dressing_frame(mu, xi, eta=0.0) -> np.ndarray:
    """``V = exp(i eta Mz) exp(i mu Mx) exp(i xi Mz)``."""
    mu, xi, eta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, xi, eta)))
    return spin1_rotation(MZ, eta) @ spin1_rotation(MX, mu) @ spin1_rotation(MZ, xi)


@dataclass(frozen=True)
class FrameSet:
    """Spin-1 generators and the adiabatic/dressing frames at given angles."""

    Mx: np.ndarray
    My: np.ndarray
    Mz: np.ndarray
    U_ad: np.ndarray
    V: np.ndarray


def spin1_frames(theta, mu=0.0, xi=0.0, eta=0.0) -> FrameSet:
    return FrameSet(MX, MY, MZ, adiabatic_transform(theta), dressing_frame(mu, xi, eta))


def adiabatic_hamiltonian(rms, theta_dot) -> np.ndarray:
    """``Omega Mz + theta_dot My``: the effective model seen from the adiabatic basis."""
    r = np.asarray(rms, dtype=float)[..., None, None]
    td = np.asarray(theta_dot, dtype=float)[..., None, None]
    return r * MZ + td * MY


def effective_matrix(omega_p, omega_s, delta_eff=0.0) -> np.ndarray:
    """Vectorised 3x3 effective Hamiltonian in ``(In, R, Out)`` order."""
    p, s, d = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (omega_p, omega_s, delta_eff)))
    h = np.zeros(p.shape + (3, 3), dtype=complex)
    h[..., 0, 1] = h[..., 1, 0] = p
    h[..., 2, 1] = h[..., 1, 2] = s
    h[..., 1, 1] = d
    return h


# ---------------------------------------------------------------------------
# dressed frame


@dataclass(frozen=True)
class DressedFrameHamiltonian:
    """Dressed-frame Hamiltonian on a time grid.

    ``matrix`` has shape ``(N, 3, 3)`` in the dressed basis ``(+, 0, -)``;
    ``z_coefficient`` is its ``sigma_z`` weight (the ``(+,+)`` element).
    ``reduced`` is ``(mu_dot sin xi - theta_dot) / (sin mu cos xi) - eta_dot``,
    the closed form valid once the off-diagonal blocks are cancelled (for
    ``xi = eta = 0`` it is ``-theta_dot / sin mu``); ``singular`` marks points
    where it is undefined.
    """

    matrix: np.ndarray
    z_coefficient: np.ndarray
    reduced: np.ndarray
    singular: np.ndarray

    def max_off_diagonal(self) -> float:
        m = self.matrix.copy()
        idx = np.arange(3)
        m[..., idx, idx] = 0
        return float(np.max(np.abs(m)))


def dressed_frame_hamiltonian(mu, xi, eta, mu_dot, xi_dot, eta_dot, g_x, g_z, rms, theta_dot,
                              *, rtol: float = 1e-12) -> DressedFrameHamiltonian:
    """Closed-form ``V (Omega Mz + theta_dot My + g_x Mx + g_z Mz) V^dag + i dV/dt V^dag``.

    All arguments broadcast against each other.  The result is a spin-1
    vector operator, so it is fixed by its ``sigma_z`` weight and the two
    ``|+><0|`` and ``|-><0|`` blocks.
    """
    mu, xi, eta, mud, xid, etad, gx, gz, om, thd = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (mu, xi, eta, mu_dot, xi_dot, eta_dot, g_x, g_z, rms, theta_dot)))
    sm, cm, sx, cx = np.sin(mu), np.cos(mu), np.sin(xi), np.cos(xi)
    z = gx * sm * sx - etad - thd * cx * sm + (om + gz - xid) * cm
    plus0 = np.exp(1j * eta) / SQRT2 * (
        -1j * gx * cm * sx - gx * cx + 1j * sm * (gz - xid + om)
        + thd * (-sx + 1j * cm * cx) + mud)
    minus0 = np.exp(-1j * (eta + xi)) / (2 * SQRT2) * (
        -np.exp(2j * xi) * (cm - 1) * (gx - 1j * thd) + (cm + 1) * (gx + 1j * thd)
        + 2j * np.exp(1j * xi) * (sm * (gz - xid + om) + 1j * mud))
    h = np.zeros(z.shape + (3, 3), dtype=complex)
    h[..., 0, 0] = z
    h[..., 2, 2] = -z
    h[..., 0, 1] = plus0
    h[..., 1, 0] = np.conj(plus0)
    h[..., 2, 1] = minus0
    h[..., 1, 2] = np.conj(minus0)

    # with g_x, g_z cancelling both blocks the z weight collapses to this ratio
    num = mud * sx - thd
    den = sm * cx
    scale = max(float(np.max(np.abs(num), initial=0.0)), 1e-300)
    singular = np.abs(den) < rtol
    if np.any(singular & (np.abs(num) > rtol * scale)):
        warnings.warn("reduced dressed-frame coefficient is singular on part of the grid", RuntimeWarning,
                      stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        reduced = np.where(singular, np.nan, num / np.where(singular, 1.0, den)) - etad
    return DressedFrameHamiltonian(h, z, reduced, singular)


def dressed_frame_hamiltonian_direct(mu, xi, eta, mu_dot, xi_dot, eta_dot, g_x, g_z, rms, theta_dot) -> np.ndarray:
    """Same quantity by explicit conjugation and product-rule ``dV/dt``."""
    mu, xi, eta, mud, xid, etad, gx, gz, om, thd = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (mu, xi, eta, mu_dot, xi_dot, eta_dot, g_x, g_z, rms, theta_dot)))
    ez, ex, exi = spin1_rotation(MZ, eta), spin1_rotation(MX, mu), spin1_rotation(MZ, xi)
    v = ez @ ex @ exi
    col = lambda a: a[..., None, None]
    v_dot = (1j * col(etad) * MZ) @ v + ez @ (1j * col(mud) * MX) @ ex @ exi + v @ (1j * col(xid) * MZ)
    h = col(om + gz) * MZ + col(thd) * MY + col(gx) * MX
    vd = np.conj(np.swapaxes(v, -1, -2))
    return v @ h @ vd + 1j * v_dot @ vd


def control_hamiltonian(theta, g_x, g_z) -> np.ndarray:
    """``U_ad^dag (g_x Mx + g_z Mz) U_ad`` in the ``(In, R, Out)`` basis."""
    u = adiabatic_transform(theta)
    gx = np.asarray(g_x, dtype=float)[..., None, None]
    gz = np.asarray(g_z, dtype=float)[..., None, None]
    return np.conj(np.swapaxes(u, -1, -2)) @ (gx * MX + gz * MZ) @ u


def dressed_evolution_operator(design: PulseDesign, edge_tol: float | None = None) -> np.ndarray:
    """Analytic 3x3 propagator over the design window.

    ``U_ad(t_f)^dag V(t_f)^dag exp(-i int H_new) V(t_i) U_ad(t_i)``, where
    ``H_new`` is diagonal once the corrections are applied; its ``sigma_z``
    weight is integrated with the trapezoid rule.

    Raises:
        WindowError: ``|mu|`` at an edge exceeds ``edge_tol``.
        ScheduleSingularityError: the corrections leave off-diagonal terms.
    """
    a, d, c = design.angles, design.dressed, design.corrections
    tol = design.spec.edge_tol if edge_tol is None else edge_tol
    if d.boundary_error() > tol * (1 + 1e-9):
        raise WindowError(f"dressing angle at the edges is {d.boundary_error():.3g}, above {tol:.3g}")
    hf = dressed_frame_hamiltonian(d.mu, d.xi, d.eta, d.mu_dot, d.xi_dot, d.eta_dot, c.g_x, c.g_z,
                                   a.rms, a.theta_dot)
    scale = float(np.max(np.abs(a.rms)))
    if hf.max_off_diagonal() > 1e-8 * scale:
        raise ScheduleSingularityError("corrections do not diagonalise the dressed-frame Hamiltonian")
    phase = np.trapezoid(hf.z_coefficient, a.t)
    mid = np.diag(np.exp(-1j * phase * np.array([1.0, 0.0, -1.0])))
    def frame(k):
        return dressing_frame(d.mu[k], d.xi[k], d.eta[k]) @ adiabatic_transform(a.theta[k])
    fi, ff = frame(0), frame(-1)
    return np.conj(ff.T) @ mid @ fi


# ---------------------------------------------------------------------------
# dissipation


def lindblad_ops(params: DriveParams, space: HilbertSpace | None = None) -> list[Operator]:
    """Spontaneous emission from ``|r>``: rate ``gamma/2`` into each control ground state and
    ``gamma/3`` into each of the target's ``0, 1, m``."""
    space = HilbertSpace.register(params.n) if space is None else space
    ops = []
    n = space.n_atoms
    for i in range(n):
        targets = ("0", "1", "m") if i == n - 1 else ("0", "1")
        rate = params.gamma / len(targets)
        for lvl in targets:
            local = local_operator(space.atoms[i], [(lvl, "r", math.sqrt(rate))])
            ops.append(tensor_embed(local, i, space))
    return ops
