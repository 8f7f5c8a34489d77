"""Vitanov-style base pulses and their dressed-state corrections.

All frequencies are angular (rad/s) and all times are seconds.  The pulse
pair acts on the effective three-level system ``{In, R, Out}``: the pump
couples ``In`` to the all-Rydberg state ``R``, the Stokes couples ``Out``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import expit

DEFAULT_EDGE_TOL = 1e-4
_EDGE_SLACK = 1e-9


class WindowError(ValueError):
    """Pulse window too narrow for the requested edge tolerance."""


class ScheduleSingularityError(ValueError):
    """A correction formula divides by zero with a nonzero numerator."""


def vitanov_theta(t, tau: float):
    """Logistic mixing angle ``(pi/2) / (1 + exp(-t/tau))``."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return 0.5 * np.pi * expit(np.asarray(t, dtype=float) / tau)


def _simplest_mu_half_width(amplitude: float, tau: float, edge_tol: float) -> float:
    # |mu| = arctan(theta_dot / amplitude) at the edge, theta_dot = (pi/2) s (1-s) / tau
    q = 2.0 * tau * amplitude * math.tan(edge_tol) / math.pi
    if q >= 0.25:
        return 0.0
    one_minus_s = 0.5 * (1.0 - math.sqrt(1.0 - 4.0 * q))
    return tau * math.log((1.0 - one_minus_s) / one_minus_s)


@dataclass(frozen=True)
class VitanovPulseSpec:
    """Constant-amplitude pulse pair with a logistic mixing angle.

    Args:
        amplitude: effective rms Rabi frequency, rad/s.
        tau: smoothness time, s.
        t_start, t_end: truncation window, ``t_start < 0 < t_end``.
        edge_tol: largest allowed distance (rad) of the mixing angle from
            its asymptotes at the window edges.
    """

    amplitude: float
    tau: float
    t_start: float
    t_end: float
    edge_tol: float = DEFAULT_EDGE_TOL

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.t_start < 0 < self.t_end:
            raise WindowError(f"window [{self.t_start}, {self.t_end}] must straddle t = 0")
        if not self.edge_tol > 0:
            raise ValueError("edge_tol must be positive")
        lim = self.edge_tol * (1 + _EDGE_SLACK)
        lo = float(self.theta(self.t_start))
        hi = 0.5 * np.pi - float(self.theta(self.t_end))
        if lo > lim or hi > lim:
            raise WindowError(
                f"window too narrow for tau={self.tau:.4g}: edge angles {lo:.3g}, {hi:.3g} rad "
                f"exceed edge_tol={self.edge_tol:.3g}"
            )

    @classmethod
    def symmetric(cls, amplitude: float, tau: float, edge_tol: float = DEFAULT_EDGE_TOL,
                  dressing_aware: bool = True) -> "VitanovPulseSpec":
        """Smallest symmetric window meeting ``edge_tol``.

        The mixing-angle condition gives ``t_f = tau * ln(pi/(2 edge_tol) - 1)``.
        With ``dressing_aware`` the window is widened, if needed, until the
        simplest dressing angle ``|mu| = arctan(theta_dot/amplitude)`` is also
        within ``edge_tol`` at both edges, so the dressing frame is the identity
        there.
        """
        half = tau * math.log(math.pi / (2.0 * edge_tol) - 1.0)
        if dressing_aware:
            half = max(half, _simplest_mu_half_width(amplitude, tau, edge_tol))
        return cls(amplitude, tau, -half, half, edge_tol)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def grid(self, samples: int = 2001) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, samples)

    def theta(self, t):
        return vitanov_theta(t, self.tau)

    def theta_dot(self, t):
        s = expit(np.asarray(t, dtype=float) / self.tau)
        return 0.5 * np.pi * s * (1 - s) / self.tau

    def theta_ddot(self, t):
        s = expit(np.asarray(t, dtype=float) / self.tau)
        return 0.5 * np.pi * s * (1 - s) * (1 - 2 * s) / self.tau**2


def base_pulses(t, spec: VitanovPulseSpec):
    """Pump and Stokes envelopes ``(-A sin theta, A cos theta)``."""
    th = spec.theta(t)
    return -spec.amplitude * np.sin(th), spec.amplitude * np.cos(th)


@dataclass(frozen=True)
class AdiabaticAngles:
    """Mixing angle and rms Rabi frequency sampled on a time grid.

    ``theta_ddot`` and ``rms_dot`` are present when closed forms are known;
    derived quantities then use them instead of finite differences.
    """

    t: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    rms: np.ndarray
    theta_ddot: np.ndarray | None = None
    rms_dot: np.ndarray | None = None

    @classmethod
    def from_spec(cls, spec: VitanovPulseSpec, t: np.ndarray | None = None) -> "AdiabaticAngles":
        t = spec.grid() if t is None else np.asarray(t, dtype=float)
        return cls(t, spec.theta(t), spec.theta_dot(t), np.full_like(t, spec.amplitude),
                   spec.theta_ddot(t), np.zeros_like(t))

    @classmethod
    def from_pulses(cls, t, omega_p, omega_s) -> "AdiabaticAngles":
        """Angles of arbitrary sampled pulses; derivatives by centred differences."""
        t = np.asarray(t, dtype=float)
        p = np.asarray(omega_p, dtype=float)
        s = np.asarray(omega_s, dtype=float)
        theta = np.unwrap(np.arctan2(-p, s))
        rms = np.hypot(p, s)
        return cls(t, theta, np.gradient(theta, t, edge_order=2), rms)


@dataclass(frozen=True)
class DressedAngles:
    """Euler angles of the dressing frame and their time derivatives."""

    t: np.ndarray
    mu: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    mu_dot: np.ndarray
    xi_dot: np.ndarray
    eta_dot: np.ndarray

    def boundary_error(self) -> float:
        return float(max(abs(self.mu[0]), abs(self.mu[-1])))


def dressed_angles(angles: AdiabaticAngles, choice: str = "simplest", *, mu=None, xi=None, eta=None,
                   boundary_tol: float | None = DEFAULT_EDGE_TOL) -> DressedAngles:
    """Dressing-frame angles for ``choice``.

    ``"simplest"`` sets ``xi = eta = 0`` and ``mu = -arctan(theta_dot/rms)``.
    ``"custom"`` takes ``mu`` and ``xi`` (and optionally ``eta``) sampled on
    ``angles.t``; their derivatives come from centred differences.
    ``"none"`` is the identity frame (undressed, adiabatic following).

    Raises:
        WindowError: if ``|mu|`` at either edge exceeds ``boundary_tol``.
    """
    t = angles.t
    zeros = np.zeros_like(t)
    if choice == "simplest":
        x = angles.theta_dot / angles.rms
        mu_arr = -np.arctan(x)
        if angles.theta_ddot is not None and angles.rms_dot is not None:
            num = angles.theta_ddot * angles.rms - angles.theta_dot * angles.rms_dot
            mu_dot = -num / (angles.rms**2 + angles.theta_dot**2)
        else:
            mu_dot = np.gradient(mu_arr, t, edge_order=2)
        out = DressedAngles(t, mu_arr, zeros, zeros, mu_dot, zeros, zeros)
    elif choice == "custom":
        if mu is None or xi is None:
            raise ValueError("custom dressing needs mu and xi samples")
        mu_arr = np.asarray(mu, dtype=float)
        xi_arr = np.asarray(xi, dtype=float)
        eta_arr = zeros if eta is None else np.asarray(eta, dtype=float)
        grad = lambda a: np.gradient(a, t, edge_order=2)
        out = DressedAngles(t, mu_arr, xi_arr, eta_arr, grad(mu_arr), grad(xi_arr), grad(eta_arr))
    elif choice == "none":
        out = DressedAngles(t, zeros, zeros, zeros, zeros, zeros, zeros)
    else:
        raise ValueError(f"unknown dressing choice {choice!r}")
    if boundary_tol is not None and out.boundary_error() > boundary_tol * (1 + _EDGE_SLACK):
        raise WindowError(
            f"dressing angle at the window edge is {out.boundary_error():.3g} rad, "
            f"above {boundary_tol:.3g}; widen the window"
        )
    return out


@dataclass(frozen=True)
class ControlCorrections:
    """Extra drive components ``g_x`` (dark-Rydberg) and ``g_z`` (amplitude)."""

    t: np.ndarray
    g_x: np.ndarray
    g_z: np.ndarray
    indeterminate: np.ndarray = field(repr=False, default=None)


def control_corrections(angles: AdiabaticAngles, dressed: DressedAngles, *, rtol: float = 1e-12) -> ControlCorrections:
    """Corrections that cancel every off-diagonal term of the dressed-frame Hamiltonian.

    Uses the general expressions for any ``(mu, xi)``; for the simplest
    choice they reduce to ``g_x = mu_dot`` and ``g_z = 0``.  Where ``tan mu``
    and the numerator of the ``g_z`` fraction both vanish (a static
    schedule) the correction is indeterminate and set to zero.

    Raises:
        ScheduleSingularityError: ``tan mu = 0`` with a nonzero numerator.
    """
    mu, xi = dressed.mu, dressed.xi
    th_dot = angles.theta_dot
    cos_xi = np.cos(xi)
    if np.any(np.abs(cos_xi) < rtol):
        raise ScheduleSingularityError("cos(xi) vanishes on the grid")
    g_x = dressed.mu_dot / cos_xi - th_dot * np.tan(xi)

    num = dressed.mu_dot * np.sin(xi) - th_dot
    den = np.tan(mu) * cos_xi
    scale = max(float(np.max(np.abs(th_dot))), float(np.max(np.abs(dressed.mu_dot))), 1e-300)
    tiny_den = np.abs(den) < rtol
    tiny_num = np.abs(num) <= rtol * scale
    if np.any(tiny_den & ~tiny_num):
        bad = angles.t[tiny_den & ~tiny_num][0]
        raise ScheduleSingularityError(f"tan(mu) vanishes at t={bad:.6g} with a nonzero numerator")
    indeterminate = tiny_den & tiny_num
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(indeterminate, 0.0, num / np.where(indeterminate, 1.0, den))
    g_z = np.where(indeterminate, 0.0, -angles.rms + dressed.xi_dot + frac)
    return ControlCorrections(angles.t, g_x, g_z, indeterminate)


@dataclass(frozen=True)
class DressedSchedule:
    """Corrected mixing angle and amplitude, and the drives they imply."""

    t: np.ndarray
    theta: np.ndarray
    rms: np.ndarray
    omega_p: np.ndarray
    omega_s: np.ndarray
    base_theta: np.ndarray
    base_rms: np.ndarray
    g_x: np.ndarray
    g_z: np.ndarray
    flagged: np.ndarray = field(repr=False, default=None)

    def interpolant(self) -> Callable[[float], np.ndarray]:
        """Cubic-spline evaluator ``t -> [omega_p(t), omega_s(t)]``."""
        return CubicSpline(self.t, np.stack([self.omega_p, self.omega_s], axis=1))

    @property
    def window(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])


def dressed_schedule(spec: VitanovPulseSpec, corr: ControlCorrections) -> DressedSchedule:
    """Rewrite the base pulse pair so that it carries the corrections.

    ``theta_new = theta - arctan(g_x / (A + g_z))`` and
    ``rms_new = sqrt((A + g_z)^2 + g_x^2)``; the arctangent is evaluated
    quadrant-aware and unwrapped so the angle stays continuous.
    """
    t = corr.t
    if not (np.all(np.isfinite(corr.g_x)) and np.all(np.isfinite(corr.g_z))):
        raise ScheduleSingularityError("corrections are not finite on the window")
    base_theta = spec.theta(t)
    along = spec.amplitude + corr.g_z
    flagged = (along == 0) & (corr.g_x == 0)
    tilt = np.arctan2(corr.g_x, along)
    if np.any(flagged):
        # hold the last defined tilt across undefined points
        idx = np.where(~flagged, np.arange(len(t)), 0)
        np.maximum.accumulate(idx, out=idx)
        tilt = tilt[idx]
    tilt = np.unwrap(tilt)
    theta = base_theta - tilt
    rms = np.hypot(along, corr.g_x)
    return DressedSchedule(t, theta, rms, -rms * np.sin(theta), rms * np.cos(theta),
                           base_theta, np.full_like(t, spec.amplitude), corr.g_x, corr.g_z, flagged)


def predicted_populations(angles: AdiabaticAngles, dressed: DressedAngles, t=None):
    """Populations ``(P_In, P_R, P_Out)`` of a state riding the dressed dark state."""
    th, mu, xi = angles.theta, dressed.mu, dressed.xi
    if t is not None:
        th = np.interp(t, angles.t, th)
        mu = np.interp(t, dressed.t, mu)
        xi = np.interp(t, dressed.t, xi)
    p_in = (np.cos(th) * np.cos(mu) + np.sin(th) * np.sin(mu) * np.sin(xi)) ** 2
    p_r = np.sin(mu) ** 2 * np.cos(xi) ** 2
    p_out = (np.sin(th) * np.cos(mu) - np.cos(th) * np.sin(mu) * np.sin(xi)) ** 2
    return p_in, p_r, p_out


@dataclass(frozen=True)
class PulseDesign:
    """Everything derived from one base pulse and one dressing choice."""

    spec: VitanovPulseSpec
    angles: AdiabaticAngles
    dressed: DressedAngles
    corrections: ControlCorrections
    schedule: DressedSchedule


def design_pulse(spec: VitanovPulseSpec, dressing: str = "simplest", samples: int = 4001) -> PulseDesign:
    """Sample ``spec`` and build the dressed (or undressed, ``dressing="none"``) schedule."""
    angles = AdiabaticAngles.from_spec(spec, spec.grid(samples))
    tol = spec.edge_tol if dressing == "simplest" else None
    dressed = dressed_angles(angles, dressing, boundary_tol=tol)
    if dressing == "none":
        # plain adiabatic pulses: nothing to cancel, and the general formula is 0/0 at mu = 0
        z = np.zeros_like(angles.t)
        corr = ControlCorrections(angles.t, z, z.copy(), np.ones_like(z, dtype=bool))
    else:
        corr = control_corrections(angles, dressed)
    return PulseDesign(spec, angles, dressed, corr, dressed_schedule(spec, corr))
