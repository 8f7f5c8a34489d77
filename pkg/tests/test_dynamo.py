import math

import numpy as np
import pytest

from rydsta.dynamo import (IntegratorConfig, PositivityWarning, Trajectory, concatenate,
                           evolve_lindblad, evolve_schrodinger)
from rydsta.hammodel import (STEPS, DriveParams, TimeDependentHamiltonian, build_effective_hamiltonian, drive_track,
                             effective_prefactor)
from rydsta.pulsegen import VitanovPulseSpec, design_pulse
from rydsta.qcore import HilbertSpace, QuantumState

OMEGA = 2 * math.pi * 30e6
SX = np.array([[0, 1], [1, 0]], dtype=complex)


def static_h(m, window=(0.0, 1.0), carrier=0.0):
    m = np.asarray(m, dtype=complex)
    return TimeDependentHamiltonian(None, m, np.zeros((0,) + m.shape), lambda t: np.zeros(0), window, carrier)


def cnot_step1_effective():
    params = DriveParams.for_gate(2, OMEGA, 15 * OMEGA)
    amp = effective_prefactor(2, params.alpha) * OMEGA
    spec = VitanovPulseSpec.symmetric(amp, 0.2 / amp)
    design = design_pulse(spec, samples=8001)
    return build_effective_hamiltonian(drive_track(design, params), STEPS[0]), design


def test_config_validation_and_step_limit():
    with pytest.raises(ValueError):
        IntegratorConfig(method="Euler")
    with pytest.raises(ValueError):
        IntegratorConfig(rtol=0)
    with pytest.raises(ValueError):
        IntegratorConfig(samples=1)
    cfg = IntegratorConfig()
    assert cfg.step_limit() == math.inf
    assert cfg.step_limit(15 * OMEGA) == pytest.approx(2 * math.pi / (15 * OMEGA) / 20)
    assert cfg.tightened().rtol == 0.5 * cfg.rtol


def test_zero_hamiltonian_keeps_state():
    psi = np.array([0.6, 0.8j])
    tr = evolve_schrodinger(static_h(np.zeros((2, 2))), psi)
    assert np.allclose(tr.states[:, 0], psi, atol=1e-14)
    assert np.all(np.diff(tr.times) > 0)


def test_rabi_closed_form():
    om = 2 * math.pi * 1e6
    tr = evolve_schrodinger(static_h(0.5 * om * SX, (0.0, 2e-6)), np.array([1.0, 0.0]),
                            cfg=IntegratorConfig(samples=401))
    expected = np.sin(om * tr.times / 2) ** 2
    assert np.max(np.abs(tr.populations[:, 0, 1] - expected)) < 1e-7
    assert tr.max_conservation_error < 10 * IntegratorConfig().rtol


def test_exponential_decay_closed_form():
    g = 2 * math.pi * 1e5
    jump = np.sqrt(g) * np.array([[0, 1], [0, 0]], dtype=complex)  # |0><r| with basis (0, r)
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    tr = evolve_lindblad(static_h(np.zeros((2, 2)), (0.0, 2e-5)), [jump], rho0)
    assert np.max(np.abs(tr.populations[:, 0, 1] - np.exp(-g * tr.times))) < 1e-8
    assert tr.max_conservation_error < 1e-7


def test_lindblad_without_jumps_matches_schrodinger():
    om = 2 * math.pi * 1e6
    h = static_h(np.array([[0.3, 0.5, 0], [0.5, -0.2, 0.7], [0, 0.7, 0.1]]) * om, (0.0, 1e-6))
    psi = np.array([1.0, 0.0, 0.0], dtype=complex)
    a = evolve_schrodinger(h, psi)
    b = evolve_lindblad(h, [], psi)
    assert np.max(np.abs(a.populations - b.populations)) < 1e-7
    assert np.max(np.abs(np.outer(a.final[0], a.final[0].conj()) - b.final[0])) < 1e-7


def test_batch_matches_individual_runs():
    h, _ = cnot_step1_effective()
    kets = np.eye(3, dtype=complex)
    batch = evolve_schrodinger(h, kets)
    for k in range(3):
        one = evolve_schrodinger(h, kets[k])
        assert np.max(np.abs(one.final[0] - batch.final[k])) < 1e-7


def test_effective_transfer_completes():
    h, _ = cnot_step1_effective()
    tr = evolve_schrodinger(h, np.array([1.0, 0, 0], dtype=complex))
    assert tr.populations[-1, 0, 2] > 0.999
    assert tr.max_conservation_error < 1e-7


def test_halving_tolerances_converges():
    h, _ = cnot_step1_effective()
    psi = np.array([1.0, 0, 0], dtype=complex)
    cfg = IntegratorConfig()
    a = evolve_schrodinger(h, psi, cfg=cfg)
    b = evolve_schrodinger(h, psi, cfg=cfg.tightened(0.5))
    assert np.max(np.abs(a.populations[-1] - b.populations[-1])) < 1e-6


def test_conservation_logged_per_step():
    h, _ = cnot_step1_effective()
    cfg = IntegratorConfig()
    tr = evolve_lindblad(h, [], np.array([1.0, 0, 0], dtype=complex), cfg=cfg)
    assert len(tr.conservation) == tr.n_steps
    assert tr.max_conservation_error < 10 * cfg.rtol


def test_carrier_bounds_step_size():
    om = 2 * math.pi * 1e6
    h = static_h(0.5 * om * SX, (0.0, 1e-6), carrier=2 * math.pi * 1e8)
    tr = evolve_schrodinger(h, np.array([1.0, 0.0]))
    assert np.max(np.diff(tr.step_times)) <= (1e-8 / 20) * (1 + 1e-9)


def test_input_validation():
    h = static_h(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        evolve_schrodinger(h, np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        evolve_lindblad(h, [], np.eye(2))


def test_no_window_raises():
    h = static_h(np.zeros((2, 2)), window=None)
    with pytest.raises(ValueError):
        evolve_schrodinger(h, np.array([1.0, 0.0]))
    tr = evolve_schrodinger(h, np.array([1.0, 0.0]), window=(0.0, 1.0))
    assert tr.times[-1] == 1.0


def test_positivity_warning_is_reported_not_clamped():
    rho0 = np.diag([1.01, -0.01]).astype(complex)
    with pytest.warns(PositivityWarning):
        tr = evolve_lindblad(static_h(np.zeros((2, 2))), [], rho0)
    assert tr.final[0, 1, 1].real == pytest.approx(-0.01, abs=1e-12)
    assert tr.min_eigenvalue == pytest.approx(-0.01, abs=1e-12)


def test_trajectory_helpers_and_csv(tmp_path):
    sp = HilbertSpace.register(2)
    h = TimeDependentHamiltonian(sp, np.zeros((12, 12), dtype=complex), np.zeros((0, 12, 12)),
                                 lambda t: np.zeros(0), (0.0, 1.0))
    psi = QuantumState.basis_state(sp, "11")
    tr = evolve_schrodinger(h, psi.data, cfg=IntegratorConfig(samples=5))
    assert tr.batch == 1
    assert tr.final_state().space == sp
    assert len(tr.quantum_states()) == 5
    path = tmp_path / "traj.csv"
    tr.to_csv(path, header=["scenario = test"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# scenario = test"
    assert lines[1].split(",")[0] == "t" and "P_11" in lines[1]
    assert lines[2].split(",")[0] == "0.000000000000e+00"
    both = concatenate([tr, tr])
    assert len(both.times) == 9
    assert np.all(np.diff(both.times) > 0)
    assert isinstance(both, Trajectory)


def test_sampled_states_on_requested_grid():
    tr = evolve_schrodinger(static_h(np.zeros((2, 2)), (0.0, 2.0)), np.array([1.0, 0.0]),
                            cfg=IntegratorConfig(samples=11))
    assert np.allclose(tr.times, np.linspace(0.0, 2.0, 11))
