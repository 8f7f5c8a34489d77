"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The two gate-fidelity criteria run the bundled ``cnot`` and ``toffoli``
scenarios with the full cosine-drive model and decay; the Toffoli run is
the long one.
"""
import math
import time

import numpy as np
import pytest

from rydsta.dynamo import IntegratorConfig, evolve_lindblad, evolve_schrodinger
from rydsta.gateproto import adiabatic_reference_run, run_step, simulate_gate
from rydsta.hammodel import (MX, MY, MZ, STEPS, DriveParams, TimeDependentHamiltonian,
                             build_effective_hamiltonian, control_hamiltonian, dressed_evolution_operator,
                             dressed_frame_hamiltonian, drive_track, effective_detuning, effective_prefactor,
                             rab_solve, spin1_frames)
from rydsta.pulsegen import (AdiabaticAngles, VitanovPulseSpec, control_corrections, design_pulse, dressed_angles,
                             predicted_populations)
from rydsta.qcore import QuantumState
from rydsta.scenario import bundled_scenarios, load_scenario

OMEGA = 2 * math.pi * 30e6


@pytest.fixture()
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {title}: {detail}")
        return ok
    return emit


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def cnot_protocol(model="full-cosine", dissipation=False):
    sc = load_scenario(bundled_scenarios()["cnot"])
    return sc.protocol().with_(model=model, dissipation=dissipation)


@pytest.fixture(scope="module")
def step1_runs():
    """Closed-system step-1 runs of the input ``|11>`` for every model, on one time grid."""
    out = {}
    for model in ("effective", "full-rotating-wave", "full-cosine"):
        p = cnot_protocol(model)
        sp = p.space
        _, traj = run_step(p, 1, QuantumState.basis_state(sp, "11"))
        pops = traj.populations[:, 0]
        out[model] = (traj.times, pops[:, sp.index("11")], pops[:, sp.index("1m")])
    return out


def test_criterion_1_cnot_fidelity(verdict):
    sc = load_scenario(bundled_scenarios()["cnot"])
    rep, secs = timed(simulate_gate, sc.protocol(), grid=sc.theta_grid)
    f = rep.average_fidelity
    ok = 0.985 <= f <= 0.998 and secs <= 300
    assert verdict(1, "C-NOT average fidelity in [0.985, 0.998]", ok, f"F_av = {f:.5f}, runtime {secs:.0f} s")


def test_criterion_2_toffoli_fidelity(verdict):
    sc = load_scenario(bundled_scenarios()["toffoli"])
    rep, secs = timed(simulate_gate, sc.protocol(), grid=sc.theta_grid)
    f = rep.average_fidelity
    correct = float(np.min(rep.correct_entries()))
    ok = 0.945 <= f <= 0.97 and correct > 0.9 and secs <= 1800
    assert verdict(2, "Toffoli average fidelity in [0.945, 0.97], correct entries > 0.9", ok,
                   f"F_av = {f:.5f}, min correct entry {correct:.4f}, runtime {secs:.0f} s")


def test_criterion_3_dressing_cancellation(verdict):
    amp = OMEGA / 30
    spec = VitanovPulseSpec.symmetric(amp, 0.2 / amp)
    des = design_pulse(spec, samples=1000)
    a, d, c = des.angles, des.dressed, des.corrections
    worst = dressed_frame_hamiltonian(d.mu, d.xi, d.eta, d.mu_dot, d.xi_dot, d.eta_dot, c.g_x, c.g_z, a.rms,
                                      a.theta_dot).max_off_diagonal()
    rng = np.random.default_rng(20240601)
    s = (a.t - a.t[0]) / (a.t[-1] - a.t[0])
    for _ in range(20):
        cm, cx = rng.normal(scale=0.2, size=3), rng.normal(scale=0.2, size=3)
        mu = 0.6 + sum(cm[k] * np.sin((k + 1) * np.pi * s) for k in range(3))
        xi = sum(cx[k] * np.cos((k + 1) * np.pi * s) for k in range(3))
        dr = dressed_angles(AdiabaticAngles.from_spec(spec, a.t), "custom", mu=mu, xi=xi, boundary_tol=None)
        cr = control_corrections(a, dr)
        h = dressed_frame_hamiltonian(dr.mu, dr.xi, dr.eta, dr.mu_dot, dr.xi_dot, dr.eta_dot, cr.g_x, cr.g_z,
                                      a.rms, a.theta_dot)
        worst = max(worst, h.max_off_diagonal())
    ok = worst < 1e-10 * amp
    assert verdict(3, "dressed-frame off-diagonals < 1e-10 Omega_eff", ok,
                   f"worst {worst / amp:.2e} Omega_eff over simplest + 20 random schedules")


def test_criterion_4_rab_residual(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for n in (2, 3):
        for _ in range(100):
            v = 2 * math.pi * rng.uniform(0.1, 5.0) * 1e9
            op, os_ = 2 * math.pi * rng.uniform(1, 100, size=2) * 1e6
            alpha = rng.uniform(0, 0.3)
            d = rab_solve(v, op, os_, alpha, n)
            resid = effective_detuning(v, d, alpha * d, op, os_, n)
            worst = max(worst, abs(resid) / d)
    v2 = 2 * math.pi * 2e9
    vs = 2 * math.pi * np.array([3.1e9, 4.7e9, 5.3e9])
    lim2 = abs(rab_solve(v2, 0.0, 0.0, 0.0, 2) / (v2 / 2) - 1)
    lim3 = abs(rab_solve(vs.sum(), 0.0, 0.0, 0.0, 3) / (vs.sum() / 3) - 1)
    ok = worst < 1e-9 and lim2 < 1e-12 and lim3 < 1e-12
    assert verdict(4, "RAB back-substitution and trivial limits", ok,
                   f"worst |Delta_eff|/Delta {worst:.1e}, limit errors {lim2:.1e}, {lim3:.1e}")


def test_criterion_5_model_agreement(verdict, step1_runs):
    te, in_e, out_e = step1_runs["effective"]
    tr, in_r, out_r = step1_runs["full-rotating-wave"]
    _, in_c, out_c = step1_runs["full-cosine"]
    assert np.allclose(te, tr)
    eff_rw = max(np.max(np.abs(in_e - in_r)), np.max(np.abs(out_e - out_r)))
    rw_cos = max(abs(in_r[-1] - in_c[-1]), abs(out_r[-1] - out_c[-1]))
    eff_cos = max(np.max(np.abs(in_e - in_c)), np.max(np.abs(out_e - out_c)))
    ok = eff_rw < 0.05 and rw_cos < 0.01
    assert verdict(5, "effective vs rotating-wave curves < 0.05, rotating-wave vs cosine final < 0.01", ok,
                   f"effective-RW {eff_rw:.4f}, RW-cosine final {rw_cos:.4f} (effective-cosine {eff_cos:.4f})")


def test_effective_agrees_with_cosine_model(step1_runs):
    _, in_e, out_e = step1_runs["effective"]
    _, in_c, out_c = step1_runs["full-cosine"]
    assert max(np.max(np.abs(in_e - in_c)), np.max(np.abs(out_e - out_c))) < 0.05


def test_criterion_6_analytic_path(verdict):
    p = cnot_protocol("effective")
    sp = p.space
    _, traj = run_step(p, 1, QuantumState.basis_state(sp, "11"))
    pops = traj.populations[-1, 0]
    sim = np.array([pops[sp.index("11")], pops[sp.index("rr")], pops[sp.index("1m")]])
    pred = np.array([x[-1] for x in predicted_populations(p.design.angles, p.design.dressed)])
    pop_err = float(np.max(np.abs(sim - pred)))

    params = DriveParams.for_gate(2, OMEGA, 15 * OMEGA)
    amp = effective_prefactor(2, params.alpha) * OMEGA
    des = design_pulse(VitanovPulseSpec.symmetric(amp, 0.2 / amp), samples=8001)
    h = build_effective_hamiltonian(drive_track(des, params), STEPS[0])
    num = evolve_schrodinger(h, np.eye(3, dtype=complex), cfg=IntegratorConfig(rtol=1e-12, atol=1e-14)).final.T
    amp_err = abs(num[2, 0] - dressed_evolution_operator(des)[2, 0])
    ok = pop_err < 1e-3 and amp_err < 1e-6
    assert verdict(6, "endpoint populations within 1e-3, transfer amplitude within 1e-6", ok,
                   f"population error {pop_err:.1e}, amplitude error {amp_err:.1e}")


def test_criterion_7_dressed_vs_adiabatic(verdict, step1_runs):
    dressed_out = step1_runs["full-cosine"][2][-1]
    plain = cnot_protocol("full-cosine").with_(dressing="none")
    sp = plain.space
    final, _ = run_step(plain, 1, QuantumState.basis_state(sp, "11"))
    undressed_out = final.populations()[sp.index("1m")]
    slow, _ = adiabatic_reference_run(cnot_protocol("full-cosine"), tau_units=3.0)
    slow_out = slow.populations()[sp.index("1m")]
    margin = dressed_out - undressed_out
    ok = margin > 0 and slow_out > 0.98
    assert verdict(7, "dressed beats undressed at tau = 0.2, undressed completes at tau = 3", ok,
                   f"P_Out dressed {dressed_out:.4f} vs undressed {undressed_out:.4f}, tau = 3 P_Out {slow_out:.4f}")


def test_criterion_8_property_suites(verdict):
    checks = {}
    comm = lambda a, b: a @ b - b @ a
    checks["spin-1 commutators"] = max(np.max(np.abs(comm(MX, MY) - 1j * MZ)), np.max(np.abs(comm(MY, MZ) - 1j * MX)),
                                       np.max(np.abs(comm(MZ, MX) - 1j * MY))) < 1e-12
    rng = np.random.default_rng(3)
    ang = rng.uniform(-5, 5, size=(4, 200))
    f = spin1_frames(*ang)
    eye = np.eye(3)
    checks["frame unitarity"] = all(np.max(np.abs(u @ np.conj(np.swapaxes(u, -1, -2)) - eye)) < 1e-12
                                    for u in (f.U_ad, f.V))
    hc = control_hamiltonian(ang[0], ang[1], ang[2])
    checks["control term never couples In-Out"] = np.max(np.abs(hc[:, 0, 2])) < 1e-15

    def static(m, window):
        m = np.asarray(m, dtype=complex)
        return TimeDependentHamiltonian(None, m, np.zeros((0,) + m.shape), lambda t: np.zeros(0), window)

    sx = np.array([[0, 1], [1, 0]])
    om = 2 * math.pi * 1e6
    rabi = evolve_schrodinger(static(0.5 * om * sx, (0.0, 2e-6)), np.array([1.0, 0.0]),
                              cfg=IntegratorConfig(samples=401))
    checks["Rabi closed form"] = np.max(np.abs(rabi.populations[:, 0, 1] - np.sin(om * rabi.times / 2) ** 2)) < 1e-7
    g = 2 * math.pi * 1e5
    decay = evolve_lindblad(static(np.zeros((2, 2)), (0.0, 2e-5)), [math.sqrt(g) * np.array([[0, 1], [0, 0]])],
                            np.diag([0.0, 1.0]).astype(complex))
    checks["exponential decay closed form"] = np.max(np.abs(decay.populations[:, 0, 1] - np.exp(-g * decay.times))) < 1e-8
    p = cnot_protocol("effective", dissipation=True).with_(params=DriveParams.for_gate(2, OMEGA, 15 * OMEGA,
                                                                                        gamma=2 * math.pi * 1e5))
    _, traj = run_step(p, 1, QuantumState.basis_state(p.space, "11"))
    checks["Lindblad trace drift < 1e-7"] = traj.max_conservation_error < 1e-7
    failed = [k for k, v in checks.items() if not v]
    assert verdict(8, "property suites", not failed, "all pass" if not failed else f"failed: {', '.join(failed)}")
