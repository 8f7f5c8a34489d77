"""Dressed-state shortcut gates on Rydberg anti-blockade transfers.

Modules:
    qcore: Hilbert spaces, operators, states and fidelities.
    pulsegen: Vitanov pulses, dressing frames and corrected schedules.
    hammodel: full and effective Hamiltonians, anti-blockade solver, spin-1 frames.
    dynamo: batched Schrodinger and Lindblad propagation.
    gateproto: three-step controlled gates, truth tables and average fidelity.
    scenario, cli, reporting: configuration files and the command-line runner.
"""
from .gateproto import GateProtocol, GateReport, gate_protocol, simulate_gate
from .hammodel import DriveParams, rab_solve
from .pulsegen import VitanovPulseSpec, design_pulse
from .qcore import HilbertSpace, QuantumState, uhlmann_fidelity

__all__ = ["DriveParams", "GateProtocol", "GateReport", "HilbertSpace", "QuantumState", "VitanovPulseSpec",
           "design_pulse", "gate_protocol", "rab_solve", "simulate_gate", "uhlmann_fidelity"]
__version__ = "0.1.0"
