"""Simulation and design of Rydberg-blockade CZ / C-PHASE gates driven by
smoothly modulated, off-resonant two-photon pulses."""

from .gatemetrics import CZ, GateReport, average_fidelity, best_local_correction, simulate_gate
from .model import PhysicalParams
from .waveforms import ModulationScheme, SchemeKind, WaveformSpec

__all__ = ["CZ", "GateReport", "ModulationScheme", "PhysicalParams", "SchemeKind", "WaveformSpec",
           "average_fidelity", "best_local_correction", "simulate_gate"]
__version__ = "0.1.0"
