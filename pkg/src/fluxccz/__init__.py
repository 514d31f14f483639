"""Simulation of a CCZ gate on three fluxoniums coupled through a transmon."""
__version__ = "0.1.0"

from .spectrum import FluxoniumParams, PhaseGrid, TransmonParams, solve_fluxonium, solve_transmon
from .composite import DeviceConfig, DressedModel, dressed_model, coupler_transition_table, paper_device
from .dynamics import DrivePulse, GateMatrix, propagate, extract_gate, to_ptm, process_fidelity

__all__ = [
    "DeviceConfig",
    "DressedModel",
    "DrivePulse",
    "FluxoniumParams",
    "GateMatrix",
    "PhaseGrid",
    "TransmonParams",
    "coupler_transition_table",
    "dressed_model",
    "extract_gate",
    "paper_device",
    "process_fidelity",
    "propagate",
    "solve_fluxonium",
    "solve_transmon",
    "to_ptm",
]
