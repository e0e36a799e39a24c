"""Cycle-deterministic multi-core debug and trace simulator.

Simulates a small multi-master SoC (cores + DMA on one shared bus) together
with the on-chip debug infrastructure around it: per-source trigger blocks,
a cross-trigger matrix with a break/suspend switch, cycle-level timestamped
trace with a compressed wire format, segmented emulation RAM usable as
calibration overlay or trace buffer, and an XCP-style calibration server.
"""

__version__ = "0.1.0"

from .isa import Opcode, Instruction, assemble, AsmError, DecodeError
from .machine import Machine, CoreMode, CycleEvents

__all__ = [
    "Opcode",
    "Instruction",
    "assemble",
    "AsmError",
    "DecodeError",
    "Machine",
    "CoreMode",
    "CycleEvents",
]
