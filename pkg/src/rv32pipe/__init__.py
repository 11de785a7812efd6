"""Cycle-accurate RV32I 5-stage pipeline simulator with a single-cycle golden reference."""
from .bus import MemoryMap, SimFault, SocBus, UartSink
from .golden import GoldenCore, RetireEvent
from .harness import Options, Simulation
from .loader import LoadedImage, load_image
from .lockstep import Divergence, Ok, lockstep
from .pipeline import PipelineCore
from .stats import StatsReport, compute_dmips, cpi

__all__ = ["MemoryMap", "SimFault", "SocBus", "UartSink", "GoldenCore", "RetireEvent",
           "Options", "Simulation", "LoadedImage", "load_image", "Divergence", "Ok",
           "lockstep", "PipelineCore", "StatsReport", "compute_dmips", "cpi"]
__version__ = "0.1.0"
