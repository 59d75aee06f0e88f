from .config import SimulationConfig
from .engine import run_simulation, simulate
from .output import Element, SimulationOutput

__all__ = [
    "SimulationConfig",
    "run_simulation",
    "simulate",
    "Element",
    "SimulationOutput",
]
