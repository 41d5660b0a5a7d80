"""Deterministic evolving cellular ecosystem.

Organisms living on a toroidal lattice convert energy into
infrastructure, signal, and expand into neighboring cells.  Their
controllers are dense networks painted by small evolved pattern
networks; conflict over territory triggers mutation and crossover.
Every run is exactly reproducible from its seed, for any worker count.
"""

from .config import ExperimentConfig, load_config, parse_config
from .engine import SimState, digest, new_state, run, step
from .metrics import census, diversity, msc
from .neuroevo import CppnGenome, EvolutionRates, GenomePool
from .physics import PhysicsParams
from .snapshot import load_snapshot, save_snapshot
from .substrate import Substrate, create_substrate, render_rgb

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "SimState",
    "new_state",
    "run",
    "step",
    "digest",
    "census",
    "diversity",
    "msc",
    "CppnGenome",
    "EvolutionRates",
    "GenomePool",
    "PhysicsParams",
    "Substrate",
    "create_substrate",
    "render_rgb",
    "load_snapshot",
    "save_snapshot",
    "__version__",
]
