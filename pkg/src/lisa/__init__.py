"""Simulation and verification of LISA point processes.

Particles are added one at a time: a uniformly chosen parent places a child at
a random displacement scaled by the parent's nearest-neighbour distance.
"""

from .distributions import DisplacementLaw, constants, h_law_analytic, sample_H, sample_psi
from .engine import ModelSpec, ParticleConfig, Simulation, embedded_maxima, run, step
from .nn_index import NeighborIndex, brute_nearest

__all__ = [
    "DisplacementLaw", "ModelSpec", "NeighborIndex", "ParticleConfig", "Simulation",
    "brute_nearest", "constants", "embedded_maxima", "h_law_analytic", "run",
    "sample_H", "sample_psi", "step",
]
__version__ = "0.1.0"
