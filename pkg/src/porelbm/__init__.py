"""Pore-scale lattice Boltzmann (D3Q19) flow through periodic sphere packs."""
from .lattice import D3Q19, E, OPP, W, equilibrium, moments
from .collision import CollisionConfig
from .geometry import Channel, Sphere, SpherePack, single_sphere_rev, voxelize
from .engine import Simulation, SimulationConfig, run

__all__ = [
    "D3Q19", "E", "OPP", "W", "equilibrium", "moments", "CollisionConfig",
    "Channel", "Sphere", "SpherePack", "single_sphere_rev", "voxelize",
    "Simulation", "SimulationConfig", "run",
]
__version__ = "0.1.0"
