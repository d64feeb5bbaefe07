"""bcslab: numerical lab for the BCS functional near the critical temperature."""

from .foundation import BoxGrid, Potential, RadialGrid, RadialProfile, build_radial_grid, gaussian_potential
from .tibcs import GapSolution, TiState, critical_temperature, solve_gap

__version__ = "0.1.0"

__all__ = [
    "BoxGrid", "Potential", "RadialGrid", "RadialProfile", "build_radial_grid", "gaussian_potential",
    "GapSolution", "TiState", "critical_temperature", "solve_gap",
]
