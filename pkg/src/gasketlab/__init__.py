"""Simulation laboratory for interacting particle systems on prefractal graphs.

Builds Sierpinski gasket and generalised carpet graphs, simulates
continuous-time conductance walks and Poisson particle fields on them,
constructs the multi-scale space-time tessellation with its good/bad cell
percolation and Lipschitz cutsets, runs soft-local-time couplings, and
drives infection-with-recovery experiments.
"""

__version__ = "0.1.0"

from .graphs import FractalGraph, build_gasket, build_carpet, validate_carpet_pattern

__all__ = [
    "FractalGraph",
    "build_gasket",
    "build_carpet",
    "validate_carpet_pattern",
]
