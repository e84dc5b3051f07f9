"""Fractal percolation, fat and dense Cantor sets, quasisymmetry and Frostman checks."""
from .errors import FracPercError
from .grid import ParamSequence, ScaleSequence, SurvivalTree
from .percolation import ModelSpec, Realization, SeedSpec, condition_nonextinct, generate

__all__ = ["FracPercError", "ModelSpec", "ParamSequence", "Realization", "ScaleSequence",
           "SeedSpec", "SurvivalTree", "condition_nonextinct", "generate"]
__version__ = "0.1.0"
