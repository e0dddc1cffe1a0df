"""Exact operator algebra, reduction checks and simulation for the multispecies long-range swap process."""
from .params import ModelParams, rational

__version__ = "0.1.0"
__all__ = ["ModelParams", "rational", "__version__"]
