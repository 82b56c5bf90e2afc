"""Simulation lab for random walks on discrete subgroups of SL(d, R) and their boundaries."""

from .exactgroup import GroupElement, canonical_key, identity, inverse, multiply
from .walk import MuSpec, delta, reflect, sample_path

__all__ = ["GroupElement", "canonical_key", "identity", "inverse", "multiply", "MuSpec",
           "delta", "reflect", "sample_path"]
__version__ = "0.1.0"
