"""Exclusion and interchange processes on hypergraphs: simulation and exact analysis."""

from .model import ClassMeasure, Hypergraph, Model, validate
from .perm import Permutation, parse_permutation

__all__ = ["ClassMeasure", "Hypergraph", "Model", "Permutation", "parse_permutation", "validate"]
__version__ = "0.1.0"
