"""Bi-objective multimodal car-sharing: instances, multigraphs, exact MIP solving
and Pareto-frontier enumeration."""

__version__ = "0.1.0"
