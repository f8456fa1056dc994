"""Harmonic analysis and statistical dynamics on the cone of discrete
Radon measures: K-transform calculus, Lebesgue-Poisson integration, and
verification suites for contact, competition, and heat-bath dynamics."""

__version__ = "0.1.0"

from .measures import Atom, FiniteMeasure, MarkedConfiguration, r_inverse, r_map

__all__ = [
    "Atom",
    "FiniteMeasure",
    "MarkedConfiguration",
    "r_map",
    "r_inverse",
    "__version__",
]
