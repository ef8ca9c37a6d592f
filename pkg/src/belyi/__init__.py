"""Belyi functions for genus 0 and 1 dessins d'enfants.

Pipeline: a hypermap is refined to a tripartite triangulation, circle-packed
to seed star locations, polished by arbitrary-precision Newton iteration on
constellation space, verified by retracing the dessin, and identified exactly
by lattice reduction.
"""

from .errors import BelyiError
from .hypermap import Hypermap, Triangulation, tripartite_refinement, subdivide

__all__ = [
    "BelyiError",
    "Hypermap",
    "Triangulation",
    "tripartite_refinement",
    "subdivide",
]

__version__ = "0.1.0"
