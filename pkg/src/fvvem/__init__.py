"""Hybrid semi-implicit finite volume / virtual element solver for
incompressible flows on unstructured polygonal meshes."""

from . import fv, linalg, mesh, models, timeint, transfer, vem

__all__ = ["mesh", "linalg", "vem", "fv", "transfer", "models", "timeint"]
__version__ = "0.1.0"
