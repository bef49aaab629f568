"""Facial reduction, singularity degree, and rigidity certificates.

Modules:
- kernels: Jacobi eigensolver (numba-compiled, numpy fallback)
- numerics: float rank/kernel decisions, exact rational elimination and simplex
- cones: orthant / PSD / EDM / product cones, faces, exposing operations
- sdpsolver: dense predictor-corrector interior-point SDP solver
- facial: facial reduction engine, certificates, singularity degree
- rigidity: frameworks, stress matrices, rigidity verdicts, generators
- cli: the `facered` command
"""

from . import cones, facial, kernels, numerics, rigidity, sdpsolver

__all__ = ["cones", "facial", "kernels", "numerics", "rigidity", "sdpsolver"]
__version__ = "1.0"
