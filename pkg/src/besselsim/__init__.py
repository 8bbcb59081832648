"""Simulation of the stochastic Bessel operator's hard-edge point process.

Subpackages cover the Riccati diffusion realization of the operator's
eigenvalues, its high-temperature rescaled diffusions, the limiting
reflected-Brownian point process, direct bidiagonal random-matrix sampling,
closed-form scale-function oracles, and a Monte Carlo study harness.
"""

from .paths import BrownianPath, ScaledBrownianPath
from .riccati import ModelParams, SolverConfig

__all__ = ["BrownianPath", "ScaledBrownianPath", "ModelParams", "SolverConfig"]

__version__ = "0.1.0"
