"""Ising percolation at high temperature on the square and triangular
lattices: exact enumeration, Monte Carlo samplers, cluster and circuit
analysis, and the estimators built on them."""
__version__ = "0.1.0"

from .lattice import (Annulus, AnnulusSchedule, Box, Boundary, Circuit, ComplementBox, Explicit,
                      LatticeKind, Rectangle, Region)
from .model import ModelParams, SpinConfig, Window, exact_gibbs
from .sampler import Clamp, SamplerSpec, Scheme, sample, sample_conditioned
from .stats import Estimate, ScalingFit

__all__ = ["Annulus", "AnnulusSchedule", "Box", "Boundary", "Circuit", "ComplementBox",
           "Explicit", "LatticeKind", "Rectangle", "Region", "ModelParams", "SpinConfig",
           "Window", "exact_gibbs", "Clamp", "SamplerSpec", "Scheme", "sample",
           "sample_conditioned", "Estimate", "ScalingFit", "__version__"]
