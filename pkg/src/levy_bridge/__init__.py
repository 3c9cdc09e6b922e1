"""Schrodinger-interpolated Markov processes driven by Cauchy noise.

Free, conditioned and Feynman-Kac-perturbed interpolations, their compound
Poisson step-process approximants, and desk-scale numerical validation of the
construction's defining identities.
"""

__version__ = "0.1.0"

from .numerics import Grid1D, GridFn, RandomStream, integrate, convolve, sine_integral
from .kernels import (
    cauchy_kernel,
    cauchy_grid_fn,
    q_eps,
    nabla_eps_apply,
    step_kernel,
    StepKernel,
    char_fn_cauchy,
    char_fn_step,
)

__all__ = [
    "Grid1D",
    "GridFn",
    "RandomStream",
    "integrate",
    "convolve",
    "sine_integral",
    "cauchy_kernel",
    "cauchy_grid_fn",
    "q_eps",
    "nabla_eps_apply",
    "step_kernel",
    "StepKernel",
    "char_fn_cauchy",
    "char_fn_step",
]
