"""Shared numerical substrate: uniform grids, trapezoid quadrature with analytic
tail-mass bookkeeping, discrete convolution, the sine integral, and reproducible
counter-based random streams.

Heavy-tailed (1/x^2) densities lose O(1/x_max) probability mass on any finite
window, so every density-valued grid function carries an explicit ``tail_mass``
that quadrature adds back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.signal import fftconvolve


class GridMismatchError(ValueError):
    """Two grid functions living on different grids were combined."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform spatial lattice on [x_min, x_max] with n points."""

    x_min: float
    x_max: float
    n: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if not self.x_min < self.x_max:
            raise ValueError(f"grid requires x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.n < 2:
            raise ValueError(f"grid requires n >= 2, got n={self.n}")
        pts = np.linspace(self.x_min, self.x_max, self.n)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    def difference_grid(self) -> "Grid1D":
        """Grid of pairwise point differences x_i - x_j: symmetric, 2n-1 points, same dx."""
        half = (self.n - 1) * self.dx
        return Grid1D(-half, half, 2 * self.n - 1)

    def index_of(self, x: float) -> int:
        """Nearest grid index to x (clipped to the window)."""
        i = int(round((x - self.x_min) / self.dx))
        return min(max(i, 0), self.n - 1)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n, self.dx)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


@dataclass(frozen=True)
class GridFn:
    """Function sampled on a Grid1D, plus probability mass assigned outside the window.

    ``tail_mass`` is 0 for non-density functions.
    """

    grid: Grid1D
    values: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"values shape {vals.shape} does not match grid n={self.grid.n}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        if not (math.isfinite(self.tail_mass) and self.tail_mass >= 0.0):
            raise ValueError(f"tail_mass must be finite and >= 0, got {self.tail_mass}")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray, tail_mass: float | None = None) -> "GridFn":
        return GridFn(self.grid, values, self.tail_mass if tail_mass is None else tail_mass)


def integrate(f: GridFn) -> float:
    """Trapezoid-rule integral over the window plus the analytic tail mass."""
    return float(np.trapezoid(f.values, dx=f.grid.dx) + f.tail_mass)


def _shift_slice(full: np.ndarray, n: int, shift: float) -> np.ndarray:
    """Sample length-(2n-1) full-convolution output on the original n-point grid.

    ``shift`` is x_min/dx; non-integer shifts are handled by linear interpolation,
    matching the direct-summation definition with linearly interpolated samples.
    """
    base = np.arange(n) - shift  # positions in the full-conv index space
    lo = np.floor(base).astype(int)
    frac = base - lo
    out = np.zeros(n)
    m = full.shape[0]
    ok_lo = (lo >= 0) & (lo < m)
    ok_hi = (lo + 1 >= 0) & (lo + 1 < m)
    out[ok_lo] += (1.0 - frac[ok_lo]) * full[lo[ok_lo]]
    out[ok_hi] += frac[ok_hi] * full[lo[ok_hi] + 1]
    return out


def convolve(f: GridFn, g: GridFn, direct: bool = False) -> GridFn:
    """Discrete (f*g)(x) = integral of g(x-z) f(z) dz, sampled on the shared grid.

    Values of either factor outside the window are taken as zero.  The result's
    tail_mass is set so that integrate(f*g) = integrate(f)*integrate(g) holds,
    i.e. mass pushed off the window (plus input tails) is recorded analytically.
    """
    if f.grid != g.grid:
        raise GridMismatchError("convolve requires both functions on the same grid")
    grid = f.grid
    n, dx = grid.n, grid.dx
    if direct:
        full = np.convolve(f.values, g.values) * dx
    else:
        full = fftconvolve(f.values, g.values) * dx
    # full[m] sits at position 2*x_min + m*dx; resample onto the window.
    vals = _shift_slice(full, n, grid.x_min / dx)
    expected = integrate(f) * integrate(g)
    captured = float(np.trapezoid(vals, dx=dx))
    return GridFn(grid, vals, max(0.0, expected - captured))


def sine_integral(x: float) -> float:
    """Si(x) = integral of sin(u)/u du from 0 to x."""
    if not np.all(np.isfinite(x)):
        raise ValueError("sine_integral requires finite input")
    return special.sici(x)[0]


def gauss_legendre_01(order: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights transplanted to (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class RandomStream:
    """Counter-based random stream: equal (seed, stream_id) reproduce identical draws
    across runs and worker counts.  Backed by Philox with the pair as its 128-bit key.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed % 2**64, self.stream_id % 2**64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "RandomStream":
        """Derived stream for worker/path ``index``; splitmix-style id mixing keeps
        distinct (parent, index) pairs collision-resistant."""
        z = (self.stream_id * 0x9E3779B97F4A7C15 + index + 1) % 2**64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
        return RandomStream(self.seed, z ^ (z >> 31))
