"""Closed-form and series kernels for the Cauchy process and its truncated-jump
(step) approximants: the Cauchy transition density, the truncated jump density
q_eps, the truncated generator applied on grids, the compound-Poisson step
kernel, and the characteristic functions of both processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.signal import fftconvolve

from .numerics import Grid1D, GridFn, GridMismatchError, integrate, sine_integral

TWO_OVER_PI = 2.0 / math.pi


# ---------------------------------------------------------------------------
# Cauchy kernel (exact)
# ---------------------------------------------------------------------------

def cauchy_kernel(y, s, x, t):
    """Cauchy transition density (1/pi) (t-s) / ((t-s)^2 + (x-y)^2).

    Space-time homogeneous; requires t > s.
    """
    dt = t - s
    if not np.all(dt > 0):
        raise ValueError(f"cauchy_kernel requires t > s, got gap {dt}")
    u = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    out = dt / (math.pi * (dt * dt + u * u))
    return float(out) if np.isscalar(x) and np.isscalar(y) else out


def cauchy_cdf(u, gap):
    """P(X_{s+gap} - X_s <= u) for the Cauchy increment of time length ``gap``."""
    return 0.5 + np.arctan(np.asarray(u, dtype=float) / gap) / math.pi


def cauchy_density(x, center=0.0, scale=1.0):
    """Cauchy(center, scale) probability density."""
    u = np.asarray(x, dtype=float) - center
    return scale / (math.pi * (scale * scale + u * u))


def cauchy_grid_fn(grid: Grid1D, center: float = 0.0, scale: float = 1.0) -> GridFn:
    """Cauchy density sampled on a grid, tail mass assigned by the arctan CDF."""
    vals = cauchy_density(grid.points, center, scale)
    left = float(cauchy_cdf(grid.x_min - center, scale))
    right = 1.0 - float(cauchy_cdf(grid.x_max - center, scale))
    return GridFn(grid, vals, left + right)


# ---------------------------------------------------------------------------
# Truncated Levy machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LevyMeasureCauchy:
    """The Cauchy Levy measure nu(dy) = dy / (pi y^2)."""

    def density(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            return 1.0 / (math.pi * y * y)


@dataclass(frozen=True)
class TruncatedJumpDensity:
    """q_eps(x) = 1/(pi x^2) outside [-eps, eps], zero inside; total mass 2/(pi eps)."""

    epsilon: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def total_mass(self) -> float:
        return 2.0 / (math.pi * self.epsilon)

    def __call__(self, x):
        return q_eps(self.epsilon, x)

    def mass_within(self, a: float, b: float) -> float:
        """Mass of q_eps on [a, b] (closed form)."""
        if b <= a:
            return 0.0
        total = 0.0
        # positive side overlap
        lo, hi = max(a, self.epsilon), b
        if hi > lo:
            total += (1.0 / lo - 1.0 / hi) / math.pi
        # negative side overlap
        lo, hi = a, min(b, -self.epsilon)
        if hi > lo:
            total += (1.0 / (-hi) - 1.0 / (-lo)) / math.pi
        return total

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Exact jump sampling: uniform sign, magnitude eps/U (Pareto tail eps/x)."""
        u = rng.random(size)
        signs = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return signs * self.epsilon / u


def q_eps(epsilon: float, x):
    """Truncated jump density 1/(pi x^2) for |x| > eps, else 0."""
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    xa = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        vals = np.where(np.abs(xa) > epsilon, 1.0 / (math.pi * xa * xa), 0.0)
    return float(vals) if np.isscalar(x) else vals


def q_cell_masses(epsilon: float, diff_grid: Grid1D) -> np.ndarray:
    """Exact q_eps mass per grid cell [z - dx/2, z + dx/2] of a difference grid.

    Cell-averaged weights keep every discrete quadrature consistent with the
    analytic total mass 2/(pi eps) up to the off-grid remainder.
    """
    q = TruncatedJumpDensity(epsilon)
    z = diff_grid.points
    half = diff_grid.dx / 2.0
    return np.array([q.mass_within(zi - half, zi + half) for zi in z])


def q_offgrid_mass_per_side(epsilon: float, diff_grid: Grid1D) -> float:
    """q_eps mass beyond the difference-grid cell edges, per side."""
    edge = diff_grid.x_max + diff_grid.dx / 2.0
    return 1.0 / (math.pi * max(edge, epsilon))


# ---------------------------------------------------------------------------
# Characteristic exponents and functions
# ---------------------------------------------------------------------------

def truncated_char_exponent(epsilon: float, p):
    """lambda_eps(p) = (2/pi) [ (1 - cos(p eps))/eps + |p| (pi/2 - Si(|p| eps)) ].

    Nonnegative, vanishes at p=0, and increases to |p| as eps -> 0.
    """
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    ap = np.abs(np.asarray(p, dtype=float))
    si = np.asarray(sine_integral(ap * epsilon))
    lam = TWO_OVER_PI * ((1.0 - np.cos(ap * epsilon)) / epsilon + ap * (math.pi / 2.0 - si))
    lam = np.maximum(lam, 0.0)
    return float(lam) if np.isscalar(p) else lam


@dataclass(frozen=True)
class CharacteristicExponent:
    """Exponent F with exp(-t F(p)) the process characteristic function.

    kind 'exact_cauchy' gives F(p) = |p|; kind 'truncated' gives lambda_eps(p).
    """

    kind: str
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind not in ("exact_cauchy", "truncated"):
            raise ValueError(f"unknown exponent kind {self.kind!r}")
        if self.kind == "truncated" and not (self.epsilon and self.epsilon > 0):
            raise ValueError("truncated exponent requires positive epsilon")

    def __call__(self, p):
        if self.kind == "exact_cauchy":
            ap = np.abs(np.asarray(p, dtype=float))
            return float(ap) if np.isscalar(p) else ap
        return truncated_char_exponent(self.epsilon, p)


def char_fn_cauchy(p, t):
    """Cauchy characteristic function exp(-t |p|)."""
    if not np.all(np.asarray(t) >= 0):
        raise ValueError("char_fn_cauchy requires t >= 0")
    out = np.exp(-np.asarray(t, dtype=float) * np.abs(np.asarray(p, dtype=float)))
    return float(out) if np.isscalar(p) and np.isscalar(t) else out


def char_fn_step(epsilon: float, p, t):
    """Step-process characteristic function exp(-t lambda_eps(p)), closed form via Si."""
    if not np.all(np.asarray(t) >= 0):
        raise ValueError("char_fn_step requires t >= 0")
    out = np.exp(-np.asarray(t, dtype=float) * truncated_char_exponent(epsilon, p))
    return float(out) if np.isscalar(p) and np.isscalar(t) else out


def char_fn_gap_bound(epsilon: float, p, t):
    """Lemma-2 style bound: |Phi_eps - psi| <= (2t/pi) * integral_0^eps (1-cos px)/x^2 dx
    <= (t/pi) p^2 eps, uniform on [0, T]."""
    ap = np.abs(np.asarray(p, dtype=float))
    return np.asarray(t, dtype=float) * ap * ap * epsilon / math.pi


# ---------------------------------------------------------------------------
# Truncated generator on grids
# ---------------------------------------------------------------------------

def q_convolve(epsilon: float, values: np.ndarray, grid: Grid1D) -> np.ndarray:
    """(q_eps * f)(x_i) on the grid from exact q cell masses, extending f by its
    boundary values; total quadrature weight is exactly 2/(pi eps)."""
    diff = grid.difference_grid()
    w = q_cell_masses(epsilon, diff)
    far = q_offgrid_mass_per_side(epsilon, diff)
    n = grid.n
    padded = np.concatenate(
        [np.full(n - 1, values[0]), values, np.full(n - 1, values[-1])]
    )
    out = fftconvolve(padded, w, mode="valid")
    out += far * (values[0] + values[-1])
    return out


def nabla_eps_apply(epsilon: float, f: GridFn) -> GridFn:
    """Grid approximation of |grad|_eps f(x) = -(1/pi) int_{|y|>eps} [f(x+y)-f(x)] dy/y^2.

    Equals (2/(pi eps)) f - q_eps * f.  Values of f outside the window are taken
    from the boundary values (constant-by-tail-value extension); the q quadrature
    uses exact cell masses so a constant function maps to exactly zero.
    """
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    grid = f.grid
    if epsilon < 2.0 * grid.dx:
        raise ValueError(
            f"cutoff unresolvable: epsilon={epsilon} < 2*dx={2 * grid.dx}; refine the grid"
        )
    lam = 2.0 / (math.pi * epsilon)
    return GridFn(grid, lam * f.values - q_convolve(epsilon, f.values, grid), 0.0)


# ---------------------------------------------------------------------------
# Step kernel (compound Poisson series)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepKernel:
    """Poisson transition kernel k_eps(x, t): a Dirac atom at 0 of weight
    exp(-2t/(pi eps)) plus an absolutely continuous part.

    The atom is kept as an exact weight, never smeared onto the grid.
    The ac part lives on a symmetric displacement grid and carries the
    off-window series mass in its tail_mass.
    """

    epsilon: float
    t: float
    atom_weight: float
    ac_part: GridFn
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # trapezoid cumulative of the ac part, for continuous tail-mass lookups
        v, dx = self.ac_part.values, self.ac_part.grid.dx
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * dx)])
        object.__setattr__(self, "_cum", cum)

    @property
    def rate(self) -> float:
        return 2.0 / (math.pi * self.epsilon)

    @property
    def ac_mass(self) -> float:
        return integrate(self.ac_part)

    def ac_at(self, z) -> np.ndarray:
        """Linear interpolation of the ac density at displacements z, with the
        1/z^2 far-field model beyond the displacement grid."""
        g = self.ac_part.grid
        za = np.abs(np.asarray(z, dtype=float))
        inside = np.interp(np.asarray(z, dtype=float), g.points, self.ac_part.values)
        c_far = 0.5 * self.ac_part.tail_mass * g.x_max
        with np.errstate(divide="ignore"):
            far = np.where(za > 0, c_far / (za * za), 0.0)
        out = np.where(za <= g.x_max, inside, far)
        return float(out) if np.isscalar(z) else out

    def mass_beyond(self, d: float, side: str) -> float:
        """AC mass of {z > d} (side='right') or {z < -d} (side='left'), d >= 0."""
        g = self.ac_part.grid
        half_tail = 0.5 * self.ac_part.tail_mass
        if d >= g.x_max:
            return half_tail * g.x_max / d if d > 0 else half_tail
        total = self._cum[-1]
        if side == "right":
            inner = total - float(np.interp(d, g.points, self._cum))
        else:
            inner = float(np.interp(-d, g.points, self._cum))
        return inner + half_tail


def step_kernel(epsilon: float, t: float, grid: Grid1D, tol_series: float = 1e-10) -> StepKernel:
    """Build the Theorem-2 kernel k_eps(., t) on a symmetric displacement grid.

    ac = exp(-lam t) sum_{m>=1} (t^m/m!) q_eps^{*m} with lam = 2/(pi eps); the
    series is truncated when the Poisson(lam t) tail falls below tol_series, and
    convolution mass pushed off the grid is accumulated into tail_mass.
    """
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not (math.isfinite(t) and t >= 0):
        raise ValueError(f"t must be nonnegative, got {t}")
    if abs(grid.x_min + grid.x_max) > 1e-9 * grid.width:
        raise ValueError("step_kernel requires a symmetric displacement grid")
    lam = 2.0 / (math.pi * epsilon)
    mu = lam * t
    atom = math.exp(-mu)
    dx = grid.dx
    if t == 0.0:
        return StepKernel(epsilon, t, 1.0, GridFn(grid, np.zeros(grid.n), 0.0))

    n_terms = int(stats.poisson.isf(tol_series, mu)) + 1
    weights = stats.poisson.pmf(np.arange(1, n_terms + 1), mu)

    # unit-mass single-jump density from exact cell masses
    r1 = q_cell_masses(epsilon, grid) / lam / dx
    off = q_offgrid_mass_per_side(epsilon, grid) * 2.0 / lam  # per-convolution leakage

    vals = np.zeros(grid.n)
    tail = 0.0
    rm = r1
    capture = 1.0 - off
    for m in range(1, n_terms + 1):
        vals += weights[m - 1] * rm
        tail += weights[m - 1] * (1.0 - capture)
        if m < n_terms:
            rm = np.maximum(fftconvolve(rm, r1, mode="same") * dx, 0.0)
            capture = float(np.trapezoid(rm, dx=dx))
    tail += float(stats.poisson.sf(n_terms, mu))
    # align bookkeeping with the trapezoid quadrature used by integrate()
    captured = float(np.trapezoid(vals, dx=dx))
    tail = max(0.0, (1.0 - atom) - captured)
    return StepKernel(epsilon, t, atom, GridFn(grid, vals, tail))


def apply_step_kernel(kernel: StepKernel, values: np.ndarray, grid: Grid1D) -> np.ndarray:
    """(k_eps(t) * f)(x_i) on the grid, extending f by its boundary values.

    The atom acts exactly; the ac part is applied by discrete convolution, with
    the ac mass reaching beyond the window credited to the boundary values so
    that constants are preserved to the series tolerance.
    """
    diff = kernel.ac_part.grid
    n = grid.n
    if diff.n != 2 * n - 1:
        raise GridMismatchError("step kernel was built for a different grid size")
    dx = grid.dx
    ac = kernel.ac_part.values
    padded = np.concatenate([np.full(n - 1, values[0]), values, np.full(n - 1, values[-1])])
    out = kernel.atom_weight * values + fftconvolve(padded, ac, mode="valid") * dx
    # far-field ac mass beyond the displacement grid, split evenly by symmetry
    out += 0.5 * kernel.ac_part.tail_mass * (values[0] + values[-1])
    return out
