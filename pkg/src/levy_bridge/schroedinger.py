"""Schrodinger boundary-data system for a given transition kernel: the
iterative-proportional-fitting solver, the propagated pair (theta, theta*),
the conditioned transition density, interpolating densities, and closed-form
Cauchy bridges.

Finite windows cannot hold all of a 1/x^2-tailed density, so the discrete
system is augmented with one analytic tail cell per side: the f-side tail is
anchored to the boundary value with a 1/x^2 profile, the g-side tail is the
boundary value continued as a constant (g tends to a constant at infinity for
heavy-tailed data).  This keeps both marginal totals exactly consistent and
lets the fixed point satisfy the marginal equations to solver precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve

from .numerics import Grid1D, GridFn, gauss_legendre_01, integrate
from .kernels import (
    StepKernel,
    cauchy_cdf,
    cauchy_grid_fn,
    cauchy_kernel,
    step_kernel,
)


class ConvergenceError(RuntimeError):
    """IPF failed to reach the marginal-fit tolerance; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class SolverError(RuntimeError):
    """Nonpositive intermediate values: the grid window lost too much mass."""


# ---------------------------------------------------------------------------
# Kernel operators: the augmented transition matrix in operator form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Which transition kernel is in force."""

    kind: str  # exact_cauchy | truncated_step | perturbed
    epsilon: float | None = None
    potential: dict | None = None
    base_kind: str = "truncated_step"

    def __post_init__(self):
        if self.kind not in ("exact_cauchy", "truncated_step", "perturbed"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind in ("truncated_step", "perturbed"):
            if not (self.epsilon and self.epsilon > 0):
                raise ValueError(f"kernel kind {self.kind!r} requires positive epsilon")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
        if self.potential is not None:
            d["potential"] = self.potential
            d["base_kind"] = self.base_kind
        return d


class GapStructs:
    """Per-time-gap pieces of the augmented kernel matrix.

    apply0(v)       kernel applied to window values with zero tail input (symmetric)
    alpha_l/r       interior response to a unit constant in the left/right tail
    q_l/q_r         profile rows: mass flow from the 1/x^2-anchored tail profile
    corners         (c_ll, c_lr, c_rl, c_rr) tail-to-tail mass entries
    atom            Dirac-atom weight (0 for the exact Cauchy kernel)
    pointwise(dz)   ac-part density at displacement array dz
    mass_lt(d)      kernel mass of displacements below d (atom included for d > 0)
    mass_gt(d)      kernel mass of displacements above d (atom included for d < 0)
    """

    def __init__(self, apply0, alpha_l, alpha_r, q_l, q_r, corners, atom, pointwise,
                 mass_lt, mass_gt):
        self.apply0 = apply0
        self.alpha_l = alpha_l
        self.alpha_r = alpha_r
        self.q_l = q_l
        self.q_r = q_r
        self.corners = corners
        self.atom = atom
        self.pointwise = pointwise
        self.mass_lt = mass_lt
        self.mass_gt = mass_gt

    def tail_masses(self, x: float, x_min: float, x_max: float) -> tuple[float, float]:
        """Kernel mass from position x into the left and right tail regions."""
        return self.mass_lt(x_min - x), self.mass_gt(x_max - x)


class _OperatorBase:
    """Shared caching and augmented-matrix algebra for transition-kernel operators."""

    def __init__(self, grid: Grid1D, quad_order: int = 64):
        self.grid = grid
        self.w = grid.trapezoid_weights()
        self._nodes, self._qw = gauss_legendre_01(quad_order)
        self._cache: dict[float, GapStructs] = {}

    # -- subclass hooks ----------------------------------------------------
    def _build(self, gap: float) -> GapStructs:
        raise NotImplementedError

    # -- shared ------------------------------------------------------------
    def structs(self, gap: float) -> GapStructs:
        key = round(float(gap), 12)
        if key <= 0:
            raise ValueError(f"kernel requires a positive time gap, got {gap}")
        if key not in self._cache:
            self._cache[key] = self._build(key)
        return self._cache[key]

    def _window_conv(self, diff_vals: np.ndarray, values: np.ndarray) -> np.ndarray:
        """sum_j diff[(i-j)+n-1] * values_j for each window index i."""
        n = self.grid.n
        return fftconvolve(diff_vals, values)[n - 1 : 2 * n - 1]

    def _profile_nodes(self, side: str) -> np.ndarray:
        """Quadrature abscissae x = edge/u covering the tail with unit 1/x^2 profile."""
        edge = self.grid.x_min if side == "left" else self.grid.x_max
        return edge / self._nodes

    def matvec_g(self, g_l: float, g_int: np.ndarray, g_r: float, gap: float):
        """(M G) in mass space: returns (left-cell, interior, right-cell)."""
        s = self.structs(gap)
        interior = self.w * (s.apply0(g_int) + g_l * s.alpha_l + g_r * s.alpha_r)
        c_ll, c_lr, c_rl, c_rr = s.corners
        left = float(np.sum(s.q_l * self.w * g_int)) + c_ll * g_l + c_lr * g_r
        right = float(np.sum(s.q_r * self.w * g_int)) + c_rl * g_l + c_rr * g_r
        return left, interior, right

    def matvec_f(self, f_l: float, f_int: np.ndarray, f_r: float, gap: float):
        """(M^T F) in mass space."""
        s = self.structs(gap)
        interior = self.w * (s.apply0(f_int) + f_l * s.q_l + f_r * s.q_r)
        c_ll, c_lr, c_rl, c_rr = s.corners
        left = float(np.sum(self.w * s.alpha_l * f_int)) + c_ll * f_l + c_rl * f_r
        right = float(np.sum(self.w * s.alpha_r * f_int)) + c_lr * f_l + c_rr * f_r
        return left, interior, right

    def theta_values(self, g_l: float, g_int: np.ndarray, g_r: float, gap: float) -> np.ndarray:
        """theta(x_i) = [k(gap) g](x_i) with constant tail continuation of g."""
        s = self.structs(gap)
        return s.apply0(g_int) + g_l * s.alpha_l + g_r * s.alpha_r

    def theta_star_values(self, f_l: float, f_int: np.ndarray, f_r: float, gap: float) -> np.ndarray:
        """theta*(y_j) = [k(gap) f](y_j) with 1/x^2 profile continuation of f."""
        s = self.structs(gap)
        return s.apply0(f_int) + f_l * s.q_l + f_r * s.q_r

    def theta_at(self, x: float, g_l: float, g_int: np.ndarray, g_r: float, gap: float) -> float:
        """Pointwise theta at arbitrary x (off-grid allowed); g continues by its
        boundary values outside the window."""
        s = self.structs(gap)
        dz = x - self.grid.points
        val = float(np.sum(np.asarray(s.pointwise(dz)) * self.w * g_int))
        if s.atom and self.grid.x_min <= x <= self.grid.x_max:
            # out-of-window x: the atom is already part of the same-side tail mass
            val += s.atom * float(np.interp(x, self.grid.points, g_int))
        left, right = s.tail_masses(x, self.grid.x_min, self.grid.x_max)
        return val + g_l * left + g_r * right

    def theta_star_at(self, y: float, f_l: float, f_int: np.ndarray, f_r: float,
                      gap: float) -> float:
        """Pointwise theta* at arbitrary y; f continues by anchored 1/x^2 profiles.

        Same-side tail integrals are split at the midpoint between the window
        edge and y: the near part is smooth under the edge/u substitution, the
        far part uses the kernel's delta-like concentration around y.
        """
        s = self.structs(gap)
        grid = self.grid
        dz = y - grid.points
        val = float(np.sum(np.asarray(s.pointwise(dz)) * self.w * f_int))
        if s.atom:
            if grid.x_min <= y <= grid.x_max:
                val += s.atom * float(np.interp(y, grid.points, f_int))
        nodes, qw = self._nodes, self._qw
        for anchor, edge, sign in ((f_l, grid.x_min, -1.0), (f_r, grid.x_max, 1.0)):
            beyond = sign * (y - edge)
            if beyond <= 0.0:
                # y is not past this edge: plain profile quadrature is smooth
                xs = edge / nodes
                val += anchor * abs(edge) * float(np.sum(qw * np.asarray(s.pointwise(y - xs))))
                continue
            mid = 0.5 * (edge + y)
            # near part of the tail, (edge, mid): substitution x = edge/u
            u_lo = edge / mid
            uu = u_lo + (1.0 - u_lo) * nodes
            xs = edge / uu
            val += anchor * abs(edge) * (1.0 - u_lo) * float(
                np.sum(qw * np.asarray(s.pointwise(y - xs))))
            # far part: profile is flat on the kernel scale around y
            p_y = anchor * (edge / y) ** 2
            mass = s.mass_gt(mid - y) if sign > 0 else s.mass_lt(mid - y)
            val += p_y * mass
        return val


class CauchyKernelOperator(_OperatorBase):
    """Exact Cauchy kernel, Eq.-(7)-style closed forms for every matrix piece."""

    spec = KernelSpec("exact_cauchy")

    def pointwise_density(self, y, s, x, t):
        return cauchy_kernel(y, s, x, t)

    def _build(self, gap: float) -> GapStructs:
        grid = self.grid
        diff = grid.difference_grid()
        kvals = gap / (math.pi * (gap * gap + diff.points**2))
        w = self.w

        def apply0(values: np.ndarray) -> np.ndarray:
            return self._window_conv(kvals, w * values)

        pts = grid.points
        alpha_l = np.asarray(cauchy_cdf(grid.x_min - pts, gap))
        alpha_r = 1.0 - np.asarray(cauchy_cdf(grid.x_max - pts, gap))

        xl = self._profile_nodes("left")
        xr = self._profile_nodes("right")
        scale_l, scale_r = abs(grid.x_min), abs(grid.x_max)
        # q_l(y) = |x_min| * int_0^1 k(x_min/u - y) du   (unit-mass tail profile)
        q_l = scale_l * (self._qw[:, None] * (
            gap / (math.pi * (gap**2 + (xl[:, None] - pts[None, :]) ** 2))
        )).sum(axis=0)
        q_r = scale_r * (self._qw[:, None] * (
            gap / (math.pi * (gap**2 + (xr[:, None] - pts[None, :]) ** 2))
        )).sum(axis=0)
        c_ll = scale_l * float(np.sum(self._qw * cauchy_cdf(grid.x_min - xl, gap)))
        c_lr = scale_l * float(np.sum(self._qw * (1.0 - cauchy_cdf(grid.x_max - xl, gap))))
        c_rl = scale_r * float(np.sum(self._qw * cauchy_cdf(grid.x_min - xr, gap)))
        c_rr = scale_r * float(np.sum(self._qw * (1.0 - cauchy_cdf(grid.x_max - xr, gap))))

        def pointwise(dz):
            dz = np.asarray(dz, dtype=float)
            return gap / (math.pi * (gap * gap + dz * dz))

        def mass_lt(d):
            return float(cauchy_cdf(d, gap))

        def mass_gt(d):
            return 1.0 - float(cauchy_cdf(d, gap))

        return GapStructs(apply0, alpha_l, alpha_r, q_l, q_r,
                          (c_ll, c_lr, c_rl, c_rr), 0.0, pointwise, mass_lt, mass_gt)


class StepKernelOperator(_OperatorBase):
    """Theorem-2 compound-Poisson kernel; the Dirac atom stays an exact weight."""

    def __init__(self, grid: Grid1D, epsilon: float, tol_series: float = 1e-10,
                 quad_order: int = 64):
        super().__init__(grid, quad_order)
        if not (epsilon and epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.epsilon = float(epsilon)
        self.tol_series = float(tol_series)
        self.spec = KernelSpec("truncated_step", epsilon=self.epsilon)
        self._kernels: dict[float, StepKernel] = {}

    def kernel(self, gap: float) -> StepKernel:
        key = round(float(gap), 12)
        if key not in self._kernels:
            self._kernels[key] = step_kernel(self.epsilon, key, self.grid.difference_grid(),
                                             self.tol_series)
        return self._kernels[key]

    def pointwise_density(self, y, s, x, t):
        """AC-part density of k_eps(t-s, x-y); the atom is reported separately."""
        k = self.kernel(t - s)
        return k.ac_at(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))

    def _build(self, gap: float) -> GapStructs:
        grid = self.grid
        k = self.kernel(gap)
        ac = k.ac_part.values
        atom = k.atom_weight
        w = self.w

        def apply0(values: np.ndarray) -> np.ndarray:
            return atom * values + self._window_conv(ac, w * values)

        def ac_le(d: float) -> float:
            """AC mass of displacements below d."""
            if d <= 0:
                return k.mass_beyond(-d, "left")
            return k.ac_mass - k.mass_beyond(d, "right")

        def ac_gt(d: float) -> float:
            """AC mass of displacements above d."""
            if d >= 0:
                return k.mass_beyond(d, "right")
            return k.ac_mass - k.mass_beyond(-d, "left")

        pts = grid.points
        alpha_l = np.array([ac_le(grid.x_min - x) for x in pts])
        alpha_r = np.array([ac_gt(grid.x_max - x) for x in pts])

        xl = self._profile_nodes("left")   # points below x_min
        xr = self._profile_nodes("right")  # points above x_max
        scale_l, scale_r = abs(grid.x_min), abs(grid.x_max)
        q_l = scale_l * (self._qw[:, None] * k.ac_at(pts[None, :] - xl[:, None])).sum(axis=0)
        q_r = scale_r * (self._qw[:, None] * k.ac_at(pts[None, :] - xr[:, None])).sum(axis=0)
        # tail-to-tail entries: the atom keeps a tail point in its own tail
        c_ll = scale_l * float(np.sum(self._qw * np.array(
            [atom + ac_le(grid.x_min - x) for x in xl])))
        c_lr = scale_l * float(np.sum(self._qw * np.array(
            [ac_gt(grid.x_max - x) for x in xl])))
        c_rl = scale_r * float(np.sum(self._qw * np.array(
            [ac_le(grid.x_min - x) for x in xr])))
        c_rr = scale_r * float(np.sum(self._qw * np.array(
            [atom + ac_gt(grid.x_max - x) for x in xr])))

        def pointwise(dz):
            return k.ac_at(dz)

        def mass_lt(d):
            return ac_le(d) + (atom if d > 0 else 0.0)

        def mass_gt(d):
            return ac_gt(d) + (atom if d < 0 else 0.0)

        return GapStructs(apply0, alpha_l, alpha_r, q_l, q_r,
                          (c_ll, c_lr, c_rl, c_rr), atom, pointwise, mass_lt, mass_gt)


# ---------------------------------------------------------------------------
# Boundary data and presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryData:
    """Strictly positive densities at times 0 and T, with per-side tail masses."""

    rho0: GridFn
    rhoT: GridFn
    T: float
    rho0_tails: tuple[float, float] | None = None
    rhoT_tails: tuple[float, float] | None = None
    tol_mass: float = 1e-4

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if self.rho0.grid != self.rhoT.grid:
            raise ValueError("boundary densities must share a grid")
        for name, fn in (("rho0", self.rho0), ("rhoT", self.rhoT)):
            if np.min(fn.values) <= 0:
                raise ValueError(f"{name} must be strictly positive on the grid")
            m = integrate(fn)
            if abs(m - 1.0) > self.tol_mass:
                raise ValueError(f"{name} mass {m} deviates from 1 beyond tol_mass")
        if self.rho0_tails is None:
            object.__setattr__(self, "rho0_tails",
                               (self.rho0.tail_mass / 2, self.rho0.tail_mass / 2))
        if self.rhoT_tails is None:
            object.__setattr__(self, "rhoT_tails",
                               (self.rhoT.tail_mass / 2, self.rhoT.tail_mass / 2))

    @property
    def grid(self) -> Grid1D:
        return self.rho0.grid


def cauchy_mixture_grid_fn(grid: Grid1D, components: list[tuple[float, float, float]]) -> GridFn:
    """Mixture of Cauchy(center, scale) with given weights; exact arctan tails."""
    vals = np.zeros(grid.n)
    left = right = 0.0
    for weight, center, scale in components:
        u = grid.points - center
        vals += weight * scale / (math.pi * (scale * scale + u * u))
        left += weight * float(cauchy_cdf(grid.x_min - center, scale))
        right += weight * (1.0 - float(cauchy_cdf(grid.x_max - center, scale)))
    return GridFn(grid, vals, left + right)


def _mixture_tails(grid: Grid1D, components) -> tuple[float, float]:
    left = sum(wt * float(cauchy_cdf(grid.x_min - c, s)) for wt, c, s in components)
    right = sum(wt * (1.0 - float(cauchy_cdf(grid.x_max - c, s))) for wt, c, s in components)
    return left, right


def free_evolution_boundary(grid: Grid1D, T: float, operator: _OperatorBase,
                            center: float = 0.0, scale: float = 1.0) -> BoundaryData:
    """rho0 = Cauchy(center, scale); rhoT = rho0 propagated through the operator's
    own discrete kernel, so (f, g) = (rho0, const) solves the system exactly."""
    rho0 = cauchy_grid_fn(grid, center, scale)
    tails0 = _mixture_tails(grid, [(1.0, center, scale)])
    w = grid.trapezoid_weights()
    a_l, a_r = tails0
    a_int = rho0.values * w
    # F = A / (M 1)
    m1_l, m1_int, m1_r = operator.matvec_g(1.0, np.ones(grid.n), 1.0, T)
    f_int = a_int / m1_int
    f_l, f_r = a_l / m1_l, a_r / m1_r
    b_l, b_int, b_r = operator.matvec_f(f_l, f_int, f_r, T)
    rhoT = GridFn(grid, b_int / w, b_l + b_r)
    return BoundaryData(rho0, rhoT, T, rho0_tails=tails0, rhoT_tails=(b_l, b_r))


def boundary_preset(name: str, grid: Grid1D, T: float,
                    operator: _OperatorBase | None = None, **params) -> BoundaryData:
    """Named boundary-data presets used by the CLI and the validation suites."""
    if name == "free_evolution":
        if operator is None:
            operator = CauchyKernelOperator(grid)
        return free_evolution_boundary(grid, T, operator,
                                       params.get("center", 0.0), params.get("scale", 1.0))
    if name == "bimodal":
        comps0 = [(1.0, params.get("center", 0.0), params.get("scale", 1.0))]
        sep = params.get("separation", 3.0)
        sc = params.get("spike_scale", 0.5)
        compsT = [(0.5, -sep, sc), (0.5, sep, sc)]
        rho0 = cauchy_mixture_grid_fn(grid, comps0)
        rhoT = cauchy_mixture_grid_fn(grid, compsT)
        return BoundaryData(rho0, rhoT, T,
                            rho0_tails=_mixture_tails(grid, comps0),
                            rhoT_tails=_mixture_tails(grid, compsT))
    if name == "pinned":
        y0 = params.get("y0", 0.0)
        zT = params.get("zT", 0.0)
        sc = params.get("spike_scale", 0.01)
        comps0 = [(1.0, y0, sc)]
        compsT = [(1.0, zT, sc)]
        rho0 = cauchy_mixture_grid_fn(grid, comps0)
        rhoT = cauchy_mixture_grid_fn(grid, compsT)
        return BoundaryData(rho0, rhoT, T,
                            rho0_tails=_mixture_tails(grid, comps0),
                            rhoT_tails=_mixture_tails(grid, compsT))
    raise ValueError(f"unknown boundary preset {name!r}")


# ---------------------------------------------------------------------------
# The solver
# ---------------------------------------------------------------------------

@dataclass
class SchroedingerSolution:
    """Solution pair (f, g) with tail anchors, plus everything needed to evaluate
    theta, theta*, the conditioned transition density and the interpolating density.
    """

    f: GridFn
    g: GridFn
    f_anchors: tuple[float, float]
    g_anchors: tuple[float, float]
    operator: _OperatorBase
    boundary: BoundaryData
    residual: float
    iterations: int

    @property
    def grid(self) -> Grid1D:
        return self.f.grid

    @property
    def T(self) -> float:
        return self.boundary.T

    @property
    def kernel_spec(self) -> KernelSpec:
        return self.operator.spec

    # -- theta machinery ---------------------------------------------------
    def _check_time(self, t: float):
        if not (0.0 <= t <= self.T + 1e-12):
            raise ValueError(f"time {t} outside [0, {self.T}]")

    def theta_vector(self, t: float) -> np.ndarray:
        """theta(., t) on the grid."""
        self._check_time(t)
        if abs(t - self.T) < 1e-12:
            return self.g.values.copy()
        g_l, g_r = self.g_anchors
        return self.operator.theta_values(g_l, self.g.values, g_r, self.T - t)

    def theta_star_vector(self, s: float) -> np.ndarray:
        """theta*(., s) on the grid."""
        self._check_time(s)
        if abs(s) < 1e-12:
            return self.f.values.copy()
        f_l, f_r = self.f_anchors
        return self.operator.theta_star_values(f_l, self.f.values, f_r, s)

    def f_at(self, x: float) -> float:
        """f continued beyond the window by its anchored 1/x^2 profile."""
        if x < self.grid.x_min:
            return self.f_anchors[0] * (self.grid.x_min / x) ** 2
        if x > self.grid.x_max:
            return self.f_anchors[1] * (self.grid.x_max / x) ** 2
        return float(np.interp(x, self.grid.points, self.f.values))

    def g_at(self, x: float) -> float:
        """g continued beyond the window by its boundary anchors."""
        if x < self.grid.x_min:
            return self.g_anchors[0]
        if x > self.grid.x_max:
            return self.g_anchors[1]
        return float(np.interp(x, self.grid.points, self.g.values))

    def theta(self, x: float, t: float) -> float:
        """theta(x, t) = int k(x, t, y, T) g(y) dy; equals g at t = T."""
        self._check_time(t)
        if abs(t - self.T) < 1e-12:
            return self.g_at(x)
        g_l, g_r = self.g_anchors
        val = self.operator.theta_at(x, g_l, self.g.values, g_r, self.T - t)
        if val <= 0:
            raise SolverError(f"theta underflow at (x={x}, t={t})")
        return val

    def theta_star(self, y: float, s: float) -> float:
        """theta*(y, s) = int k(x, 0, y, s) f(x) dx; equals f at s = 0."""
        self._check_time(s)
        if abs(s) < 1e-12:
            return self.f_at(y)
        f_l, f_r = self.f_anchors
        val = self.operator.theta_star_at(y, f_l, self.f.values, f_r, s)
        if val <= 0:
            raise SolverError(f"theta* underflow at (y={y}, s={s})")
        return val

    def transition_density(self, y: float, s: float, x: float, t: float) -> float:
        """p(y, s, x, t) = k(y, s, x, t) theta(x, t) / theta(y, s).

        For step kernels this is the a.e. (absolutely continuous) density; the
        atom at x = y is carried separately by the kernel objects.
        """
        if not s < t:
            raise ValueError(f"transition density requires s < t, got s={s}, t={t}")
        self._check_time(s)
        self._check_time(t)
        k = float(np.asarray(self.operator.pointwise_density(y, s, x, t)))
        return k * self.theta(x, t) / self.theta(y, s)

    def rho_at(self, x: float, t: float) -> float:
        """Pointwise interpolating density theta(x, t) theta*(x, t)."""
        if abs(t) < 1e-12:
            return self.f_at(x) * self.theta(x, t)
        if abs(t - self.T) < 1e-12:
            return self.g_at(x) * self.theta_star(x, t)
        return self.theta(x, t) * self.theta_star(x, t)

    def _tail_mass_rho(self, t: float) -> float:
        """Quadrature of theta theta* over both tails via the z = edge/u substitution."""
        nodes, qw = self.operator._nodes, self.operator._qw
        tail = 0.0
        for edge in (self.grid.x_min, self.grid.x_max):
            z = edge / nodes
            vals = np.array([self.rho_at(zi, t) for zi in z])
            tail += abs(edge) * float(np.sum(qw * vals / nodes**2))
        return tail

    def interpolating_density(self, t: float) -> GridFn:
        """rho(., t) = theta(., t) theta*(., t); the off-window mass is obtained by
        integrating the anchored tail continuations of theta and theta*."""
        self._check_time(t)
        vals = self.theta_vector(t) * self.theta_star_vector(t)
        return GridFn(self.grid, vals, self._tail_mass_rho(t))

    # -- serialization -------------------------------------------------------
    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "grid": {"x_min": self.grid.x_min, "x_max": self.grid.x_max, "n": self.grid.n},
            "f": self.f.values.tolist(),
            "g": self.g.values.tolist(),
            "kernel": self.kernel_spec.to_dict(),
            "residual": self.residual,
            "iterations": self.iterations,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)


def solution_from_json(text: str) -> dict:
    """Parse a serialized solution document; validates the schema fields."""
    doc = json.loads(text)
    missing = {"version", "grid", "f", "g", "kernel", "residual", "iterations"} - doc.keys()
    if missing:
        raise ValueError(f"solution document missing fields: {sorted(missing)}")
    return doc


def solve_system(boundary: BoundaryData, operator: _OperatorBase,
                 tol_fit: float = 1e-8, max_iter: int = 500) -> SchroedingerSolution:
    """Iterative proportional fitting for the factorized system
    m(x, y) = f(x) k(x, 0, y, T) g(y) with prescribed marginals.

    Starts from g = 1, alternates exact marginal fits, and stops when the L1
    residual of both marginals drops below tol_fit.  The gauge is fixed by
    integrate(f) = 1 (profile tails included).
    """
    grid, T = boundary.grid, boundary.T
    w = grid.trapezoid_weights()
    a_l, a_r = boundary.rho0_tails
    b_l, b_r = boundary.rhoT_tails
    a_int = boundary.rho0.values * w
    b_int = boundary.rhoT.values * w

    g_l = g_r = 1.0
    g_int = np.ones(grid.n)
    f_l = f_r = 1.0
    f_int = np.ones(grid.n)
    residual = math.inf

    mg = operator.matvec_g(g_l, g_int, g_r, T)
    for iteration in range(1, max_iter + 1):
        ml, mi, mr = mg
        if ml <= 0 or mr <= 0 or np.min(mi) <= 0:
            raise SolverError(
                "nonpositive kernel application during IPF: grid window lost mass"
            )
        f_l, f_int, f_r = a_l / ml, a_int / mi, a_r / mr
        tl, ti, tr = operator.matvec_f(f_l, f_int, f_r, T)
        if tl <= 0 or tr <= 0 or np.min(ti) <= 0:
            raise SolverError(
                "nonpositive kernel application during IPF: grid window lost mass"
            )
        g_l, g_int, g_r = b_l / tl, b_int / ti, b_r / tr
        mg = operator.matvec_g(g_l, g_int, g_r, T)
        residual = float(np.sum(np.abs(f_int * mg[1] - a_int))
                         + abs(f_l * mg[0] - a_l) + abs(f_r * mg[2] - a_r))
        if residual <= tol_fit:
            break
    else:
        raise ConvergenceError(
            f"IPF did not reach tol_fit={tol_fit} in {max_iter} iterations "
            f"(last residual {residual:.3e})", residual)

    # gauge: integrate(f) = 1 with the anchored 1/x^2 profile tails
    f_mass = float(np.trapezoid(f_int, dx=grid.dx)
                   + f_l * abs(grid.x_min) + f_r * abs(grid.x_max))
    f_int, f_l, f_r = f_int / f_mass, f_l / f_mass, f_r / f_mass
    g_int, g_l, g_r = g_int * f_mass, g_l * f_mass, g_r * f_mass

    f_fn = GridFn(grid, f_int, f_l * abs(grid.x_min) + f_r * abs(grid.x_max))
    g_fn = GridFn(grid, g_int, 0.0)
    return SchroedingerSolution(f_fn, g_fn, (f_l, f_r), (g_l, g_r),
                                operator, boundary, residual, iteration)


# ---------------------------------------------------------------------------
# Closed-form Cauchy bridge
# ---------------------------------------------------------------------------

def bridge_density(y0: float, t0: float, zT: float, T: float, x, t):
    """Cauchy bridge pinned at (y0, t0) and (zT, T):
    rho(x, t) = k(y0, t0, x, t) k(x, t, zT, T) / k(y0, t0, zT, T)."""
    if not (t0 < t < T):
        raise ValueError(f"bridge requires t0 < t < T, got t0={t0}, t={t}, T={T}")
    num = cauchy_kernel(y0, t0, x, t) * cauchy_kernel(x, t, zT, T)
    return num / cauchy_kernel(y0, t0, zT, T)


def bridge_profile(grid: Grid1D, y0: float, t0: float, zT: float, T: float, t: float) -> GridFn:
    """Bridge density sampled on a grid; tail mass from the x^-4 far field."""
    vals = np.asarray(bridge_density(y0, t0, zT, T, grid.points, t))
    tail = (vals[0] * abs(grid.x_min) + vals[-1] * abs(grid.x_max)) / 3.0
    return GridFn(grid, vals, tail)
