"""The nonlinear part Q of the abstract Cauchy problem, its directional
derivative DQ(x; w) in closed form, and finite-difference checks of it.

Points live in R x R x L1(z_min, z_max); the L1 slot is a vector of cell
values on a shared grid and every integral is the midpoint cell sum, so Q
and DQ see the same quadrature.  The kernel integral applied to a grid
function uses the same exchange operator as the simulator, with the atom
at z_max routed into the top cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DomainError
from .model import BoostingKernel, ImmunityGrid, ModelParameters, exchange_operator

DEGENERACY_TOL = 1e-14


@dataclass(eq=False)
class AbstractPoint:
    x1: float
    x2: float
    x3: np.ndarray
    grid: ImmunityGrid

    @property
    def integral(self) -> float:
        return float(self.x3 @ self.grid.widths)

    @property
    def hat(self) -> float:
        return self.x1 + self.x2 + self.integral

    def norm(self) -> float:
        return abs(self.x1) + abs(self.x2) + float(np.abs(self.x3) @ self.grid.widths)

    def __add__(self, other: "AbstractPoint") -> "AbstractPoint":
        return AbstractPoint(self.x1 + other.x1, self.x2 + other.x2, self.x3 + other.x3, self.grid)

    def __sub__(self, other: "AbstractPoint") -> "AbstractPoint":
        return AbstractPoint(self.x1 - other.x1, self.x2 - other.x2, self.x3 - other.x3, self.grid)

    def __mul__(self, a: float) -> "AbstractPoint":
        return AbstractPoint(a * self.x1, a * self.x2, a * self.x3, self.grid)

    __rmul__ = __mul__


class KernelIntegral:
    """Grid version of (K f)(z) = integral over v <= z of f(v) p(z, v)."""

    def __init__(self, kernel: BoostingKernel, grid: ImmunityGrid):
        self.grid = grid
        self.M = exchange_operator(kernel, grid).matrix()

    def __call__(self, f: np.ndarray) -> np.ndarray:
        w = self.grid.widths
        return self.M @ (f * w) / w


def _checked_hat(x: AbstractPoint) -> float:
    xh = x.hat
    if abs(xh) < DEGENERACY_TOL * max(x.norm(), 1e-300):
        raise DegeneracyError(f"x_hat = {xh:.3e} vanishes relative to ||x|| = {x.norm():.3e}")
    return xh


def _kernel_integral(k, grid) -> KernelIntegral:
    return k if isinstance(k, KernelIntegral) else KernelIntegral(k, grid)


def eval_q(x: AbstractPoint, params: ModelParameters, birth, kernel) -> AbstractPoint:
    """Q1 = b(x_hat) - beta x1 x2 / x_hat, Q2 = beta x1 x2 / x_hat,
    Q3 = beta_boost x2 / x_hat * (K x3 - x3)."""
    K = _kernel_integral(kernel, x.grid)
    xh = _checked_hat(x)
    incidence = params.beta * x.x1 * x.x2 / xh
    q3 = params.boost_rate * x.x2 / xh * (K(x.x3) - x.x3)
    return AbstractPoint(birth(xh) - incidence, incidence, q3, x.grid)


def eval_dq(x: AbstractPoint, w: AbstractPoint, params: ModelParameters, birth, kernel) -> AbstractPoint:
    """Directional derivative of Q at x along w from the closed-form pieces.

    DQ1 = P1 - P2, DQ2 = P2, DQ3 = -P3 + P4 with

    P1 = b'(x_hat) w_hat
    P2 = beta [x2 (x_hat - x1) w1 + x1 (x_hat - x2) w2 - x1 x2 int w3] / x_hat^2
    P3 = beta_b [-x2 x3 w1 + x3 (x_hat - x2) w2 - x2 x3 int w3] / x_hat^2 + beta_b x2 w3 / x_hat
    P4 = same as P3 with x3 -> K x3 and w3 -> K w3
    """
    if w.grid is not x.grid and not np.array_equal(w.grid.edges, x.grid.edges):
        raise DomainError("x and w must live on the same grid")
    K = _kernel_integral(kernel, x.grid)
    xh = _checked_hat(x)
    xh2 = xh * xh
    x1, x2, x3 = x.x1, x.x2, x.x3
    w1, w2, w3 = w.x1, w.x2, w.x3
    int_w3 = w.integral
    w_hat = w1 + w2 + int_w3
    b = params.beta
    bb = params.boost_rate

    p1 = birth.derivative(xh) * w_hat
    p2 = b * (x2 * (xh - x1) * w1 + x1 * (xh - x2) * w2 - x1 * x2 * int_w3) / xh2

    def piece(f, g):
        return bb * ((-x2 * w1 + (xh - x2) * w2 - x2 * int_w3) * f / xh2 + x2 * g / xh)

    p3 = piece(x3, w3)
    p4 = piece(K(x3), K(w3))
    return AbstractPoint(p1 - p2, p2, p4 - p3, x.grid)


def fd_directional(x: AbstractPoint, w: AbstractPoint, h: float, params, birth, kernel,
                   central: bool = False) -> AbstractPoint:
    """(Q(x + h w) - Q(x)) / h, or the symmetric quotient when ``central``."""
    if not h > 0:
        raise ValueError("h must be > 0")
    K = _kernel_integral(kernel, x.grid)
    if central:
        return (eval_q(x + h * w, params, birth, K) - eval_q(x - h * w, params, birth, K)) * (0.5 / h)
    return (eval_q(x + h * w, params, birth, K) - eval_q(x, params, birth, K)) * (1.0 / h)


DEFAULT_STEPS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def fd_errors(x, w, params, birth, kernel, steps=DEFAULT_STEPS, central=False) -> np.ndarray:
    K = _kernel_integral(kernel, x.grid)
    dq = eval_dq(x, w, params, birth, K)
    return np.array([(fd_directional(x, w, h, params, birth, K, central) - dq).norm() for h in steps])


def loglog_slope(steps, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


def random_point(rng: np.random.Generator, grid: ImmunityGrid, scale: float = 1.0) -> AbstractPoint:
    """Smooth random point with positive mass: low-order cosine series plus offset."""
    z = (grid.centers - grid.z_min) / (grid.z_max - grid.z_min)
    coeffs = rng.normal(size=4) / np.arange(1, 5)
    x3 = 1.0 + 0.5 * sum(c * np.cos(np.pi * k * z) for k, c in enumerate(coeffs, start=1))
    x3 = np.abs(x3) * rng.uniform(0.2, 1.0)
    return AbstractPoint(scale * rng.uniform(0.5, 2.0), scale * rng.uniform(0.2, 1.0),
                         scale * x3 / (grid.z_max - grid.z_min), grid)


def random_direction(rng: np.random.Generator, grid: ImmunityGrid) -> AbstractPoint:
    z = (grid.centers - grid.z_min) / (grid.z_max - grid.z_min)
    coeffs = rng.normal(size=5) / np.arange(1, 6)
    w3 = sum(c * np.cos(np.pi * k * z) for k, c in enumerate(coeffs))
    return AbstractPoint(rng.normal(), rng.normal(), w3 / (grid.z_max - grid.z_min), grid)


@dataclass(frozen=True)
class SlopeResult:
    slopes: np.ndarray
    linearity_error: float

    @property
    def worst_slope_deviation(self) -> float:
        return float(np.max(np.abs(self.slopes - 1.0)))


def check_operator(params, birth, kernel, grid: ImmunityGrid, seed: int = 0, n_pairs: int = 20,
                   steps=DEFAULT_STEPS) -> SlopeResult:
    """Seeded finite-difference slope test of DQ plus a linearity-in-w check."""
    rng = np.random.default_rng(seed)
    K = KernelIntegral(kernel, grid)
    slopes = []
    lin = 0.0
    for _ in range(n_pairs):
        x = random_point(rng, grid)
        w = random_direction(rng, grid)
        slopes.append(loglog_slope(steps, fd_errors(x, w, params, birth, K, steps)))
        w2 = random_direction(rng, grid)
        a = rng.normal()
        lhs = eval_dq(x, a * w + w2, params, birth, K)
        rhs = a * eval_dq(x, w, params, birth, K) + eval_dq(x, w2, params, birth, K)
        scale = max(lhs.norm(), rhs.norm(), 1e-300)
        lin = max(lin, (lhs - rhs).norm() / scale)
    return SlopeResult(np.asarray(slopes), lin)
