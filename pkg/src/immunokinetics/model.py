"""Domain types and shared primitives for the immunity-structured SIRS model.

Immunity decays deterministically, ``dz/dt = -g(z)``, from ``z_max`` towards
``z_min``; a host reaching ``z_min`` becomes susceptible again.  Contact with
infectives boosts a host at level ``v`` to a higher level drawn from

    p(z, v) = c_max(v) * [atom at z_max] + c0(v) * p0(z, v) + c1(v) * [atom at v]

with ``c1 = 1 - c_max - c0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import (
    ConfigError,
    DomainError,
    InvalidKernelError,
    NoEquilibriumError,
    QuadratureError,
)

QUAD_RTOL = 1e-10


@dataclass(frozen=True)
class ModelParameters:
    beta: float
    gamma: float
    d: float
    d_I: float
    z_min: float
    z_max: float
    boost_contact_multiplier: float = 1.0

    def __post_init__(self):
        for name in ("beta", "gamma", "d", "d_I", "z_min", "z_max", "boost_contact_multiplier"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        for name in ("beta", "gamma", "d"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.d_I < 0:
            raise ConfigError(f"d_I must be >= 0, got {self.d_I}")
        if not 0 <= self.z_min < self.z_max:
            raise ConfigError(f"need 0 <= z_min < z_max, got [{self.z_min}, {self.z_max}]")
        if self.boost_contact_multiplier < 0:
            raise ConfigError("boost_contact_multiplier must be >= 0")

    @property
    def boost_rate(self) -> float:
        """Contact rate driving immune boosting (multiplier times beta)."""
        return self.boost_contact_multiplier * self.beta


# ---------------------------------------------------------------------------
# Birth functions


@dataclass(frozen=True)
class BevertonHolt:
    """b(N) = rho * N / (1 + N / K)."""

    rho: float
    K: float
    family = "beverton_holt"

    def __call__(self, N):
        N = np.asarray(N, dtype=float)
        out = self.rho * N / (1.0 + N / self.K)
        return float(out) if out.ndim == 0 else out

    def derivative(self, N):
        N = np.asarray(N, dtype=float)
        out = self.rho / (1.0 + N / self.K) ** 2
        return float(out) if out.ndim == 0 else out

    def closed_form_equilibrium(self, d: float) -> float | None:
        if self.rho <= d:
            return None
        return self.K * (self.rho / d - 1.0)


class TabulatedBirth:
    """Monotone C1 (PCHIP) interpolation of sampled birth rates.

    Beyond the last sample the rate is held at its final value.
    """

    family = "tabulated"

    def __init__(self, N, b):
        N = np.asarray(N, dtype=float)
        b = np.asarray(b, dtype=float)
        if N.ndim != 1 or N.shape != b.shape or N.size < 2:
            raise ConfigError("tabulated birth needs matching 1-D arrays N, b with >= 2 samples")
        if np.any(np.diff(N) <= 0):
            raise ConfigError("tabulated birth samples N must be strictly increasing")
        self.N = N
        self.b = b
        self._interp = PchipInterpolator(N, b, extrapolate=False)
        self._slope = self._interp.derivative()

    def __call__(self, N):
        N = np.asarray(N, dtype=float)
        clipped = np.clip(N, self.N[0], self.N[-1])
        out = self._interp(clipped)
        return float(out) if out.ndim == 0 else out

    def derivative(self, N):
        N = np.asarray(N, dtype=float)
        out = np.where(N > self.N[-1], 0.0, self._slope(np.clip(N, self.N[0], self.N[-1])))
        return float(out) if out.ndim == 0 else out

    def closed_form_equilibrium(self, d: float) -> float | None:
        return None

    def __repr__(self):
        return f"TabulatedBirth(n_samples={self.N.size})"


# ---------------------------------------------------------------------------
# Decay speeds.  Each family knows its exact characteristic flow and the
# passage time between two levels.


@dataclass(frozen=True)
class ConstantDecay:
    g0: float
    family = "constant"

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.full_like(z, self.g0)
        return float(out) if out.ndim == 0 else out

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        return float(out) if out.ndim == 0 else out

    def flow(self, z0, elapsed):
        return z0 - self.g0 * elapsed

    def passage_time(self, z_lo, z_hi):
        return (z_hi - z_lo) / self.g0


@dataclass(frozen=True)
class AffineDecay:
    """g(z) = a * z + c."""

    a: float
    c: float
    family = "affine"

    def __call__(self, z):
        out = self.a * np.asarray(z, dtype=float) + self.c
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        out = np.full_like(z, self.a)
        return float(out) if out.ndim == 0 else out

    def flow(self, z0, elapsed):
        if self.a == 0:
            return z0 - self.c * elapsed
        shift = self.c / self.a
        return (z0 + shift) * np.exp(-self.a * elapsed) - shift

    def passage_time(self, z_lo, z_hi):
        if self.a == 0:
            return (z_hi - z_lo) / self.c
        return np.log((self.a * z_hi + self.c) / (self.a * z_lo + self.c)) / self.a


@dataclass(frozen=True)
class PowerDecay:
    """g(z) = a * z**q."""

    a: float
    q: float
    family = "power"

    def __call__(self, z):
        out = self.a * np.power(np.asarray(z, dtype=float), self.q)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        out = self.a * self.q * np.power(z, self.q - 1.0) if self.q != 0 else np.zeros_like(z)
        return float(out) if np.ndim(out) == 0 else out

    def flow(self, z0, elapsed):
        if self.q == 1:
            return z0 * np.exp(-self.a * elapsed)
        base = np.power(z0, 1.0 - self.q) - (1.0 - self.q) * self.a * elapsed
        with np.errstate(invalid="ignore"):
            return np.power(base, 1.0 / (1.0 - self.q))

    def passage_time(self, z_lo, z_hi):
        if self.q == 1:
            return np.log(z_hi / z_lo) / self.a
        e = 1.0 - self.q
        return (np.power(z_hi, e) - np.power(z_lo, e)) / (e * self.a)


# ---------------------------------------------------------------------------
# Boosting kernel


@dataclass(frozen=True)
class UniformP0:
    """Uniform redistribution density on (v, z_max]."""

    family = "uniform"

    def pdf(self, z, v, z_max):
        width = z_max - v
        return np.where((z > v) & (z <= z_max), 1.0 / width, 0.0)

    def cdf(self, z, v, z_max):
        width = z_max - v
        if width <= 0:
            return np.where(np.asarray(z) >= z_max, 1.0, 0.0)
        return np.clip((np.asarray(z, dtype=float) - v) / width, 0.0, 1.0)


@dataclass(frozen=True)
class TruncatedExponentialP0:
    """Exponential density with the given rate, truncated to (v, z_max]."""

    rate: float
    family = "truncated_exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ConfigError("truncated_exponential rate must be > 0")

    def pdf(self, z, v, z_max):
        norm = -np.expm1(-self.rate * (z_max - v))
        dens = self.rate * np.exp(-self.rate * (np.asarray(z, dtype=float) - v)) / norm
        return np.where((z > v) & (z <= z_max), dens, 0.0)

    def cdf(self, z, v, z_max):
        width = z_max - v
        if width <= 0:
            return np.where(np.asarray(z) >= z_max, 1.0, 0.0)
        s = np.clip(np.asarray(z, dtype=float) - v, 0.0, width)
        return np.expm1(-self.rate * s) / np.expm1(-self.rate * width)


def _coefficient(spec, z_min: float, z_max: float) -> Callable:
    """Turn a constant, an (at_z_min, at_z_max) pair or a callable into c(z)."""
    if callable(spec):
        return spec
    if np.ndim(spec) == 0:
        value = float(spec)
        return lambda z: np.full_like(np.asarray(z, dtype=float), value)
    lo, hi = (float(v) for v in spec)
    span = z_max - z_min
    return lambda z: lo + (hi - lo) * (np.asarray(z, dtype=float) - z_min) / span


@dataclass(frozen=True, eq=False)
class BoostingKernel:
    z_min: float
    z_max: float
    c_max: Callable = field(repr=False)
    c0: Callable = field(repr=False)
    p0: object = field(default_factory=UniformP0)
    label: str = "custom"

    @classmethod
    def from_coefficients(cls, z_min, z_max, c_max, c0, p0=None, label="custom"):
        """Build from constants, (value at z_min, value at z_max) pairs, or callables."""
        return cls(
            z_min,
            z_max,
            _coefficient(c_max, z_min, z_max),
            _coefficient(c0, z_min, z_max),
            p0 if p0 is not None else UniformP0(),
            label,
        )

    @classmethod
    def boost_to_max(cls, z_min, z_max):
        return cls.from_coefficients(z_min, z_max, 1.0, 0.0, label="boost_to_max")

    @classmethod
    def no_boost(cls, z_min, z_max):
        return cls.from_coefficients(z_min, z_max, 0.0, 0.0, label="no_boost")

    def c1(self, z):
        return 1.0 - self.c_max(z) - self.c0(z)

    def is_no_boost(self, n_probe: int = 257) -> bool:
        z = np.linspace(self.z_min, self.z_max, n_probe)
        return bool(np.all(self.c_max(z) == 0) and np.all(self.c0(z) == 0))


# ---------------------------------------------------------------------------
# Grid, state, trajectory


@dataclass(frozen=True, eq=False)
class ImmunityGrid:
    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ConfigError("grid needs at least two edges")
        if np.any(np.diff(edges) <= 0):
            raise ConfigError("grid edges must be strictly increasing")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def uniform(cls, z_min: float, z_max: float, n_cells: int) -> "ImmunityGrid":
        if int(n_cells) < 1:
            raise ConfigError("n_cells must be >= 1")
        return cls(np.linspace(z_min, z_max, int(n_cells) + 1))

    @property
    def n_cells(self) -> int:
        return self.edges.size - 1

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def z_min(self) -> float:
        return float(self.edges[0])

    @property
    def z_max(self) -> float:
        return float(self.edges[-1])

    def cell_averages(self, density: Callable) -> np.ndarray:
        """Cell averages of a density by 3-point Gauss-Legendre per cell."""
        nodes, weights = np.polynomial.legendre.leggauss(3)
        c, h = self.centers, self.widths
        pts = c[:, None] + 0.5 * h[:, None] * nodes[None, :]
        vals = np.asarray(density(pts), dtype=float)
        vals = np.broadcast_to(vals, pts.shape)
        return 0.5 * vals @ weights


@dataclass(eq=False)
class State:
    S: float
    I: float
    r: np.ndarray
    grid: ImmunityGrid

    @property
    def R(self) -> float:
        return float(self.r @ self.grid.widths)

    @property
    def N(self) -> float:
        return self.S + self.I + self.R


@dataclass(eq=False)
class Trajectory:
    """Sampled run of the structured model.

    ``r`` has one row per sample.  ``Lambda`` is the immunity-loss flux
    g(z_min) r(t, z_min) and ``B`` the inflow at z_max.
    """

    t: np.ndarray
    S: np.ndarray
    I: np.ndarray
    r: np.ndarray
    Lambda: np.ndarray
    B: np.ndarray
    grid: ImmunityGrid
    dt: float
    model: str

    @property
    def R(self) -> np.ndarray:
        return self.r @ self.grid.widths

    @property
    def N(self) -> np.ndarray:
        return self.S + self.I + self.R

    def __len__(self):
        return self.t.size

    def state(self, k: int) -> State:
        return State(float(self.S[k]), float(self.I[k]), self.r[k].copy(), self.grid)


# ---------------------------------------------------------------------------
# Validation


class AssumptionCheck(NamedTuple):
    name: str
    passed: bool
    message: str
    witness: float | None = None


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    n_star: float | None = None
    b_plus: float | None = None
    K_g: float | None = None

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def add(self, name, passed, message, witness=None):
        self.checks.append(AssumptionCheck(name, bool(passed), message, witness))

    def __str__(self):
        lines = []
        for c in self.checks:
            mark = "ok  " if c.passed else "FAIL"
            wit = "" if c.witness is None else f" (witness {c.witness:.6g})"
            lines.append(f"[{mark}] {c.name}: {c.message}{wit}")
        return "\n".join(lines)


def _finite_or_raise(values, what: str, where: np.ndarray, label: str):
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        at = float(np.asarray(where).ravel()[np.argmax(bad.ravel())])
        raise InvalidKernelError(f"invalid kernel: {what} is not finite at {label}={at:.6g}")
    return values


def locate_n_star(birth, d: float, n_max: float = 1e15, n_min: float = 1e-15) -> float:
    """Root of b(N) = d N: geometric bracketing from N = 1, then bisection."""
    f = lambda N: birth(N) - d * N  # noqa: E731
    lo = hi = 1.0
    if f(1.0) > 0:
        while f(hi) > 0:
            lo, hi = hi, hi * 2.0
            if hi > n_max:
                raise NoEquilibriumError(f"no equilibrium: b(N) > dN up to N={n_max:g}")
    else:
        while f(lo) <= 0:
            hi, lo = lo, lo / 2.0
            if lo < n_min:
                raise NoEquilibriumError("no equilibrium: no N* exists (b(N) <= dN for all N tested)")
    # invariant: f(lo) > 0 >= f(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def validate_model(params: ModelParameters, birth, decay, kernel: BoostingKernel,
                   n_probe: int = 1001) -> ValidationReport:
    """Check the birth, decay and boosting ingredients against the model assumptions.

    Failed checks are reported with a witness; non-finite evaluations raise
    :class:`InvalidKernelError`.
    """
    rep = ValidationReport()
    d = params.d

    # Assumption 1: b(0) = 0, b >= 0, bounded.
    N_probe = np.concatenate(([0.0], np.logspace(-6, 12, n_probe)))
    bN = _finite_or_raise(birth(N_probe), "birth function", N_probe, "N")
    rep.add("birth_zero", bN[0] == 0.0, "b(0) = 0" if bN[0] == 0 else f"b(0) = {bN[0]:.6g} != 0", 0.0)
    neg = bN < 0
    rep.add("birth_nonnegative", not neg.any(), "b(N) >= 0",
            float(N_probe[np.argmax(neg)]) if neg.any() else None)
    rep.b_plus = float(bN.max())
    rep.add("birth_bounded", math.isfinite(rep.b_plus), f"b_plus ~ {rep.b_plus:.6g}")

    # Assumption 2: a unique positive crossing with b'(N*) < d.
    try:
        n_star = locate_n_star(birth, d)
    except NoEquilibriumError:
        rep.add("n_star_exists", False, "no N* exists with b(N*) = d N*")
    else:
        rep.n_star = n_star
        rep.add("n_star_exists", True, f"N* = {n_star:.12g}", n_star)
        gap = bN - d * N_probe
        away = np.abs(N_probe - n_star) > 1e-6 * n_star
        below = (N_probe > 0) & (N_probe < n_star) & away
        above = (N_probe > n_star) & away
        bad_below = below & (gap <= 0)
        bad_above = above & (gap >= 0)
        if bad_below.any():
            rep.add("birth_exceeds_death_below", False, "b(N) <= dN below N*",
                    float(N_probe[np.argmax(bad_below)]))
        else:
            rep.add("birth_exceeds_death_below", True, "b(N) > dN on (0, N*)")
        if bad_above.any():
            rep.add("death_exceeds_birth_above", False, "b(N) >= dN above N*",
                    float(N_probe[np.argmax(bad_above)]))
        else:
            rep.add("death_exceeds_birth_above", True, "b(N) < dN on (N*, inf)")
        h = 1e-6 * n_star
        slope = (birth(n_star + h) - birth(n_star - h)) / (2 * h)
        rep.add("slope_at_n_star", slope < d, f"b'(N*) = {slope:.6g} vs d = {d:.6g}", n_star)

    # Assumption 3: 0 < g <= K_g on the domain.
    z = np.linspace(params.z_min, params.z_max, n_probe)
    gz = _finite_or_raise(decay(z), "decay speed g", z, "z")
    _finite_or_raise(decay.derivative(z), "decay derivative g'", z, "z")
    if np.any(gz <= 0):
        rep.add("decay_positive", False, "g must be strictly positive", float(z[np.argmax(gz <= 0)]))
    else:
        rep.add("decay_positive", True, "g > 0 on [z_min, z_max]")
    rep.K_g = float(gz.max())

    # Kernel: coefficients in [0, 1] with c_max + c0 <= 1, p0 normalised.
    cm = _finite_or_raise(kernel.c_max(z), "c_max", z, "z")
    c0 = _finite_or_raise(kernel.c0(z), "c0", z, "z")
    tol = 1e-12
    for name, vals in (("c_max", cm), ("c0", c0)):
        bad = (vals < -tol) | (vals > 1 + tol)
        rep.add(f"{name}_in_unit_interval", not bad.any(), f"{name} in [0, 1]",
                float(z[np.argmax(bad)]) if bad.any() else None)
    over = cm + c0 > 1 + tol
    rep.add("kernel_mass", not over.any(), "c_max + c0 <= 1",
            float(z[np.argmax(over)]) if over.any() else None)
    worst = 0.0
    for v in np.linspace(params.z_min, params.z_max, 7)[:-1]:
        mass, _ = integrate.quad(lambda u: float(kernel.p0.pdf(u, v, params.z_max)), v, params.z_max,
                                 epsabs=1e-12, epsrel=1e-12, limit=200)
        worst = max(worst, abs(mass - 1.0))
    rep.add("p0_normalised", worst < 1e-8, f"max |int p0 - 1| = {worst:.2e}")
    return rep


# ---------------------------------------------------------------------------
# Transit time, characteristic flow, kernel masses


def transit_time(decay, z_min: float, z_max: float) -> float:
    """Time for immunity to wane from z_max to z_min without boosting."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            T, err = integrate.quad(lambda z: 1.0 / decay(z), z_min, z_max,
                                    epsabs=0.0, epsrel=QUAD_RTOL, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"transit time quadrature did not converge: {exc}") from exc
    if not (math.isfinite(T) and T > 0):
        raise QuadratureError(f"transit time is not a positive number: {T}")
    return T


def flow_characteristic(z0: float, elapsed: float, decay, z_min: float, z_max: float) -> float:
    """Immunity level reached from ``z0`` after ``elapsed`` time of waning."""
    span = z_max - z_min
    if not (z_min - 1e-12 * span <= z0 <= z_max + 1e-12 * span):
        raise DomainError(f"z0={z0} outside [{z_min}, {z_max}]")
    if elapsed < 0:
        raise DomainError(f"elapsed time must be >= 0, got {elapsed}")
    z = float(decay.flow(z0, elapsed))
    if not math.isfinite(z) or z < z_min - 1e-9 * span:
        raise DomainError(f"characteristic from z0={z0} leaves the domain before elapsed={elapsed}")
    return min(max(z, z_min), z0)


@dataclass(frozen=True, eq=False)
class ExchangeOperator:
    """Cell-to-cell redistribution of boosted mass on a grid.

    Column ``j`` describes where unit mass boosted out of cell ``j`` lands:
    ``to_top[j]`` goes to z_max (the atom), ``continuous[:, j]`` is spread by
    p0, ``stay[j]`` remains in place.  Every column sums to one.
    """

    to_top: np.ndarray
    continuous: np.ndarray
    stay: np.ndarray

    def matrix(self) -> np.ndarray:
        M = self.continuous + np.diag(self.stay)
        M[-1, :] += self.to_top
        return M


def kernel_cell_masses(kernel: BoostingKernel, z_tilde: float, grid: ImmunityGrid):
    """Split the boosting kernel at ``z_tilde`` into grid-cell probabilities.

    Returns ``(mass_at_zmax, per_cell_masses, mass_stay)``.
    """
    if not (grid.z_min <= z_tilde <= grid.z_max):
        raise DomainError(f"z_tilde={z_tilde} outside [{grid.z_min}, {grid.z_max}]")
    cm = float(kernel.c_max(z_tilde))
    c0 = float(kernel.c0(z_tilde))
    if cm + c0 > 1 + 1e-12 or cm < -1e-12 or c0 < -1e-12:
        raise InvalidKernelError(f"kernel invariant broken at z={z_tilde}: c_max={cm}, c0={c0}")
    cdf = kernel.p0.cdf(grid.edges, z_tilde, grid.z_max)
    per_cell = c0 * np.diff(cdf)
    return cm, per_cell, 1.0 - cm - c0


def exchange_operator(kernel: BoostingKernel, grid: ImmunityGrid) -> ExchangeOperator:
    n = grid.n_cells
    to_top = np.empty(n)
    stay = np.empty(n)
    cont = np.empty((n, n))
    for j, zj in enumerate(grid.centers):
        to_top[j], cont[:, j], stay[j] = kernel_cell_masses(kernel, zj, grid)
    return ExchangeOperator(to_top, cont, stay)
