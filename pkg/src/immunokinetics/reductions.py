"""Finite-dimensional reductions of the structured model and their integrators.

* the three-compartment method-of-lines chain R_F -> R_W -> R_C with boosting,
* the SIRS system with a constant delay (no boosting),
* the SIS-type delay system obtained from boost-to-maximum (N normalised to 1),
* classical RK4 for ODEs and a method-of-steps RK4 for constant-delay DDEs.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, HistoryError
from .model import ModelParameters

NORMALIZATION_TOL = 1e-9


class MolState(NamedTuple):
    S: float
    I: float
    R_F: float
    R_W: float
    R_C: float

    @property
    def N(self):
        return self.S + self.I + self.R_F + self.R_W + self.R_C


@dataclass(frozen=True)
class MolRates:
    """Waning rates out of the F, W and C compartments and the boosting split.

    ``theta`` is the probability that a boosted R_C host lands in R_W
    (otherwise R_F).
    """

    mu_F: float
    nu_W: float
    sigma_C: float
    theta: float = 0.5

    def __post_init__(self):
        if min(self.mu_F, self.nu_W, self.sigma_C) <= 0:
            raise ConfigError("MOL waning rates must be > 0")
        if not 0 <= self.theta <= 1:
            raise ConfigError("theta must lie in [0, 1]")

    @classmethod
    def from_decay(cls, decay, z_min: float, z_max: float, theta: float = 0.5):
        """Rates from g at z_F, z_W, z_min on four equally spaced points.

        With spacing h the rates are g(z_j) / h; on a unit-spaced grid they
        are g(z_j) itself.
        """
        z = np.linspace(z_min, z_max, 4)
        h = z[1] - z[0]
        return cls(float(decay(z[2])) / h, float(decay(z[1])) / h, float(decay(z[0])) / h, theta)


def mol_rhs(s: MolState, params: ModelParameters, birth, rates: MolRates) -> MolState:
    S, I, RF, RW, RC = s
    N = S + I + RF + RW + RC
    if not N > 0:
        raise ConfigError(f"total population must be positive, got N={N}")
    p = params
    force = p.beta * I / N
    boost = p.boost_rate * I / N
    th = rates.theta
    return MolState(
        birth(N) - force * S - p.d * S + rates.sigma_C * RC,
        force * S - (p.gamma + p.d + p.d_I) * I,
        p.gamma * I - (rates.mu_F + p.d) * RF + boost * ((1 - th) * RC + RW),
        rates.mu_F * RF - (rates.nu_W + p.d) * RW + boost * (th * RC - RW),
        rates.nu_W * RW - (rates.sigma_C + p.d) * RC - boost * RC,
    )


def mol_m2_rhs(s: MolState, params: ModelParameters, birth, rates: MolRates) -> MolState:
    """Chain for boost-to-maximum: every boosted host re-enters through the top boundary."""
    S, I, RF, RW, RC = s
    N = S + I + RF + RW + RC
    if not N > 0:
        raise ConfigError(f"total population must be positive, got N={N}")
    p = params
    force = p.beta * I / N
    boost = p.boost_rate * I / N
    top_inflow = p.gamma * I + boost * (RW + RC)
    return MolState(
        birth(N) - force * S - p.d * S + rates.sigma_C * RC,
        force * S - (p.gamma + p.d + p.d_I) * I,
        top_inflow - (rates.mu_F + p.d) * RF,
        rates.mu_F * RF - (rates.nu_W + p.d) * RW - boost * RW,
        rates.nu_W * RW - (rates.sigma_C + p.d) * RC - boost * RC,
    )


def sirs_dde_rhs(t: float, y, y_lag, params: ModelParameters, tau: float, birth) -> np.ndarray:
    """SIRS with constant immunity duration tau; y = (S, I, R), y_lag = y(t - tau)."""
    S, I, R = y
    I_lag = y_lag[1]
    p = params
    N = S + I + R
    infection = p.beta * S * I / N
    returning = p.gamma * I_lag * math.exp(-p.d * tau)
    return np.array([
        birth(N) - infection - p.d * S + returning,
        infection - (p.gamma + p.d + p.d_I) * I,
        p.gamma * I - returning - p.d * R,
    ])


def sis_dde_rhs(t: float, y, y_lag, params: ModelParameters, tau: float) -> np.ndarray:
    """SIS-type delay system for boost-to-maximum with N = 1.

    ``y = (S, I, A)`` where ``A(t)`` is the exposure integral of I over
    [t - tau, t], carried as a state with ``A' = I(t) - I(t - tau)``.
    """
    p = params
    if p.d_I != 0:
        raise ConfigError("the SIS delay system requires d_I = 0")
    S, I, A = y
    S_lag, I_lag = y_lag[0], y_lag[1]
    if abs(S + I) > 1 + NORMALIZATION_TOL or abs(S_lag + I_lag) > 1 + NORMALIZATION_TOL:
        raise ConfigError(f"state must be normalised to N = 1, got S + I = {S + I:.12g}")
    boost = p.boost_rate
    immune_lag = 1.0 - S_lag - I_lag
    returning = I_lag * (p.gamma + boost * immune_lag) * math.exp(-p.d * tau - boost * A)
    return np.array([
        p.d * (1.0 - S) - p.beta * I * S + returning,
        p.beta * I * S - (p.gamma + p.d) * I,
        I - I_lag,
    ])


# ---------------------------------------------------------------------------
# Integrators


@dataclass(eq=False)
class Solution:
    t: np.ndarray
    y: np.ndarray  # shape (n_samples, n_states)


def _rk4_step(f, t, y, h, k1=None):
    if k1 is None:
        k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_ode(rhs: Callable, y0, t_end: float, dt: float) -> Solution:
    """Classical fixed-step RK4; the last step is shortened to hit t_end."""
    if not dt > 0 or not t_end > 0:
        raise ConfigError("dt and t_end must be > 0")
    n = max(1, math.ceil(t_end / dt - 1e-9))
    y = np.asarray(y0, dtype=float)
    ts = np.empty(n + 1)
    ys = np.empty((n + 1, y.size))
    ts[0], ys[0] = 0.0, y
    t = 0.0
    for k in range(1, n + 1):
        h = t_end - t if k == n else dt
        y = _rk4_step(lambda s, x: np.asarray(rhs(s, x), dtype=float), t, y, h)
        t = t_end if k == n else k * dt
        ts[k], ys[k] = t, y
    return Solution(ts, ys)


class DdeHistory:
    """Sliding window of solution knots for lagged lookups.

    Knots are equally spaced by ``dt`` and stored with their derivatives so
    lagged values come from cubic Hermite interpolation (fourth order, like
    the RK4 steps that produced them).  Times at or before zero are served
    by the initial history function.
    """

    def __init__(self, tau: float, dt: float, initial: Callable):
        self.tau = tau
        self.dt = dt
        self.initial = initial
        self.knots = deque(maxlen=int(round(tau / dt)) + 3)

    def append(self, t: float, y: np.ndarray, f: np.ndarray):
        self.knots.append((t, y, f))

    def __call__(self, s: float) -> np.ndarray:
        if s <= 1e-12 * self.dt:
            if s < -self.tau * (1 + 1e-12):
                raise HistoryError(f"initial history covers [-tau, 0], asked for t={s}")
            return np.asarray(self.initial(min(s, 0.0)), dtype=float)
        if not self.knots:
            raise HistoryError("no solution knots stored yet")
        t_first = self.knots[0][0]
        pos = (s - t_first) / self.dt
        k = int(math.floor(pos + 1e-9))
        if k < 0 or k >= len(self.knots) or (k == len(self.knots) - 1 and pos - k > 1e-9):
            raise HistoryError(f"lagged time {s} not covered by stored knots")
        if k == len(self.knots) - 1:
            return self.knots[k][1]
        t0, y0, f0 = self.knots[k]
        _, y1, f1 = self.knots[k + 1]
        h = self.dt
        u = min(max((s - t0) / h, 0.0), 1.0)
        h00 = (1 + 2 * u) * (1 - u) ** 2
        h10 = u * (1 - u) ** 2
        h01 = u * u * (3 - 2 * u)
        h11 = u * u * (u - 1)
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def check_divides(tau: float, dt: float) -> int:
    m = tau / dt
    if not dt > 0 or abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 1:
        raise ConfigError(f"dt={dt!r} must divide tau={tau!r} exactly")
    return int(round(m))


def integrate_dde(rhs: Callable, history: Callable, tau: float, t_end: float, dt: float) -> Solution:
    """Method of steps with RK4 for ``y'(t) = rhs(t, y(t), y(t - tau))``.

    ``history(s)`` gives the state on [-tau, 0]; ``history(0)`` is the
    initial value.  ``dt`` must divide ``tau`` so every lagged stage time
    falls inside one stored step.
    """
    check_divides(tau, dt)
    if not t_end > 0:
        raise ConfigError("t_end must be > 0")
    n = max(1, math.ceil(t_end / dt - 1e-9))
    hist = DdeHistory(tau, dt, history)
    y = np.asarray(history(0.0), dtype=float)
    ts = np.empty(n + 1)
    ys = np.empty((n + 1, y.size))
    ts[0], ys[0] = 0.0, y

    def f(t, x):
        return np.asarray(rhs(t, x, hist(t - tau)), dtype=float)

    t = 0.0
    for k in range(1, n + 1):
        h = t_end - t if k == n else dt
        k1 = f(t, y)
        hist.append(t, y, k1)
        y = _rk4_step(f, t, y, h, k1)
        t = t_end if k == n else k * dt
        ts[k], ys[k] = t, y
    return Solution(ts, ys)


def constant_history(y0) -> Callable:
    y0 = np.asarray(y0, dtype=float)
    return lambda s: y0
