"""Exact solution of the boost-to-maximum model (M2) along characteristics.

Given the histories of I/N and of the boundary inflow B, the immune density
satisfies ``Dr = -mu r`` along ``dz/dt = -g(z)`` with

    mu(t, z) = d - g'(z) + beta_boost * I(t) / N(t).

Points above the separating characteristic zeta(t) (the cohort that sat at
z_max at t = 0) carry B(t*) / g(z_max); points below carry the initial
density.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, HistoryError, PreInitialCharacteristic, QuadratureError
from .model import ModelParameters, Trajectory, flow_characteristic

ORACLE_QUAD_TOL = 1e-9


class History:
    """Dense piecewise-cubic (PCHIP) interpolant of a recorded scalar series."""

    def __init__(self, t, values):
        t = np.asarray(t, dtype=float)
        values = np.asarray(values, dtype=float)
        self.t0, self.t1 = float(t[0]), float(t[-1])
        if t.size == 1:
            self._f = lambda s, v=float(values[0]): np.full_like(np.asarray(s, dtype=float), v)
            self._F = lambda s, v=float(values[0]): v * (np.asarray(s, dtype=float) - self.t0)
        else:
            self._f = PchipInterpolator(t, values, extrapolate=False)
            self._F = self._f.antiderivative()

    @classmethod
    def constant(cls, value: float, t_end: float = math.inf):
        h = cls([0.0], [value])
        h.t1 = t_end
        return h

    def _check(self, *ts):
        span = max(1.0, abs(self.t1 - self.t0))
        for s in ts:
            if s < self.t0 - 1e-9 * span or s > self.t1 + 1e-9 * span:
                raise HistoryError(f"history covers [{self.t0}, {self.t1}], asked for t={s}")

    def __call__(self, s):
        self._check(float(np.min(s)), float(np.max(s)))
        out = self._f(np.clip(s, self.t0, self.t1))
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, a: float, b: float) -> float:
        self._check(a, b)
        a, b = (min(max(x, self.t0), self.t1) for x in (a, b))
        return float(self._F(b) - self._F(a))


@dataclass(eq=False)
class CharacteristicInputs:
    """Everything the characteristic formula needs besides (t, z).

    ``infected_fraction`` is the history of I/N, ``inflow`` the history of
    B(t) = gamma I + beta_boost I R / N.
    """

    params: ModelParameters
    decay: object
    psi: Callable = field(repr=False)
    infected_fraction: History = field(repr=False)
    inflow: History = field(repr=False)

    @classmethod
    def from_trajectory(cls, traj: Trajectory, params: ModelParameters, decay, psi):
        frac = traj.I / traj.N
        B = params.gamma * traj.I + params.boost_rate * traj.I * traj.R / traj.N
        return cls(params, decay, psi, History(traj.t, frac), History(traj.t, B))

    def separating_level(self, t: float) -> float:
        """zeta(t): where the cohort sitting at z_max at time 0 is now (z_min once it has left)."""
        p = self.params
        if t >= float(self.decay.passage_time(p.z_min, p.z_max)):
            return p.z_min
        return flow_characteristic(p.z_max, t, self.decay, p.z_min, p.z_max)


def backtrace_emission_time(t: float, z: float, decay, z_min: float, z_max: float,
                            tol: float = 1e-10) -> float:
    """Time t* at which the characteristic through (t, z) left z_max.

    Bisection on the elapsed time. Raises :class:`PreInitialCharacteristic`
    when that time would be negative (z lies below zeta(t)).
    """
    if not (z_min <= z <= z_max):
        raise DomainError(f"z={z} outside [{z_min}, {z_max}]")
    exit_time = float(decay.passage_time(z_min, z_max))
    if t < exit_time and flow_characteristic(z_max, t, decay, z_min, z_max) > z:
        raise PreInitialCharacteristic(f"(t={t}, z={z}) lies below the separating characteristic")
    lo, hi = 0.0, min(t, exit_time)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if flow_characteristic(z_max, mid, decay, z_min, z_max) > z:
            lo = mid
        else:
            hi = mid
    return t - 0.5 * (lo + hi)


def _waning_exponent(decay, d: float, z_start: float, t_start: float, t_end: float) -> float:
    """Integral of d - g'(phi(s)) along the characteristic leaving z_start at t_start."""
    if t_end <= t_start:
        return 0.0

    def integrand(s):
        zs = decay.flow(z_start, s - t_start)
        return d - float(decay.derivative(zs))

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(integrand, t_start, t_end, epsabs=ORACLE_QUAD_TOL,
                                    epsrel=ORACLE_QUAD_TOL, limit=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    return val


def exact_r_m2(t: float, z: float, inputs: CharacteristicInputs) -> float:
    """Density of immune hosts at level z and time t for model (M2)."""
    p = inputs.params
    g = inputs.decay
    try:
        t_star = backtrace_emission_time(t, z, g, p.z_min, p.z_max)
    except PreInitialCharacteristic:
        # trace back to the initial level; flow is exact for negative elapsed time
        z0 = float(g.flow(z, -t))
        exponent = _waning_exponent(g, p.d, z0, 0.0, t)
        exponent += p.boost_rate * inputs.infected_fraction.integral(0.0, t)
        return float(inputs.psi(z0)) * math.exp(-exponent)
    exponent = _waning_exponent(g, p.d, p.z_max, t_star, t)
    exponent += p.boost_rate * inputs.infected_fraction.integral(t_star, t)
    return inputs.inflow(t_star) / float(g(p.z_max)) * math.exp(-exponent)


def no_boost_exact(t: float, z: float, infected: History, psi: Callable,
                   params: ModelParameters, decay) -> float:
    """Characteristic solution without boosting: inflow gamma I, hazard d - g'."""
    p = params
    try:
        t_star = backtrace_emission_time(t, z, decay, p.z_min, p.z_max)
    except PreInitialCharacteristic:
        z0 = float(decay.flow(z, -t))
        return float(psi(z0)) * math.exp(-_waning_exponent(decay, p.d, z0, 0.0, t))
    inflow = p.gamma * infected(t_star)
    return inflow / float(decay(p.z_max)) * math.exp(-_waning_exponent(decay, p.d, p.z_max, t_star, t))


def constant_history_density(params: ModelParameters, decay, I0: float, N0: float | None = None,
                             S0: float | None = None, boost_to_max: bool = False):
    """Immune density left by a constant past (S0, I0) of infinite length.

    Without boosting the hazard is ``d``; with boost-to-maximum it is
    ``d + beta_boost I0 / N0`` and boosted hosts re-enter at z_max.  Returns
    ``(psi, R0, N0)``.  Give either ``N0`` (total population, e.g. N*) or
    ``S0``; with ``S0`` the total is found by fixed-point iteration.
    """
    if (N0 is None) == (S0 is None):
        raise ValueError("give exactly one of N0 or S0")
    p = params
    tau = float(decay.passage_time(p.z_min, p.z_max))

    def solve(N):
        lam = p.boost_rate * I0 / N if boost_to_max else 0.0
        k = p.d + lam
        c = -math.expm1(-k * tau) / k if k > 0 else tau
        R0 = p.gamma * I0 * c / (1.0 - lam * c)
        return lam, k, R0

    if N0 is None:
        N = S0 + I0
        for _ in range(200):
            _, _, R0 = solve(N)
            N_next = S0 + I0 + R0
            if abs(N_next - N) <= 1e-15 * N_next:
                break
            N = N_next
        N0 = S0 + I0 + solve(N)[2]
    lam, k, R0 = solve(N0)
    B = p.gamma * I0 + lam * R0

    def psi(z):
        z = np.asarray(z, dtype=float)
        age = decay.passage_time(z, p.z_max)
        return B / decay(z) * np.exp(-k * age)

    return psi, R0, N0
