"""Explicit upwind finite-volume solver for the structured model (M1) and its
boost-to-maximum special case (M2).

Immunity is transported towards ``z_min`` so the upwind value at every cell
edge is the cell above it.  Boosted mass is moved between cells with the
precomputed :class:`~immunokinetics.model.ExchangeOperator`; the atom at
``z_max`` and any continuous mass landing in the top cell enter through the
top-edge flux B(t).  All update coefficients are nonnegative for
``dt <= cfl_dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, PopulationExtinctionError, SchemeError
from .model import (
    BoostingKernel,
    ExchangeOperator,
    ImmunityGrid,
    ModelParameters,
    State,
    Trajectory,
    exchange_operator,
)

CFL_SAFETY = 0.9
NEGATIVITY_TOL = 1e-12
EXTINCTION_TOL = 1e-12
MODELS = ("m1", "m2")


@dataclass(eq=False)
class SimulationConfig:
    params: ModelParameters
    birth: object
    decay: object
    kernel: BoostingKernel
    grid: ImmunityGrid
    t_end: float
    S0: float
    I0: float
    psi: Callable = field(repr=False)
    dt: float | str = "auto"
    model: str = "m1"
    output_stride: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if not self.t_end > 0:
            raise ConfigError("t_end must be > 0")
        if self.S0 < 0 or self.I0 < 0:
            raise ConfigError("initial S and I must be nonnegative")
        if int(self.output_stride) < 1:
            raise ConfigError("output_stride must be >= 1")

    def effective_kernel(self) -> BoostingKernel:
        if self.model == "m2":
            return BoostingKernel.boost_to_max(self.params.z_min, self.params.z_max)
        return self.kernel

    def time_step(self) -> float:
        limit = cfl_dt(self.grid, self.decay, self.params)
        if self.dt == "auto":
            return limit
        dt = float(self.dt)
        if not dt > 0:
            raise ConfigError("dt must be > 0")
        if dt > limit * (1 + 1e-12):
            raise ConfigError(f"dt exceeds CFL limit: dt={dt:.6g} > {limit:.6g}")
        return dt

    def initial_state(self) -> State:
        r = self.grid.cell_averages(self.psi)
        if np.any(r < 0):
            raise ConfigError("initial density psi must be nonnegative")
        state = State(float(self.S0), float(self.I0), r, self.grid)
        if not state.N > 0:
            raise ConfigError("initial population must be positive")
        return state


def cfl_dt(grid: ImmunityGrid, decay, params: ModelParameters) -> float:
    """Largest explicit step keeping every update coefficient nonnegative.

    Transport and the loss rates share one budget:
    ``dt * (max g / min dz + d + beta * max(1, multiplier) + gamma + d_I) <= 0.9``.
    """
    z = np.concatenate((grid.edges, np.linspace(grid.z_min, grid.z_max, 1001)))
    transport = float(np.max(decay(z))) / float(np.min(grid.widths))
    rates = params.d + params.beta * max(1.0, params.boost_contact_multiplier) + params.gamma + params.d_I
    return CFL_SAFETY / (transport + rates)


class _Stepper:
    """Precomputed grid quantities for repeated explicit steps."""

    def __init__(self, cfg: SimulationConfig):
        self.cfg = cfg
        p = cfg.params
        self.p = p
        self.widths = cfg.grid.widths
        self.g_edges = np.asarray(cfg.decay(cfg.grid.edges), dtype=float)
        ex: ExchangeOperator = exchange_operator(cfg.effective_kernel(), cfg.grid)
        self.to_top = ex.to_top
        self.stay = ex.stay
        self.cont = ex.continuous
        self.has_cont = bool(np.any(self.cont))
        self.has_boost = bool(np.any(self.to_top) or self.has_cont)

    def fluxes(self, S, I, r):
        """Return (N, boosting hazard, edge fluxes F_0..F_M, continuous inflow)."""
        p = self.p
        N = S + I + r @ self.widths
        lam = p.boost_rate * I / N
        F = np.empty(r.size + 1)
        F[:-1] = self.g_edges[:-1] * r
        mass = r * self.widths
        inflow = self.cont @ mass if self.has_cont else None
        top = p.gamma * I
        if self.has_boost:
            top += lam * (self.to_top @ mass)
            if inflow is not None:
                top += lam * inflow[-1]
        F[-1] = top
        return N, lam, F, inflow

    def step(self, S, I, r, dt, n_floor):
        p = self.p
        N, lam, F, inflow = self.fluxes(S, I, r)
        if N <= n_floor:
            raise PopulationExtinctionError(f"population extinction: N={N:.3e}")
        infection = p.beta * S * I / N
        Lam = F[0]
        S_new = S + dt * (self.cfg.birth(N) - infection - p.d * S + Lam)
        I_new = I + dt * (infection - (p.gamma + p.d + p.d_I) * I)
        r_new = r + dt / self.widths * (F[1:] - F[:-1]) - dt * p.d * r
        if self.has_boost:
            # the stay fraction cancels part of the boosting loss exactly
            r_new -= dt * lam * (1.0 - self.stay) * r
            if inflow is not None:
                src = inflow.copy()
                src[-1] = 0.0  # top-cell share already entered through F[-1]
                r_new += dt * lam * src / self.widths
        scale = np.max(np.abs(r_new)) if r_new.size else 0.0
        if r_new.size and r_new.min() < -NEGATIVITY_TOL * scale:
            k = int(np.argmin(r_new))
            raise SchemeError(f"positivity violated in cell {k}: r={r_new[k]:.3e}")
        return S_new, I_new, r_new


def step_m1(state: State, cfg: SimulationConfig, dt: float) -> State:
    """One explicit Euler step of the coupled S, I, r system."""
    stepper = _Stepper(cfg)
    floor = EXTINCTION_TOL * state.N
    S, I, r = stepper.step(state.S, state.I, state.r, dt, floor)
    return State(float(S), float(I), r, state.grid)


def simulate(cfg: SimulationConfig, record: Callable | None = None) -> Trajectory:
    """Integrate from t = 0 to ``cfg.t_end`` and sample every ``output_stride`` steps.

    The last step is shortened so the run ends exactly at ``t_end``; the
    final state is always recorded.
    """
    dt = cfg.time_step()
    stepper = _Stepper(cfg)
    state = cfg.initial_state()
    S, I, r = state.S, state.I, state.r.copy()
    n_floor = EXTINCTION_TOL * state.N
    n_steps = max(1, math.ceil(cfg.t_end / dt - 1e-9))
    stride = int(cfg.output_stride)

    ts, Ss, Is, rs, Ls, Bs = [], [], [], [], [], []

    def sample(t):
        _, _, F, _ = stepper.fluxes(S, I, r)
        ts.append(t)
        Ss.append(S)
        Is.append(I)
        rs.append(r.copy())
        Ls.append(F[0])
        Bs.append(F[-1])

    sample(0.0)
    t = 0.0
    for k in range(1, n_steps + 1):
        h = min(dt, cfg.t_end - t) if k == n_steps else dt
        S, I, r = stepper.step(S, I, r, h, n_floor)
        t = cfg.t_end if k == n_steps else k * dt
        if k % stride == 0 or k == n_steps:
            sample(t)
    return Trajectory(
        t=np.asarray(ts),
        S=np.asarray(Ss),
        I=np.asarray(Is),
        r=np.vstack(rs),
        Lambda=np.asarray(Ls),
        B=np.asarray(Bs),
        grid=cfg.grid,
        dt=dt,
        model=cfg.model,
    )


@dataclass(frozen=True)
class ConservationResidual:
    immune: float
    total: float


def conservation_residual(traj: Trajectory, params: ModelParameters, birth=None) -> ConservationResidual:
    """Largest mismatch of the recorded series against the balance laws

    R' = gamma I - Lambda - d R   and   N' = b(N) - d N - d_I I

    using centred differences at interior samples.  The total-population
    residual needs ``birth``; without it that entry is NaN.
    """
    if len(traj) < 3:
        raise ValueError("conservation residual needs at least 3 samples")
    t, R, N = traj.t, traj.R, traj.N
    span = t[2:] - t[:-2]
    dR = (R[2:] - R[:-2]) / span
    rhs_R = params.gamma * traj.I - traj.Lambda - params.d * R
    immune = float(np.max(np.abs(dR - rhs_R[1:-1])))
    total = math.nan
    if birth is not None:
        dN = (N[2:] - N[:-2]) / span
        rhs_N = birth(N) - params.d * N - params.d_I * traj.I
        total = float(np.max(np.abs(dN - rhs_N[1:-1])))
    return ConservationResidual(immune, total)


def with_overrides(cfg: SimulationConfig, **changes) -> SimulationConfig:
    return replace(cfg, **changes)
