"""Disease-free equilibrium, reproduction numbers and threshold classification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SchemeError
from .model import ImmunityGrid, ModelParameters, locate_n_star

THRESHOLD_TOL = 1e-12

GLOBALLY_STABLE = "globally_stable"
LOCALLY_STABLE = "locally_stable"
UNSTABLE = "unstable"
INCONCLUSIVE = "threshold_inconclusive"

# ordering used when checking monotonicity in beta
STABILITY_ORDER = {GLOBALLY_STABLE: 0, LOCALLY_STABLE: 1, INCONCLUSIVE: 2, UNSTABLE: 3}


@dataclass(frozen=True)
class EquilibriumReport:
    N_star: float
    S_star: float
    R0: float
    R0_tilde: float
    classification: str
    growth_rate: float

    def as_pairs(self):
        return [
            ("N_star", self.N_star),
            ("S_star", self.S_star),
            ("I_star", 0.0),
            ("R_star", 0.0),
            ("R0", self.R0),
            ("R0_tilde", self.R0_tilde),
            ("classification", self.classification),
            ("growth_rate", self.growth_rate),
        ]


def find_n_star(birth, d: float, n_max: float = 1e15) -> float:
    """Positive root of b(N) = d N."""
    return locate_n_star(birth, d, n_max=n_max)


def compute_r0(params: ModelParameters) -> float:
    return params.beta / (params.gamma + params.d + params.d_I)


def compute_r0_tilde(params: ModelParameters) -> float:
    return params.beta / (params.gamma + params.d)


def classify_dfe(params: ModelParameters) -> str:
    r0 = compute_r0(params)
    if abs(r0 - 1.0) <= THRESHOLD_TOL:
        return INCONCLUSIVE
    if compute_r0_tilde(params) < 1.0:
        return GLOBALLY_STABLE
    if r0 < 1.0:
        return LOCALLY_STABLE
    return UNSTABLE


def linear_growth_rate(params: ModelParameters) -> float:
    """Growth rate of I linearised at the DFE: beta - gamma - d - d_I."""
    return params.beta - params.gamma - params.d - params.d_I


def stationary_r_profile(params: ModelParameters, decay, grid: ImmunityGrid, I_star: float = 0.0) -> np.ndarray:
    """Stationary immune density at the DFE, which is identically zero.

    The returned profile is checked against the discretised stationary
    transport equation and its boundary condition.
    """
    if I_star != 0:
        raise ConfigError("endemic analysis out of scope: only I_star = 0 is supported")
    r = np.zeros(grid.n_cells)
    g_edges = np.asarray(decay(grid.edges), dtype=float)
    flux = np.append(g_edges[:-1] * r, params.gamma * I_star)
    interior = (flux[1:] - flux[:-1]) / grid.widths - params.d * r
    if np.any(interior != 0) or flux[-1] != 0:
        raise SchemeError("zero profile does not satisfy the stationary equations")
    return r


def equilibrium_report(params: ModelParameters, birth) -> EquilibriumReport:
    n_star = find_n_star(birth, params.d)
    return EquilibriumReport(
        N_star=n_star,
        S_star=n_star,
        R0=compute_r0(params),
        R0_tilde=compute_r0_tilde(params),
        classification=classify_dfe(params),
        growth_rate=linear_growth_rate(params),
    )
