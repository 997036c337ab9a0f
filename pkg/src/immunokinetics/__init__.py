"""Immunity-structured SIRS models: finite-volume solver, exact characteristic
solution for boosting to maximum, ODE/DDE reductions, disease-free equilibrium
analysis and a finite-difference check of the nonlinear operator's derivative.
"""

from .characteristics import (
    CharacteristicInputs,
    History,
    backtrace_emission_time,
    constant_history_density,
    exact_r_m2,
    no_boost_exact,
)
from .equilibria import (
    EquilibriumReport,
    classify_dfe,
    compute_r0,
    compute_r0_tilde,
    equilibrium_report,
    find_n_star,
    linear_growth_rate,
    stationary_r_profile,
)
from .errors import *  # noqa: F401,F403
from .model import (
    AffineDecay,
    BevertonHolt,
    BoostingKernel,
    ConstantDecay,
    ExchangeOperator,
    ImmunityGrid,
    ModelParameters,
    PowerDecay,
    State,
    TabulatedBirth,
    Trajectory,
    TruncatedExponentialP0,
    UniformP0,
    ValidationReport,
    exchange_operator,
    flow_characteristic,
    kernel_cell_masses,
    transit_time,
    validate_model,
)
from .operator_check import AbstractPoint, check_operator, eval_dq, eval_q, fd_directional
from .reductions import (
    MolRates,
    MolState,
    integrate_dde,
    integrate_ode,
    mol_m2_rhs,
    mol_rhs,
    sirs_dde_rhs,
    sis_dde_rhs,
)
from .simulator import SimulationConfig, cfl_dt, conservation_residual, simulate, step_m1

__version__ = "0.1.0"
