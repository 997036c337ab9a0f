"""Scenario files (TOML) and uniform model runs for the command-line tool.

A scenario has the sections ``[parameters] [birth] [decay] [kernel] [grid]
[initial] [run]``; see ``scenarios/README.md`` for the schema.  Unknown or
missing keys raise :class:`ConfigError` naming the key.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .characteristics import constant_history_density
from .errors import ConfigError
from .model import (
    AffineDecay,
    BevertonHolt,
    BoostingKernel,
    ConstantDecay,
    ImmunityGrid,
    ModelParameters,
    PowerDecay,
    TabulatedBirth,
    TruncatedExponentialP0,
    UniformP0,
    transit_time,
    validate_model,
)
from .reductions import (
    MolRates,
    MolState,
    check_divides,
    integrate_dde,
    integrate_ode,
    mol_rhs,
    sirs_dde_rhs,
    sis_dde_rhs,
)
from .simulator import SimulationConfig, simulate

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

MODELS = ("m1", "m2", "mol", "sirs-dde", "sis-dde")
PDE_MODELS = ("m1", "m2")
NORMALIZED_TOL = 1e-9


def _number(section: str, table: dict, key: str, default=None):
    if key not in table:
        if default is None:
            raise ConfigError(f"missing key [{section}].{key}")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"[{section}].{key} must be a number, got {val!r}")
    return float(val)


def _only(section: str, table: dict, allowed):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key [{section}].{key}")


def _family(section: str, table: dict, choices):
    fam = table.get("family")
    if fam is None:
        raise ConfigError(f"missing key [{section}].family")
    if fam not in choices:
        raise ConfigError(f"[{section}].family must be one of {sorted(choices)}, got {fam!r}")
    _only(section, table, {"family", *choices[fam]})
    return fam


def parse_birth(table: dict):
    fam = _family("birth", table, {"beverton_holt": ("rho", "K"), "tabulated": ("N", "b")})
    if fam == "beverton_holt":
        return BevertonHolt(_number("birth", table, "rho"), _number("birth", table, "K"))
    for key in ("N", "b"):
        if key not in table:
            raise ConfigError(f"missing key [birth].{key}")
    return TabulatedBirth(table["N"], table["b"])


def parse_decay(table: dict):
    fam = _family("decay", table, {"constant": ("g0",), "affine": ("a", "c"), "power": ("a", "q")})
    if fam == "constant":
        return ConstantDecay(_number("decay", table, "g0"))
    if fam == "affine":
        return AffineDecay(_number("decay", table, "a"), _number("decay", table, "c"))
    return PowerDecay(_number("decay", table, "a"), _number("decay", table, "q"))


def _coefficient(table: dict, key: str):
    if key not in table:
        raise ConfigError(f"missing key [kernel].{key}")
    val = table[key]
    if isinstance(val, dict):
        _only(f"kernel.{key}", val, {"at_z_min", "at_z_max"})
        return (_number(f"kernel.{key}", val, "at_z_min"), _number(f"kernel.{key}", val, "at_z_max"))
    return _number("kernel", table, key)


def parse_kernel(table: dict, params: ModelParameters):
    _only("kernel", table, {"c_max", "c0", "p0_family", "rate", "theta"})
    fam = table.get("p0_family", "uniform")
    if fam == "uniform":
        if "rate" in table:
            raise ConfigError("unknown key [kernel].rate for p0_family 'uniform'")
        p0 = UniformP0()
    elif fam == "truncated_exponential":
        p0 = TruncatedExponentialP0(_number("kernel", table, "rate"))
    else:
        raise ConfigError(f"[kernel].p0_family must be 'uniform' or 'truncated_exponential', got {fam!r}")
    kernel = BoostingKernel.from_coefficients(
        params.z_min, params.z_max, _coefficient(table, "c_max"), _coefficient(table, "c0"), p0, label="config"
    )
    theta = _number("kernel", table, "theta", 0.5)
    return kernel, theta


PSI_FAMILIES = {
    "zero": (),
    "constant": ("value",),
    "gaussian": ("amplitude", "center", "width"),
    "constant_history": (),
}


def parse_psi(table: dict):
    fam = _family("initial.psi", table, PSI_FAMILIES)
    return {"family": fam, **{k: _number("initial.psi", table, k) for k in PSI_FAMILIES[fam]}}


@dataclass(eq=False)
class Scenario:
    params: ModelParameters
    birth: object
    decay: object
    kernel: BoostingKernel
    theta: float
    n_cells: int
    S: float | str
    I: float
    psi_spec: dict
    t_end: float
    dt: float | str = "auto"
    output_stride: int = 1
    source: str = "<dict>"

    @property
    def tau(self) -> float:
        return transit_time(self.decay, self.params.z_min, self.params.z_max)

    @property
    def n_star(self) -> float:
        report = validate_model(self.params, self.birth, self.decay, self.kernel)
        if report.n_star is None:
            raise ConfigError("birth function has no equilibrium N*")
        return report.n_star

    def grid(self) -> ImmunityGrid:
        return ImmunityGrid.uniform(self.params.z_min, self.params.z_max, self.n_cells)

    def initial(self, model: str):
        """(S0, I0, psi, R0) for the given model."""
        p = self.params
        fam = self.psi_spec["family"]
        auto = self.S == "auto"
        if fam == "constant_history":
            boost = model in ("m2", "sis-dde")
            if auto:
                psi, R0, _ = constant_history_density(p, self.decay, self.I, N0=self.n_star, boost_to_max=boost)
            else:
                psi, R0, _ = constant_history_density(p, self.decay, self.I, S0=self.S, boost_to_max=boost)
        else:
            psi = _simple_psi(self.psi_spec)
            R0 = _mass(psi, p.z_min, p.z_max)
        S0 = self.n_star - self.I - R0 if auto else self.S
        if S0 < 0:
            raise ConfigError(f"[initial].S resolves to a negative value ({S0:.6g})")
        return S0, self.I, psi, R0


def _simple_psi(spec):
    fam = spec["family"]
    if fam == "zero":
        return lambda z: np.zeros_like(np.asarray(z, dtype=float))
    if fam == "constant":
        v = spec["value"]
        return lambda z: np.full_like(np.asarray(z, dtype=float), v)
    a, c, w = spec["amplitude"], spec["center"], spec["width"]
    return lambda z: a * np.exp(-0.5 * ((np.asarray(z, dtype=float) - c) / w) ** 2)


def _mass(psi, lo, hi, n=2000):
    return float(ImmunityGrid.uniform(lo, hi, n).cell_averages(psi).sum() * (hi - lo) / n)


def scenario_from_dict(doc: dict, source: str = "<dict>") -> Scenario:
    try:
        return _scenario_from_dict(doc, source)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _scenario_from_dict(doc: dict, source: str) -> Scenario:
    _only("<root>", doc, {"parameters", "birth", "decay", "kernel", "grid", "initial", "run"})
    for sec in ("parameters", "birth", "decay", "kernel", "grid", "initial", "run"):
        if sec not in doc:
            raise ConfigError(f"missing section [{sec}]")
        if not isinstance(doc[sec], dict):
            raise ConfigError(f"[{sec}] must be a table")
    pt = doc["parameters"]
    _only("parameters", pt, {"beta", "gamma", "d", "d_I", "z_min", "z_max", "boost_contact_multiplier"})
    params = ModelParameters(
        beta=_number("parameters", pt, "beta"),
        gamma=_number("parameters", pt, "gamma"),
        d=_number("parameters", pt, "d"),
        d_I=_number("parameters", pt, "d_I"),
        z_min=_number("parameters", pt, "z_min"),
        z_max=_number("parameters", pt, "z_max"),
        boost_contact_multiplier=_number("parameters", pt, "boost_contact_multiplier", 1.0),
    )
    birth = parse_birth(doc["birth"])
    decay = parse_decay(doc["decay"])
    kernel, theta = parse_kernel(doc["kernel"], params)

    gt = doc["grid"]
    _only("grid", gt, {"n_cells"})
    n_cells = gt.get("n_cells")
    if not isinstance(n_cells, int) or isinstance(n_cells, bool) or n_cells < 1:
        raise ConfigError(f"[grid].n_cells must be a positive integer, got {n_cells!r}")

    it = doc["initial"]
    _only("initial", it, {"S", "I", "psi"})
    S = it.get("S")
    if S is None:
        raise ConfigError("missing key [initial].S")
    if S != "auto":
        S = _number("initial", it, "S")
    I = _number("initial", it, "I")
    if "psi" not in it or not isinstance(it["psi"], dict):
        raise ConfigError("missing key [initial].psi (a table with a 'family')")
    psi_spec = parse_psi(it["psi"])

    rt = doc["run"]
    _only("run", rt, {"t_end", "dt", "output_stride"})
    t_end = _number("run", rt, "t_end")
    dt = rt.get("dt", "auto")
    if dt != "auto":
        dt = _number("run", rt, "dt")
    stride = rt.get("output_stride", 1)
    if not isinstance(stride, int) or isinstance(stride, bool) or stride < 1:
        raise ConfigError(f"[run].output_stride must be a positive integer, got {stride!r}")

    report = validate_model(params, birth, decay, kernel)
    if not report.ok:
        bad = report.failures()[0]
        raise ConfigError(f"model assumption violated ({bad.name}): {bad.message}")

    return Scenario(params, birth, decay, kernel, theta, n_cells, S, I, psi_spec, t_end, dt, stride, source)


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file.  OSError propagates for I/O failures."""
    path = Path(path)
    raw = path.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return scenario_from_dict(doc, str(path))


# ---------------------------------------------------------------------------
# Running any model into a common time-series shape


@dataclass(eq=False)
class ModelRun:
    model: str
    t: np.ndarray
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    Lambda: np.ndarray | None = None
    B: np.ndarray | None = None
    trajectory: object = None  # Trajectory for PDE models

    @property
    def N(self):
        return self.S + self.I + self.R


def simulation_config(scn: Scenario, model: str, n_cells: int | None = None) -> SimulationConfig:
    S0, I0, psi, _ = scn.initial(model)
    grid = ImmunityGrid.uniform(scn.params.z_min, scn.params.z_max, n_cells or scn.n_cells)
    return SimulationConfig(
        params=scn.params, birth=scn.birth, decay=scn.decay, kernel=scn.kernel, grid=grid,
        t_end=scn.t_end, S0=S0, I0=I0, psi=psi, dt=scn.dt, model=model,
        output_stride=scn.output_stride,
    )


def _max_rate(scn: Scenario, extra=()):
    p = scn.params
    return max((p.beta * max(1.0, p.boost_contact_multiplier) + p.gamma + p.d + p.d_I, *extra))


def ode_step(scn: Scenario, rates: MolRates) -> float:
    if scn.dt != "auto":
        return float(scn.dt)
    fastest = _max_rate(scn, (rates.mu_F, rates.nu_W, rates.sigma_C))
    return min(scn.t_end / 100.0, 0.1 / fastest)


def dde_step(scn: Scenario) -> float:
    tau = scn.tau
    if scn.dt != "auto":
        check_divides(tau, float(scn.dt))
        return float(scn.dt)
    target = min(tau / 20.0, 0.1 / _max_rate(scn))
    return tau / math.ceil(tau / target)


def run_model(scn: Scenario, model: str, n_cells: int | None = None) -> ModelRun:
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {model!r}")
    p = scn.params
    stride = scn.output_stride
    if model in PDE_MODELS:
        traj = simulate(simulation_config(scn, model, n_cells))
        return ModelRun(model, traj.t, traj.S, traj.I, traj.R, traj.Lambda, traj.B, traj)

    S0, I0, psi, R0 = scn.initial(model)
    if model == "mol":
        rates = MolRates.from_decay(scn.decay, p.z_min, p.z_max, scn.theta)
        thirds = np.linspace(p.z_min, p.z_max, 4)
        RC, RW, RF = (_mass(psi, thirds[i], thirds[i + 1], 500) for i in range(3))
        y0 = [S0, I0, RF, RW, RC]
        sol = integrate_ode(lambda t, y: np.array(mol_rhs(MolState(*y), p, scn.birth, rates)),
                            y0, scn.t_end, ode_step(scn, rates))
        y = sol.y
        R = y[:, 2] + y[:, 3] + y[:, 4]
        sel = _strided(sol.t.size, stride)
        return ModelRun(model, sol.t[sel], y[sel, 0], y[sel, 1], R[sel])

    tau = scn.tau
    dt = dde_step(scn)
    if model == "sirs-dde":
        hist = lambda s: np.array([S0, I0, R0])  # noqa: E731
        sol = integrate_dde(lambda t, y, yl: sirs_dde_rhs(t, y, yl, p, tau, scn.birth), hist, tau, scn.t_end, dt)
        sel = _strided(sol.t.size, stride)
        return ModelRun(model, sol.t[sel], sol.y[sel, 0], sol.y[sel, 1], sol.y[sel, 2])

    # sis-dde
    if p.d_I != 0:
        raise ConfigError("sis-dde requires [parameters].d_I = 0")
    if abs(S0 + I0 + R0 - 1.0) > NORMALIZED_TOL:
        raise ConfigError(f"sis-dde requires S + I + R = 1 at t = 0, got {S0 + I0 + R0:.12g}")
    A0 = I0 * tau
    hist = lambda s: np.array([S0, I0, A0])  # noqa: E731
    sol = integrate_dde(lambda t, y, yl: sis_dde_rhs(t, y, yl, p, tau), hist, tau, scn.t_end, dt)
    S, I = sol.y[:, 0], sol.y[:, 1]
    sel = _strided(sol.t.size, stride)
    return ModelRun(model, sol.t[sel], S[sel], I[sel], 1.0 - S[sel] - I[sel])


def _strided(n: int, stride: int) -> np.ndarray:
    idx = np.arange(0, n, stride)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def with_run(scn: Scenario, **changes) -> Scenario:
    return replace(scn, **changes)
