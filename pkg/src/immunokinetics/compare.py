"""Cross-model identity checks driven from a scenario.

Each pair returns a :class:`Comparison` holding a table for
``comparison.csv``, the worst discrepancy with its witness and the pair's
tolerance.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .characteristics import CharacteristicInputs, History, exact_r_m2
from .errors import ConfigError
from .reductions import MolRates, MolState, mol_m2_rhs, mol_rhs
from .scenario import NORMALIZED_TOL, Scenario, run_model

PAIRS = ("m1-vs-sirs-dde", "m2-vs-oracle", "m2-vs-sis-dde", "mol-theta0-vs-m2")

TOLERANCES = {
    "m1-vs-sirs-dde": 0.01,     # max relative deviation of Lambda
    "m2-vs-oracle": 1.8,        # minimum L1 error ratio per halving
    "m2-vs-sis-dde": 0.01,      # L-infinity relative distance of (S, I)
    "mol-theta0-vs-m2": 1e-13,  # relative right-hand-side mismatch
}
REFINEMENTS = (1, 2, 4)
N_RANDOM_STATES = 1000


@dataclass(eq=False)
class Comparison:
    pair: str
    header: tuple
    columns: list
    metric: str
    value: float
    tolerance: float
    witness: tuple  # (t or index, value)
    lower_is_better: bool = True
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value < self.tolerance if self.lower_is_better else self.value >= self.tolerance

    def report(self) -> str:
        op = "<" if self.lower_is_better else ">="
        lines = [
            f"pair        {self.pair}",
            f"metric      {self.metric}",
            f"value       {self.value:.6e}",
            f"tolerance   {op} {self.tolerance:g}",
            f"witness     t={self.witness[0]:.17g} value={self.witness[1]:.6e}",
            f"result      {'pass' if self.passed else 'identity violated'}",
        ]
        return "\n".join(lines + self.notes) + "\n"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("IMMUNOKINETICS_THREADS", "1")))
    except ValueError:
        return 1


def _run_pair(scn: Scenario, a: tuple, b: tuple):
    """Run two (model, n_cells) jobs, concurrently when threads allow."""
    jobs = [a, b]
    if thread_count() > 1:
        with ThreadPoolExecutor(max_workers=min(2, thread_count())) as pool:
            return list(pool.map(lambda job: run_model(scn, *job), jobs))
    return [run_model(scn, *job) for job in jobs]


def m1_vs_sirs_dde(scn: Scenario) -> Comparison:
    if not scn.kernel.is_no_boost() and scn.params.boost_rate > 0:
        raise ConfigError("m1-vs-sirs-dde requires a kernel without boosting (c_max = c0 = 0)")
    tau, p = scn.tau, scn.params
    if scn.t_end <= tau:
        raise ConfigError(f"[run].t_end must exceed tau = {tau:.6g} for m1-vs-sirs-dde")
    pde, dde = _run_pair(scn, ("m1", None), ("sirs-dde", None))
    I_dde = History(dde.t, dde.I)
    sel = (pde.t > tau) & (pde.t <= min(3 * tau, scn.t_end) * (1 + 1e-12))
    t = pde.t[sel]
    lam = pde.Lambda[sel]
    predicted = p.gamma * I_dde(t - tau) * math.exp(-p.d * tau)
    dev = np.abs(lam - predicted)
    scale = float(np.max(np.abs(lam)))
    rel = dev / scale if scale > 0 else np.full_like(dev, np.inf if np.any(dev > 0) else 0.0)
    k = int(np.argmax(rel))
    return Comparison(
        "m1-vs-sirs-dde", ("t", "Lambda_pde", "Lambda_dde", "rel_deviation"),
        [t, lam, predicted, rel], "max |Lambda - gamma I(t-tau) e^(-d tau)| / max |Lambda| on (tau, 3 tau]",
        float(rel[k]), TOLERANCES["m1-vs-sirs-dde"], (float(t[k]), float(rel[k])),
    )


def _l1_oracle_error(scn: Scenario, n_cells: int):
    run = run_model(replace(scn, output_stride=1), "m2", n_cells)
    traj = run.trajectory
    _, _, psi, _ = scn.initial("m2")
    inputs = CharacteristicInputs.from_trajectory(traj, scn.params, scn.decay, psi)
    grid = traj.grid
    t = float(traj.t[-1])
    exact = np.array([exact_r_m2(t, z, inputs) for z in grid.centers])
    return float(np.abs(traj.r[-1] - exact) @ grid.widths), traj.dt


def m2_vs_oracle(scn: Scenario) -> Comparison:
    sizes = [scn.n_cells * m for m in REFINEMENTS]
    if thread_count() > 1:
        with ThreadPoolExecutor(max_workers=min(len(sizes), thread_count())) as pool:
            results = list(pool.map(lambda n: _l1_oracle_error(scn, n), sizes))
    else:
        results = [_l1_oracle_error(scn, n) for n in sizes]
    errors = np.array([e for e, _ in results])
    dts = np.array([dt for _, dt in results])
    ratios = np.append(np.nan, errors[:-1] / errors[1:])
    k = 1 + int(np.argmin(ratios[1:]))
    return Comparison(
        "m2-vs-oracle", ("n_cells", "dt", "l1_error", "ratio"),
        [np.array(sizes, dtype=float), dts, errors, ratios],
        f"min L1 error ratio per halving at t={scn.t_end:g}", float(ratios[k]),
        TOLERANCES["m2-vs-oracle"], (float(sizes[k]), float(ratios[k])), lower_is_better=False,
        notes=[f"note        witness t is the finer grid's cell count; L1 errors {errors.tolist()}"],
    )


def m2_vs_sis_dde(scn: Scenario) -> Comparison:
    p = scn.params
    if p.d_I != 0:
        raise ConfigError("m2-vs-sis-dde requires [parameters].d_I = 0")
    if abs(scn.n_star - 1.0) > NORMALIZED_TOL:
        raise ConfigError(f"m2-vs-sis-dde requires N* = 1, got {scn.n_star:.12g}")
    pde, dde = _run_pair(scn, ("m2", None), ("sis-dde", None))
    S_d = History(dde.t, dde.S)(pde.t)
    I_d = History(dde.t, dde.I)(pde.t)
    dS = np.abs(pde.S - S_d) / np.max(np.abs(S_d))
    dI = np.abs(pde.I - I_d) / np.max(np.abs(I_d))
    worst = np.maximum(dS, dI)
    k = int(np.argmax(worst))
    return Comparison(
        "m2-vs-sis-dde", ("t", "S_pde", "S_dde", "I_pde", "I_dde", "rel_deviation"),
        [pde.t, pde.S, S_d, pde.I, I_d, worst], "L-infinity relative distance of (S, I)",
        float(worst[k]), TOLERANCES["m2-vs-sis-dde"], (float(pde.t[k]), float(worst[k])),
    )


def random_mol_states(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    return scale * rng.uniform(0.0, 1.0, size=(n, 5)) + np.array([scale * 1e-3, 0, 0, 0, 0])


def mol_theta0_vs_m2(scn: Scenario, seed: int = 0) -> Comparison:
    p = scn.params
    rates = MolRates.from_decay(scn.decay, p.z_min, p.z_max, theta=0.0)
    rng = np.random.default_rng(seed)
    n_star = scn.n_star
    states = random_mol_states(rng, N_RANDOM_STATES, n_star)
    mism = np.empty(len(states))
    for i, s in enumerate(states):
        a = np.array(mol_rhs(MolState(*s), p, scn.birth, rates))
        b = np.array(mol_m2_rhs(MolState(*s), p, scn.birth, rates))
        mism[i] = np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    k = int(np.argmax(mism))
    return Comparison(
        "mol-theta0-vs-m2", ("t", "rel_mismatch"), [np.arange(len(states), dtype=float), mism],
        "max relative mismatch of the theta = 0 chain and the lumped chain", float(mism[k]),
        TOLERANCES["mol-theta0-vs-m2"], (float(k), float(mism[k])),
        notes=["note        t is the index of the random state"],
    )


def run_comparison(scn: Scenario, pair: str) -> Comparison:
    funcs = {
        "m1-vs-sirs-dde": m1_vs_sirs_dde,
        "m2-vs-oracle": m2_vs_oracle,
        "m2-vs-sis-dde": m2_vs_sis_dde,
        "mol-theta0-vs-m2": mol_theta0_vs_m2,
    }
    if pair not in funcs:
        raise ConfigError(f"pair must be one of {PAIRS}, got {pair!r}")
    return funcs[pair](scn)
