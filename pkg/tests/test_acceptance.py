"""Acceptance criteria AC-1 .. AC-9.

Every test prints a single ``AC-n PASS|FAIL`` line with the measured value
and its tolerance, then asserts.
"""

import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from immunokinetics import (
    AffineDecay,
    BevertonHolt,
    BoostingKernel,
    CharacteristicInputs,
    ConstantDecay,
    ImmunityGrid,
    ModelParameters,
    MolRates,
    MolState,
    PowerDecay,
    SimulationConfig,
    TruncatedExponentialP0,
    UniformP0,
    check_operator,
    conservation_residual,
    exact_r_m2,
    find_n_star,
    kernel_cell_masses,
    mol_m2_rhs,
    mol_rhs,
    simulate,
)
from immunokinetics.compare import m1_vs_sirs_dde, m2_vs_sis_dde
from immunokinetics.errors import SchemeError
from immunokinetics.scenario import load_scenario

from conftest import matched_psi

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def verdict(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{name} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


def generic_kernel(z_min, z_max):
    return BoostingKernel.from_coefficients(z_min, z_max, (0.3, 0.0), (0.5, 0.0), UniformP0())


def test_ac1_dfe_global_stability(verdict):
    p = ModelParameters(beta=0.08, gamma=0.09, d=0.01, d_I=0.0, z_min=0.0, z_max=1.0)
    birth = BevertonHolt(0.04, 1000.0)
    n_star = find_n_star(birth, p.d)
    I0 = 0.05 * n_star
    cfg = SimulationConfig(p, birth, ConstantDecay(0.02), generic_kernel(0, 1), ImmunityGrid.uniform(0, 1, 200),
                           t_end=2000.0, S0=n_star - I0, I0=I0, psi=lambda z: np.zeros_like(z),
                           output_stride=1000)
    start = time.perf_counter()
    traj = simulate(cfg)
    elapsed = time.perf_counter() - start
    I_end, S_end, R_end = traj.I[-1], traj.S[-1], traj.R[-1]
    ok = (I_end < 1e-6 * n_star and abs(S_end - n_star) < 1e-3 * n_star and R_end < 1e-4 * n_star
          and elapsed < 10.0)
    verdict("AC-1", ok, f"N*={n_star:.6g} I/N*={I_end / n_star:.2e} (<1e-6) |S-N*|/N*={abs(S_end - n_star) / n_star:.2e}"
            f" (<1e-3) R/N*={R_end / n_star:.2e} (<1e-4) runtime={elapsed:.2f}s (<10s)")
    assert ok


def test_ac2_instability_growth_rate(verdict):
    p = ModelParameters(beta=0.3, gamma=0.1, d=0.02, d_I=0.08, z_min=0.0, z_max=1.0)
    birth = BevertonHolt(0.04, 1000.0)
    n_star = find_n_star(birth, p.d)
    I0 = 1e-6 * n_star
    cfg = SimulationConfig(p, birth, ConstantDecay(0.05), generic_kernel(0, 1), ImmunityGrid.uniform(0, 1, 100),
                           t_end=120.0, S0=n_star - I0, I0=I0, psi=lambda z: np.zeros_like(z))
    traj = simulate(cfg)
    window = traj.I < 1e-3 * n_star
    slope = np.polyfit(traj.t[window], np.log(traj.I[window]), 1)[0]
    rel = abs(slope - 0.10) / 0.10
    ok = rel < 0.05
    verdict("AC-2", ok, f"fitted log-slope={slope:.5f} vs 0.10, relative error {rel:.2%} (<5%)")
    assert ok


def test_ac3_m2_oracle_convergence(verdict):
    p = ModelParameters(beta=0.3, gamma=0.1, d=0.02, d_I=0.0, z_min=0.0, z_max=10.0)
    birth = BevertonHolt(0.04, 1000.0)
    decay = AffineDecay(0.02, 0.05)
    kernel = BoostingKernel.boost_to_max(0.0, 10.0)
    S0, I0 = 900.0, 10.0
    shape = lambda z: 0.6 + 0.4 * np.cos(np.pi * (10.0 - np.asarray(z)) / 10.0)  # noqa: E731
    psi = matched_psi(p, kernel, decay, S0, I0, shape)
    errors = []
    start = time.perf_counter()
    for n in (100, 200, 400):
        cfg = SimulationConfig(p, birth, decay, kernel, ImmunityGrid.uniform(0, 10, n), t_end=50.0,
                               S0=S0, I0=I0, psi=psi, model="m2")
        traj = simulate(cfg)
        inputs = CharacteristicInputs.from_trajectory(traj, p, decay, psi)
        exact = np.array([exact_r_m2(50.0, z, inputs) for z in cfg.grid.centers])
        errors.append(float(np.abs(traj.r[-1] - exact) @ cfg.grid.widths))
    elapsed = time.perf_counter() - start
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    ok = min(ratios) >= 1.8 and elapsed < 30.0
    verdict("AC-3", ok, f"L1 errors {[f'{e:.3e}' for e in errors]} ratios {[f'{r:.3f}' for r in ratios]} (>=1.8)"
            f" runtime={elapsed:.2f}s (<30s)")
    assert ok


def test_ac4_pde_dde_identity(verdict):
    scn = load_scenario(SCENARIOS / "no_boost_sirs.toml")
    scn = replace(scn, n_cells=400, t_end=3 * scn.tau)
    res = m1_vs_sirs_dde(scn)
    ok = res.value < 0.01
    verdict("AC-4", ok, f"max relative deviation of Lambda on (tau, 3 tau] = {res.value:.3e} (<1e-2),"
            f" worst at t={res.witness[0]:.3f}")
    assert ok


def test_ac5_m2_sis_dde_equivalence(verdict):
    scn = load_scenario(SCENARIOS / "sis_normalized.toml")
    scn = replace(scn, n_cells=400, t_end=200.0)
    assert scn.params.d_I == 0 and abs(scn.n_star - 1.0) < 1e-12
    res = m2_vs_sis_dde(scn)
    ok = res.value < 0.01
    verdict("AC-5", ok, f"L-infinity relative distance of (S, I) on [0, 200] = {res.value:.3e} (<1e-2),"
            f" worst at t={res.witness[0]:.3f}")
    assert ok


def test_ac6_conservation_identity(verdict):
    p = ModelParameters(beta=0.2, gamma=0.1, d=0.02, d_I=0.0, z_min=0.0, z_max=1.0)
    birth = BevertonHolt(0.04, 1000.0)
    decay = ConstantDecay(0.5)
    kernel = generic_kernel(0, 1)
    S0, I0 = 950.0, 20.0
    shape = lambda z: 0.5 + 0.5 * np.asarray(z) ** 2  # noqa: E731
    psi = matched_psi(p, kernel, decay, S0, I0, shape)
    residuals, max_I = [], 0.0
    for n in (100, 200, 400):
        cfg = SimulationConfig(p, birth, decay, kernel, ImmunityGrid.uniform(0, 1, n), t_end=30.0,
                               S0=S0, I0=I0, psi=psi)
        traj = simulate(cfg)
        residuals.append(conservation_residual(traj, p).immune)
        max_I = float(traj.I.max())
    ratios = [residuals[0] / residuals[1], residuals[1] / residuals[2]]
    bound = 1e-3 * p.gamma * max_I
    ok = min(ratios) >= 1.8 and residuals[-1] < bound
    verdict("AC-6", ok, f"residuals {[f'{r:.3e}' for r in residuals]} ratios {[f'{r:.3f}' for r in ratios]}"
            f" (>=1.8); at 400 cells {residuals[-1]:.3e} < {bound:.3e}")
    assert ok


def random_scenario(rng):
    z_min = rng.uniform(0.0, 1.0)
    z_max = z_min + rng.uniform(0.5, 5.0)
    p = ModelParameters(beta=rng.uniform(0.05, 2.0), gamma=rng.uniform(0.01, 1.0), d=rng.uniform(0.001, 0.1),
                        d_I=rng.uniform(0.0, 0.5), z_min=z_min, z_max=z_max,
                        boost_contact_multiplier=rng.uniform(0.0, 3.0))
    family = rng.integers(3)
    if family == 0:
        decay = ConstantDecay(rng.uniform(0.05, 1.0))
    elif family == 1:
        decay = AffineDecay(rng.uniform(0.0, 0.5), rng.uniform(0.02, 0.5))
    else:
        z_min = max(z_min, 0.1)
        p = replace(p, z_min=z_min, z_max=max(z_max, z_min + 0.5))
        decay = PowerDecay(rng.uniform(0.05, 0.5), rng.uniform(0.2, 2.0))
    cm0, cm1 = rng.uniform(0, 1, 2)
    c00, c01 = rng.uniform(0, 1, 2) * (1 - np.array([cm0, cm1]))
    p0 = UniformP0() if rng.uniform() < 0.5 else TruncatedExponentialP0(rng.uniform(0.1, 5.0))
    kernel = BoostingKernel.from_coefficients(p.z_min, p.z_max, (cm0, cm1), (c00, c01), p0)
    centers = rng.uniform(p.z_min, p.z_max, 3)
    widths = rng.uniform(0.02, 0.5, 3) * (p.z_max - p.z_min)
    amps = rng.exponential(50.0, 3) * (rng.uniform(size=3) < 0.8)

    def psi(z):
        z = np.asarray(z, dtype=float)[..., None]
        return np.sum(amps * np.exp(-0.5 * ((z - centers) / widths) ** 2), axis=-1)

    grid = ImmunityGrid.uniform(p.z_min, p.z_max, int(rng.integers(5, 60)))
    S0, I0 = rng.uniform(0, 2000), rng.uniform(0, 500)
    if S0 + I0 < 1:
        S0 = 100.0
    return SimulationConfig(p, BevertonHolt(rng.uniform(0.11, 0.5), rng.uniform(100, 5000)), decay, kernel, grid,
                            t_end=rng.uniform(5.0, 60.0), S0=S0, I0=I0, psi=psi,
                            model="m2" if rng.uniform() < 0.3 else "m1", output_stride=1)


def test_ac7_positivity(verdict):
    rng = np.random.default_rng(2024)
    worst, failures = np.inf, 0
    for _ in range(100):
        cfg = random_scenario(rng)
        try:
            traj = simulate(cfg)
        except SchemeError:
            failures += 1
            continue
        scale = max(float(np.abs(traj.r).max()), 1e-300)
        worst = min(worst, float(traj.r.min()) / scale)
    ok = failures == 0 and worst >= -1e-12
    verdict("AC-7", ok, f"100 random runs, scheme failures={failures}, min r / ||r||_inf = {worst:.3e} (>= -1e-12)")
    assert ok


def test_ac8_frechet_slope(verdict):
    p = ModelParameters(beta=0.3, gamma=0.1, d=0.02, d_I=0.05, z_min=0.0, z_max=2.0, boost_contact_multiplier=1.3)
    kernel = BoostingKernel.from_coefficients(0, 2, (0.4, 0.1), (0.4, 0.3), TruncatedExponentialP0(1.5))
    res = check_operator(p, BevertonHolt(0.04, 1000.0), kernel, ImmunityGrid.uniform(0, 2, 80), seed=17,
                         n_pairs=20, steps=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6))
    ok = res.worst_slope_deviation <= 0.1 and res.linearity_error <= 1e-12
    verdict("AC-8", ok, f"20 slopes in [{res.slopes.min():.4f}, {res.slopes.max():.4f}] (1.0 +- 0.1);"
            f" linearity error {res.linearity_error:.2e} (<=1e-12)")
    assert ok


def test_ac9_kernel_and_mol_identities(verdict):
    rng = np.random.default_rng(9)
    worst_kernel = 0.0
    for _ in range(1000):
        z_min = rng.uniform(0, 1)
        z_max = z_min + rng.uniform(0.1, 10)
        n = int(rng.integers(1, 80))
        if rng.uniform() < 0.5:
            grid = ImmunityGrid.uniform(z_min, z_max, n)
        else:
            inner = np.sort(rng.uniform(z_min, z_max, n - 1))
            grid = ImmunityGrid(np.unique(np.concatenate(([z_min], inner, [z_max]))))
        cm = rng.uniform()
        p0 = UniformP0() if rng.uniform() < 0.5 else TruncatedExponentialP0(rng.uniform(0.01, 10))
        kernel = BoostingKernel.from_coefficients(z_min, z_max, cm, (1 - cm) * rng.uniform(), p0)
        z_tilde = rng.choice([rng.uniform(z_min, z_max), z_min, z_max, float(rng.choice(grid.edges))])
        top, cells, stay = kernel_cell_masses(kernel, z_tilde, grid)
        worst_kernel = max(worst_kernel, abs(top + cells.sum() + stay - 1.0))

    p = ModelParameters(beta=0.4, gamma=0.1, d=0.01, d_I=0.03, z_min=0.0, z_max=3.0, boost_contact_multiplier=1.2)
    birth = BevertonHolt(0.04, 1000.0)
    rates0 = MolRates(0.3, 0.2, 0.1, theta=0.0)
    rates = MolRates(0.3, 0.2, 0.1, theta=0.5)
    worst_theta0 = worst_sum = 0.0
    for _ in range(1000):
        s = MolState(*(rng.uniform(0, 1000, 5) + np.array([1.0, 0, 0, 0, 0])))
        a = np.array(mol_rhs(s, p, birth, rates0))
        b = np.array(mol_m2_rhs(s, p, birth, rates0))
        worst_theta0 = max(worst_theta0, float(np.max(np.abs(a - b)) / np.max(np.abs(a))))
        out = np.array(mol_rhs(s, p, birth, rates))
        N = s.N
        expected = birth(N) - p.d * N - p.d_I * s.I
        scale = float(np.abs(out).max() + abs(expected))
        worst_sum = max(worst_sum, abs(out.sum() - expected) / scale)
    eps = np.finfo(float).eps
    ok = worst_kernel <= 1e-12 and worst_theta0 <= 8 * eps and worst_sum <= 8 * eps
    verdict("AC-9", ok, f"kernel mass error {worst_kernel:.2e} (<=1e-12); theta=0 vs lumped {worst_theta0:.2e};"
            f" MOL sum identity {worst_sum:.2e} (<= {8 * eps:.1e}, machine precision)")
    assert ok
