import numpy as np

from immunokinetics import (
    BevertonHolt,
    BoostingKernel,
    ConstantDecay,
    ImmunityGrid,
    ModelParameters,
    SimulationConfig,
)


def make_config(n_cells=50, model="m1", kernel=None, decay=None, psi=None, S0=900.0, I0=50.0,
                t_end=10.0, birth=None, **param_kw):
    base = dict(beta=0.3, gamma=0.1, d=0.02, d_I=0.01, z_min=0.0, z_max=1.0)
    base.update(param_kw)
    p = ModelParameters(**base)
    return SimulationConfig(
        params=p,
        birth=birth or BevertonHolt(0.04, 1000.0),
        decay=decay or ConstantDecay(0.1),
        kernel=kernel or BoostingKernel.from_coefficients(p.z_min, p.z_max, (0.3, 0.0), (0.5, 0.0)),
        grid=ImmunityGrid.uniform(p.z_min, p.z_max, n_cells),
        t_end=t_end,
        S0=S0,
        I0=I0,
        psi=psi or (lambda z: 50.0 * np.exp(-8 * (np.asarray(z) - 0.6) ** 2)),
        model=model,
    )


def matched_psi(p, kernel, decay, S0, I0, shape, n=4000):
    """Scale ``shape`` so that g(z_max) psi(z_max) equals the boundary inflow
    gamma I0 + lambda0 * int c_max psi at t = 0 (no jump along the separating
    characteristic).  ``shape(z_max)`` must be 1."""
    z = np.linspace(p.z_min, p.z_max, n + 1)
    mid = 0.5 * (z[1:] + z[:-1])
    h = z[1] - z[0]
    phi_mass = float(np.sum(shape(mid)) * h)
    cmax_mass = float(np.sum(kernel.c_max(mid) * shape(mid)) * h)
    g_top = float(decay(p.z_max))
    A = p.gamma * I0 / g_top
    for _ in range(200):
        lam = p.boost_rate * I0 / (S0 + I0 + A * phi_mass)
        A_next = p.gamma * I0 / (g_top - lam * cmax_mass)
        if abs(A_next - A) <= 1e-15 * A_next:
            break
        A = A_next
    return lambda zz: A_next * shape(np.asarray(zz, dtype=float))
