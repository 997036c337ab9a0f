import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from immunokinetics import (
    BevertonHolt,
    ConstantDecay,
    ImmunityGrid,
    ModelParameters,
    TabulatedBirth,
    classify_dfe,
    compute_r0,
    compute_r0_tilde,
    equilibrium_report,
    find_n_star,
    linear_growth_rate,
    stationary_r_profile,
)
from immunokinetics.equilibria import STABILITY_ORDER
from immunokinetics.errors import ConfigError, NoEquilibriumError


def params(**kw):
    base = dict(beta=0.3, gamma=0.1, d=0.02, d_I=0.08, z_min=0.0, z_max=1.0)
    base.update(kw)
    return ModelParameters(**base)


class TestNStar:
    def test_beverton_holt(self):
        assert find_n_star(BevertonHolt(0.04, 1000), 0.02) == pytest.approx(1000.0, rel=1e-9)

    def test_second_example(self):
        assert find_n_star(BevertonHolt(0.03, 500), 0.01) == pytest.approx(1000.0, rel=1e-9)

    def test_no_equilibrium(self):
        with pytest.raises(NoEquilibriumError, match="no equilibrium"):
            find_n_star(BevertonHolt(0.02, 1000), 0.02)

    @settings(max_examples=100, deadline=None)
    @given(rho=st.floats(0.011, 5.0), K=st.floats(1e-3, 1e8))
    def test_matches_closed_form(self, rho, K):
        b = BevertonHolt(rho, K)
        assert find_n_star(b, 0.01) == pytest.approx(b.closed_form_equilibrium(0.01), rel=1e-9)

    def test_tabulated(self):
        b = TabulatedBirth([0, 500, 1000, 3000], [0, 15, 20, 24])
        n = find_n_star(b, 0.02)
        assert b(n) == pytest.approx(0.02 * n, rel=1e-12)


class TestReproductionNumbers:
    def test_r0(self):
        assert compute_r0(params()) == pytest.approx(1.5)

    def test_equal_without_disease_death(self):
        p = params(d_I=0.0)
        assert compute_r0(p) == pytest.approx(2.5)
        assert compute_r0_tilde(p) == pytest.approx(2.5)

    def test_r0_tilde(self):
        assert compute_r0_tilde(params(beta=0.08, gamma=0.09, d=0.01, d_I=0.0)) == pytest.approx(0.8)

    @settings(max_examples=100, deadline=None)
    @given(beta=st.floats(0.01, 2), gamma=st.floats(0.01, 1), d=st.floats(0.001, 0.5), d_I=st.floats(0, 1))
    def test_r0_at_most_r0_tilde(self, beta, gamma, d, d_I):
        p = params(beta=beta, gamma=gamma, d=d, d_I=d_I)
        assert compute_r0(p) <= compute_r0_tilde(p)
        if d_I == 0:
            assert compute_r0(p) == compute_r0_tilde(p)
        elif d_I > 1e-12 * (gamma + d):
            assert compute_r0(p) < compute_r0_tilde(p)


class TestClassification:
    def test_globally_stable(self):
        assert classify_dfe(params(beta=0.08, gamma=0.09, d=0.01, d_I=0.0)) == "globally_stable"

    def test_unstable(self):
        assert classify_dfe(params()) == "unstable"

    def test_locally_stable_band(self):
        # R0_tilde = 1.2, R0 = 0.9
        p = params(beta=0.144, gamma=0.1, d=0.02, d_I=0.04)
        assert compute_r0_tilde(p) == pytest.approx(1.2)
        assert compute_r0(p) == pytest.approx(0.9)
        assert classify_dfe(p) == "locally_stable"

    def test_threshold(self):
        assert classify_dfe(params(beta=0.2)) == "threshold_inconclusive"

    @settings(max_examples=100, deadline=None)
    @given(gamma=st.floats(0.01, 1), d=st.floats(0.001, 0.5), d_I=st.floats(0, 1))
    def test_monotone_in_beta(self, gamma, d, d_I):
        ranks = [STABILITY_ORDER[classify_dfe(params(beta=b, gamma=gamma, d=d, d_I=d_I))]
                 for b in np.linspace(0.01, 3.0, 60)]
        assert ranks == sorted(ranks)


class TestGrowthAndProfile:
    def test_growth_rate(self):
        assert linear_growth_rate(params()) == pytest.approx(0.10)

    def test_growth_rate_at_threshold(self):
        assert linear_growth_rate(params(beta=0.2)) == pytest.approx(0.0, abs=1e-15)

    def test_zero_profile(self):
        r = stationary_r_profile(params(), ConstantDecay(0.1), ImmunityGrid.uniform(0, 1, 20))
        assert r.shape == (20,) and np.all(r == 0)

    def test_endemic_out_of_scope(self):
        with pytest.raises(ConfigError, match="out of scope"):
            stationary_r_profile(params(), ConstantDecay(0.1), ImmunityGrid.uniform(0, 1, 20), I_star=1.0)

    def test_report(self):
        rep = equilibrium_report(params(), BevertonHolt(0.04, 1000))
        pairs = dict(rep.as_pairs())
        assert pairs["N_star"] == pytest.approx(1000.0)
        assert pairs["S_star"] == pairs["N_star"]
        assert pairs["I_star"] == 0 and pairs["R_star"] == 0
        assert pairs["classification"] == "unstable"
