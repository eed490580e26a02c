import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mccrobust.bounds import (
    AssumptionError,
    BoundInputs,
    check_assumptions,
    combined_eps,
    compute_bound,
    corollary1_sigma,
    sigma_threshold,
    xi_corollary1,
    xi_corollary2,
    xi_theorem1,
)
from mccrobust.model import ScalarEIVDataset

from conftest import outlier_dataset

# oracle values computed independently with mpmath at 50 digits
THRESHOLD_10_8 = 0.16815713723010297
INNER_SIGMA_03 = 0.39690517546435235
XI_GENERAL_SIGMA_03 = 0.6878362641069305
XI_LAMBDA_12 = 0.6861942915930739
XI_NOISE_FREE = 0.15170552328818643
SQRT_2LOG_999_998 = 0.04475494022093078


def _inputs(**kw):
    base = dict(n=10, m=8, eps_u=0.07, eps_v=0.07, w0_abs=3.0, c=1.0)
    base.update(kw)
    return BoundInputs(**base)


class TestClosedForms:
    def test_combined_eps(self):
        assert combined_eps(0.07, 0.07, 3.0) == pytest.approx(0.28)
        assert combined_eps(0.1, 0.2, -2.0) == pytest.approx(0.4)
        with pytest.raises(ValueError):
            combined_eps(-0.1, 0.0, 1.0)

    def test_threshold_value(self):
        assert sigma_threshold(10, 8, 0.07, 0.07, 3.0) == pytest.approx(THRESHOLD_10_8, rel=1e-12)

    def test_noise_free_bound_near_full_clean_set(self):
        rep = xi_corollary2(1000, 999, 2.0, 4.0)
        assert rep.xi == pytest.approx(0.5 * SQRT_2LOG_999_998, rel=1e-12)

    def test_threshold_zero_deviation(self):
        assert sigma_threshold(10, 8, 0.0, 0.0, 3.0) == 0.0

    @pytest.mark.parametrize("n,m", [(10, 5), (10, 10), (10, 11), (10, 2)])
    def test_threshold_requires_clean_majority(self, n, m):
        with pytest.raises(AssumptionError):
            sigma_threshold(n, m, 0.07, 0.07, 3.0)

    def test_general_bound_at_sigma(self):
        rep = xi_theorem1(_inputs(sigma=0.3))
        assert rep.admissible and rep.formula == "theorem1"
        assert math.exp(-0.28 ** 2 / 0.18) - 0.25 == pytest.approx(INNER_SIGMA_03, rel=1e-14)
        assert rep.xi == pytest.approx(XI_GENERAL_SIGMA_03, rel=1e-12)
        assert rep.sigma_threshold == pytest.approx(THRESHOLD_10_8, rel=1e-12)

    def test_general_bound_below_threshold_inadmissible(self):
        rep = xi_theorem1(_inputs(sigma=0.16))
        assert not rep.admissible and rep.xi is None
        assert "threshold" in rep.failure_reason

    def test_general_bound_at_threshold_inadmissible(self):
        rep = xi_theorem1(_inputs(sigma=sigma_threshold(10, 8, 0.07, 0.07, 3.0)))
        assert not rep.admissible

    def test_tiny_inner_argument_is_inadmissible(self):
        # r is about 1e-310, so exp(-700) - r sits below the 1e-300 floor
        n = 10 ** 310
        rep = xi_theorem1(BoundInputs(n, n - 1, 0.0, 1.0, 1.0, 1.0, sigma=1 / math.sqrt(1400)))
        assert rep.sigma_threshold < rep.sigma
        assert not rep.admissible and "1e-300" in rep.failure_reason
        ok = xi_theorem1(BoundInputs(n, n - 1, 0.0, 1.0, 1.0, 1.0, sigma=1 / math.sqrt(1000)))
        assert ok.admissible

    @settings(max_examples=60, deadline=None)
    @given(st.integers(3, 2000), st.floats(0.0, 1.0), st.floats(1.01, 3.0), st.floats(1.001, 2.0))
    def test_general_bound_finite_above_threshold(self, n, frac, f1, f2):
        m = n // 2 + 1 + int(frac * (n - 1 - (n // 2 + 1)))
        assume(n > m > n / 2)
        thr = sigma_threshold(n, m, 0.07, 0.07, 3.0)
        a = xi_theorem1(_inputs(n=n, m=m, sigma=thr * f1))
        b = xi_theorem1(_inputs(n=n, m=m, sigma=thr * f1 * f2))
        assert a.admissible and b.admissible and 0 < a.xi
        # past the minimum of xi(sigma) the bound grows; it is always finite and positive
        assert b.xi > 0

    def test_general_bound_grows_for_large_sigma(self):
        thr = sigma_threshold(10, 8, 0.07, 0.07, 3.0)
        xs = [xi_theorem1(_inputs(sigma=thr * k)).xi for k in (3, 5, 10, 100)]
        assert xs == sorted(xs)

    def test_lambda_form_value(self):
        rep = xi_corollary1(10, 8, 1.2, 1.0, 0.07, 0.07, 3.0)
        assert rep.admissible and rep.formula == "corollary1"
        assert rep.xi == pytest.approx(XI_LAMBDA_12, rel=1e-12)
        assert rep.sigma == pytest.approx(1.2 * THRESHOLD_10_8, rel=1e-12)

    @pytest.mark.parametrize("lam", [1.0, 0.5])
    def test_lambda_form_rejects_small_lambda(self, lam):
        with pytest.raises(ValueError):
            xi_corollary1(10, 8, lam, 1.0, 0.07, 0.07, 3.0)

    def test_noise_free_form_value(self):
        rep = xi_corollary2(10, 8, 0.1, 0.5)
        assert rep.admissible and rep.xi == pytest.approx(XI_NOISE_FREE, rel=1e-12)

    def test_missing_c_is_inadmissible(self):
        rep = xi_theorem1(_inputs(sigma=0.3, c=None))
        assert not rep.admissible and "c > 0" in rep.failure_reason
        rep = xi_theorem1(_inputs(sigma=0.3, c=0.0))
        assert not rep.admissible

    def test_record_is_flat(self):
        rec = compute_bound(_inputs(lam=1.2)).to_record()
        assert set(rec) >= {"n", "m", "combined_eps", "sigma_threshold", "xi", "formula", "admissible"}
        assert all(not isinstance(v, (dict, list)) for v in rec.values())


class TestDispatch:
    def test_lambda_selects_lambda_form(self):
        assert compute_bound(_inputs(lam=1.2)).formula == "corollary1"

    def test_sigma_selects_general_bound(self):
        assert compute_bound(_inputs(sigma=0.3)).formula == "theorem1"

    def test_zero_deviation_selects_noise_free_form(self):
        rep = compute_bound(_inputs(eps_u=0.0, eps_v=0.0, sigma=0.1, c=0.5))
        assert rep.formula == "corollary2" and rep.xi == pytest.approx(XI_NOISE_FREE, rel=1e-12)

    def test_assumption_checked_before_arguments(self):
        rep = compute_bound(_inputs(m=5))
        assert not rep.admissible and "N > M > N/2" in rep.failure_reason

    def test_needs_sigma_or_lambda(self):
        with pytest.raises(ValueError):
            compute_bound(_inputs())


lattice = st.tuples(st.integers(3, 5000), st.floats(0.0, 1.0), st.floats(1.01, 5.0))


class TestIdentities:
    @settings(max_examples=200, deadline=None)
    @given(lattice, st.floats(0.001, 0.5), st.floats(0.0, 0.5), st.floats(0.0, 10.0), st.floats(0.01, 3))
    def test_lambda_form_is_general_bound_at_substituted_sigma(self, nml, eps_u, eps_v, w0, c):
        n, frac, lam = nml
        m = n // 2 + 1 + int(frac * (n - 1 - (n // 2 + 1)))
        assume(n > m > n / 2)
        ce = combined_eps(eps_u, eps_v, w0)
        assume(ce > 1e-6)
        c1 = xi_corollary1(n, m, lam, c, eps_u, eps_v, w0)
        sigma = corollary1_sigma(n, m, lam, ce)
        th = xi_theorem1(BoundInputs(n, m, eps_u, eps_v, w0, c, sigma=sigma))
        assert c1.admissible == th.admissible
        if c1.admissible:
            assert c1.xi == pytest.approx(th.xi, rel=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(lattice, st.floats(0.01, 10), st.floats(0.01, 3))
    def test_general_bound_with_zero_deviation_is_noise_free_form(self, nml, sigma, c):
        n, frac, _ = nml
        m = n // 2 + 1 + int(frac * (n - 1 - (n // 2 + 1)))
        assume(n > m > n / 2)
        th = xi_theorem1(BoundInputs(n, m, 0.0, 0.0, 1.0, c, sigma=sigma))
        c2 = xi_corollary2(n, m, sigma, c)
        assert th.admissible and c2.admissible
        assert th.xi == pytest.approx(c2.xi, rel=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(3, 1000), st.floats(0.0, 1.0), st.floats(0.01, 0.5), st.floats(1.01, 4.0))
    def test_xi_decreases_as_clean_set_grows(self, n, frac, ce, lam):
        lo = n // 2 + 1
        assume(n - 1 > lo)
        m = lo + int(frac * (n - 2 - lo))
        a = xi_theorem1(BoundInputs(n, m, ce, 0.0, 1.0, 1.0, sigma=lam))
        b = xi_theorem1(BoundInputs(n, m + 1, ce, 0.0, 1.0, 1.0, sigma=lam))
        if a.admissible:
            assert b.admissible and b.xi <= a.xi * (1 + 1e-12)

    @settings(max_examples=100, deadline=None)
    @given(lattice, st.floats(0.001, 0.5))
    def test_xi_at_least_deviation_over_c(self, nml, ce):
        n, frac, lam = nml
        m = n // 2 + 1 + int(frac * (n - 1 - (n // 2 + 1)))
        assume(n > m > n / 2)
        rep = xi_corollary1(n, m, lam, 1.0, ce, 0.0, 1.0)
        if rep.admissible:
            assert rep.xi >= ce


class TestAssumptionCheck:
    def test_example_dataset(self):
        ds = outlier_dataset(0)
        chk = check_assumptions(ds, 0.07, 0.07)
        assert chk.admissible and chk.diagnostics == []
        assert 500 < chk.clean.m < 1000
        assert chk.clean.c >= 1.0 - 0.07

    def test_reports_rather_than_raises(self):
        ds = ScalarEIVDataset(x_obs=np.ones(4), d=np.ones(4), u=np.full(4, 9.0), v=np.zeros(4))
        chk = check_assumptions(ds, 0.07, 0.07)
        assert not chk.admissible and len(chk.diagnostics) == 2

    def test_all_clean_violates_strict_inequality(self):
        ds = outlier_dataset(0, alpha=0.0)
        chk = check_assumptions(ds, 1.0, 1.0)
        assert chk.clean.m == ds.n and not chk.admissible
