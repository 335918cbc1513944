import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glomix.errors import DomainError, NonIntegrable, SingularMass
from glomix.measures import (
    HALF_LINE,
    INFINITE_MASS,
    UNIT_INTERVAL,
    constant,
    counterexample_averages,
    counterexample_F,
    counterexample_kk,
    estimate_global_average,
    finite_volume_average,
    identity,
    indicator,
    integrate,
    interval_mass,
    is_infinite,
    lambda_q,
    lebesgue,
    nu_p,
    on_interval,
    piecewise_constant,
    table_observable,
)


class TestMasses:
    def test_closed_forms(self):
        assert interval_mass(lambda_q(0.5), 0, 3) == pytest.approx(2.0, rel=1e-15)
        assert interval_mass(lambda_q(1.0), 0, math.e - 1) == pytest.approx(1.0, rel=1e-15)
        assert interval_mass(nu_p(2), 0.5, 1) == pytest.approx(1.5, rel=1e-15)
        assert interval_mass(lebesgue(), 0.25, 0.5) == 0.25

    def test_infinite_masses_are_tagged(self):
        assert interval_mass(nu_p(1), 0, 0.5) is INFINITE_MASS
        assert is_infinite(interval_mass(lambda_q(1), 0, math.inf))
        assert is_infinite(interval_mass(lebesgue(HALF_LINE), 3, math.inf))
        with pytest.raises(TypeError):
            INFINITE_MASS + 1.0

    def test_bounds_checked(self):
        with pytest.raises(DomainError):
            interval_mass(nu_p(1), 0.5, 1.5)
        with pytest.raises(DomainError):
            interval_mass(lebesgue(), 0.6, 0.5)

    def test_parameter_ranges(self):
        with pytest.raises(DomainError):
            lambda_q(1.5)
        with pytest.raises(DomainError):
            nu_p(0.5)

    @pytest.mark.parametrize("measure", [nu_p(1), nu_p(2.5), lambda_q(0.3), lambda_q(1.0), lebesgue(HALF_LINE)], ids=repr)
    def test_additivity(self, measure):
        rng = np.random.default_rng(7)
        hi = 1.0 if measure.space == UNIT_INTERVAL else 1e6
        for _ in range(1000):
            a, b, c = np.sort(rng.uniform(1e-6, hi, 3))
            whole = interval_mass(measure, a, c)
            parts = interval_mass(measure, a, b) + interval_mass(measure, b, c)
            assert parts == pytest.approx(whole, rel=1e-12)

    @pytest.mark.parametrize("measure", [nu_p(1), nu_p(3), lambda_q(0.5), lambda_q(1.0), lebesgue()], ids=repr)
    def test_quadrature_matches_closed_form(self, measure):
        rng = np.random.default_rng(3)
        hi = 1.0 if measure.space == UNIT_INTERVAL else 1e8
        for _ in range(30):
            a, b = np.sort(rng.uniform(1e-5, hi, 2))
            assert integrate(measure, None, a, b) == pytest.approx(interval_mass(measure, a, b), rel=1e-9)


class TestIntegrate:
    def test_nu1_truncated(self):
        assert integrate(nu_p(1), None, 0.1, 1) == pytest.approx(9.0, rel=1e-12)

    def test_log_divergence_at_zero(self):
        with pytest.raises(NonIntegrable):
            integrate(nu_p(1), identity(), 0.0, 1.0)
        assert integrate(nu_p(1), identity(), 1e-3, 1.0) == pytest.approx(math.log(1e3), rel=1e-10)

    def test_integrable_at_zero(self):
        # x^3 against x^-2: converges to 1/2
        assert integrate(nu_p(1), lambda x: x**3, 0.0, 1.0, tol=1e-12) == pytest.approx(0.5, rel=1e-9)

    def test_constant_one_at_singular_end(self):
        with pytest.raises(NonIntegrable):
            integrate(nu_p(1), None, 0.0, 1.0)

    def test_halfline_tail(self):
        got = integrate(lebesgue(HALF_LINE), lambda y: np.exp(-y), 0.0, math.inf)
        assert got == pytest.approx(1.0, rel=1e-10)


class TestAverages:
    def test_constant_average(self):
        for a in (0.5, 0.01, 1e-6):
            assert finite_volume_average(nu_p(2), constant(3.0), a) == pytest.approx(3.0, rel=1e-12)

    def test_identity_under_nu1(self):
        assert finite_volume_average(nu_p(1), identity(), 0.01) == pytest.approx(math.log(100) / 99, rel=1e-12)

    def test_counterexample_at_beta3(self):
        got = finite_volume_average(lebesgue(HALF_LINE), counterexample_kk(), 53)
        assert got == pytest.approx(32 / 53, rel=1e-13)

    def test_singular_box_rejected(self):
        with pytest.raises(SingularMass):
            finite_volume_average(nu_p(1), constant(1.0), 0.0)

    def test_identity_average_vanishes(self):
        est = estimate_global_average(nu_p(2), identity())
        assert est.converged
        assert abs(est.value) < 1e-9

    def test_counterexample_has_no_lebesgue_average(self):
        seq = []
        for n in range(3, 9):
            seq += [float(n**n - 1), float(2 * n**n - 1)]
        est = estimate_global_average(lebesgue(HALF_LINE), counterexample_kk(), seq)
        assert not est.converged
        lows, highs = est.trace[::2], est.trace[1::2]
        assert max(lows) < 0.2 and min(highs) >= 0.5

    def test_counterexample_lambda1_average_tends_to_zero(self):
        ns = range(20, 60, 5)
        vals = [finite_volume_average(lambda_q(1), counterexample_kk(), float(2 * n**n - 1)) for n in ns]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 0.2


class TestCounterexample:
    def test_values(self):
        assert counterexample_F(0.5) == 1
        assert counterexample_F(1.5) == 0
        for k in range(1, 13):
            assert counterexample_F(k**k - 1) == 1
            assert counterexample_F(2 * k**k - 1) == 0

    def test_vectorized_agrees_with_scalar(self):
        y = np.concatenate([np.linspace(0, 100, 2001), np.geomspace(100, 1e12, 500)])
        assert np.array_equal(counterexample_F(y), np.array([counterexample_F(float(v)) for v in y]))

    def test_values_near_float_max(self):
        y = np.array([1.6e308, 1.7e308, 1.79e308])
        assert np.array_equal(counterexample_F(y), [counterexample_F(float(v)) for v in y])

    def test_closed_forms(self):
        ex = counterexample_averages(3, exact=True)
        assert ex["leb_at_alpha"] == Fraction(5, 26)
        assert ex["leb_at_beta"] == Fraction(32, 53)
        assert counterexample_averages(10)["lambda1_at_alpha"] == pytest.approx(9 * math.log(2) / (10 * math.log(10)), abs=1e-15)

    def test_dichotomy_bounds(self):
        for n in range(3, 15):
            r = counterexample_averages(n)
            assert r["leb_at_beta"] >= 0.5
            assert r["leb_at_alpha"] <= 2 / n
            assert r["lambda1_at_alpha"] <= 3 / math.log(n)
            assert r["lambda1_at_beta"] <= 3 / math.log(n)

    def test_large_n_without_overflow(self):
        r = counterexample_averages(400)
        assert 0.5 <= r["leb_at_beta"] <= 1
        assert r["leb_at_alpha"] < 0.01

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 60))
    def test_exact_and_float_modes_agree(self, n):
        ex = counterexample_averages(n, exact=True)
        fl = counterexample_averages(n)
        assert float(ex["leb_at_beta"]) == pytest.approx(fl["leb_at_beta"], rel=1e-15)
        assert ex["leb_at_beta"] >= Fraction(1, 2)


class TestObservables:
    def test_box(self):
        box = indicator(0.5, 1.0)
        assert list(box(np.array([0.4, 0.5, 1.0]))) == [0, 1, 1]
        assert box.role == "Local" and box.cuts(0, 2) == [0.5, 1.0]

    def test_piecewise_constant(self):
        f = piecewise_constant([0.0, 1.0, 2.0], [3.0, 4.0, 5.0])
        assert list(f(np.array([0.5, 1.0, 7.0]))) == [3.0, 4.0, 5.0]
        assert f.bound == 5.0

    def test_table(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("breakpoint,value\n0,1\n2,-1\n")
        f = table_observable(path)
        assert list(f(np.array([1.0, 3.0]))) == [1.0, -1.0]

    def test_transport_to_interval(self):
        g = on_interval(counterexample_kk(), 1.0)
        # y = 1/x - 1
        assert g(np.array([0.9]))[0] == 1.0  # y ~ 0.11
        assert g(np.array([0.4]))[0] == 0.0  # y = 1.5

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-3, 1e9))
    def test_global_bound(self, y):
        assert 0 <= counterexample_F(y) <= counterexample_kk().bound
