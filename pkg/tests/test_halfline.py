import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glomix.checks import check_A5
from glomix.errors import DomainError
from glomix.halfline import (
    check_B3,
    conjugate,
    conjugate_inverse_branch_derivative,
    halfline_tail_terms,
    psi,
    psi_inv,
    pushforward_density,
)
from glomix.maps import (
    build_generalized_lsv,
    build_generalized_pm,
    build_lsv,
    eval_map,
    geometric_endpoints,
    lsv_first_endpoint,
)
from glomix.measures import HALF_LINE, integrate, interval_mass, lambda_q, lebesgue, nu_p


def lsv1_closed_form(y):
    y = np.asarray(y, dtype=float)
    return np.where(y < 1, 2 * y / (1 - np.where(y < 1, y, 0.0)), (y + 2) * (y - 1) / (y + 3))


class TestPsi:
    def test_values(self):
        assert psi(1.0, 3.0) == 0.0
        assert psi(0.5, 1.0) == 1.0
        assert psi(0.5, 2.0) == 1.5

    def test_domain(self):
        for bad in (0.0, -1.0, 1.5):
            with pytest.raises(DomainError):
                psi(bad, 1.0)
        with pytest.raises(DomainError):
            psi_inv(-1.0, 1.0)
        assert psi_inv(math.inf, 2.0) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-12, 1.0), st.floats(1.0, 4.0))
    def test_round_trip(self, x, p):
        assert abs(psi_inv(psi(x, p), p) - x) <= 1e-13

    def test_strictly_decreasing(self):
        x = np.geomspace(1e-10, 1, 5000)
        for p in (1.0, 2.5):
            assert np.all(np.diff(psi(x, p)) < 0)


class TestConjugate:
    def test_lsv1_closed_forms(self):
        hm = conjugate(build_lsv(1))
        assert hm(3.0) == pytest.approx(5 / 3, rel=1e-14)
        assert hm(0.5) == pytest.approx(2.0, rel=1e-14)
        y = np.concatenate([np.linspace(0, 0.99, 300), np.linspace(1.0, 1e3, 700)])
        assert np.max(np.abs(hm(y) - lsv1_closed_form(y)) / np.maximum(1, lsv1_closed_form(y))) <= 1e-10

    @pytest.mark.parametrize("m", [build_lsv(1), build_lsv(2), build_generalized_pm(2, 1)], ids=repr)
    def test_zero_is_fixed(self, m):
        assert conjugate(m)(0.0) == 0.0

    def test_endpoints_reversed(self):
        hm = conjugate(build_lsv(1))
        assert list(hm.endpoints()) == [math.inf, 1.0, 0.0]

    @pytest.mark.parametrize("m", [build_lsv(1), build_lsv(3), build_generalized_pm(3, 2)], ids=repr)
    def test_conjugation_identity(self, m):
        hm = conjugate(m)
        x = np.geomspace(1e-6, 1, 10_000)
        x = x[np.min(np.abs(x[:, None] - m.endpoints()[None, :]), axis=1) > 1e-9]
        lhs = psi(eval_map(m, x), m.p)
        rhs = hm(psi(x, m.p))
        assert np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))) <= 1e-10

    def test_inverse_branch_lands_in_cell(self):
        hm = conjugate(build_lsv(2))
        ends = hm.endpoints()
        y = np.geomspace(1e-6, 1e6, 200)
        for j in range(2):
            z = hm.inverse_branch(j, y)
            assert np.all((z >= ends[j + 1]) & (z <= ends[j]))
            assert np.allclose(hm(z), y, rtol=1e-9)


class TestBranchDerivative:
    def test_linear_branch_value(self):
        m = build_lsv(1)
        assert conjugate_inverse_branch_derivative(m, 1, psi(0.5, 1.0)) == pytest.approx(2 / 9, rel=1e-14)

    @pytest.mark.parametrize("j", [0, 1])
    @pytest.mark.parametrize("p", [1, 2])
    def test_finite_difference_oracle(self, p, j):
        hm = conjugate(build_lsv(p))
        for y in (1e-4, 0.3, 2.0, 50.0):
            h = 1e-6 * max(1.0, y)
            lo = max(0.0, y - h)
            fd = (hm.inverse_branch(j, y + h) - hm.inverse_branch(j, lo)) / (y + h - lo)
            assert conjugate_inverse_branch_derivative(hm.source, j, y) == pytest.approx(fd, rel=1e-6)

    def test_lsv1_closed_form_inverse_derivatives(self):
        y = np.linspace(0, 10, 11)
        rows = halfline_tail_terms(build_lsv(1), y)
        # branch 0 lives on [1, inf): inverse of (z+2)(z-1)/(z+3)
        want0 = (1 + (y + 5) / np.sqrt((y + 1) * (y + 9))) / 2
        # branch 1 lives on [0, 1): inverse of 2z/(1-z) is y/(2+y)
        want1 = 2 / (2 + y) ** 2
        assert np.allclose(rows[0], want0, rtol=1e-12)
        assert np.allclose(rows[1], want1, rtol=1e-12)


class TestB3:
    MAPS = [build_lsv(1), build_lsv(2), build_generalized_pm(1, 1), build_generalized_pm(2, 3),
            build_generalized_lsv(1.0, 1.0, geometric_endpoints(lsv_first_endpoint(1.0, 1.0)))]

    @pytest.mark.parametrize("m", MAPS, ids=repr)
    def test_agrees_with_A5(self, m):
        b3 = check_B3(conjugate(m), 2000)
        a5 = check_A5(m, 2000)
        assert b3.passed == a5.passed is True

    def test_tail_sum_two_ways(self):
        m = build_lsv(1)
        xi = np.linspace(0.01, 0.99, 99)
        y = psi(xi, 1.0)
        halfline_side = halfline_tail_terms(m, y)[1]
        interval_side = (xi / ((xi + 1) / 2)) ** 2 * 0.5
        assert np.max(np.abs(halfline_side - interval_side)) <= 1e-9

    def test_endpoint_restatement(self):
        m = build_lsv(2)
        y = np.linspace(0, 100, 1001)
        S = np.cumsum(halfline_tail_terms(m, y)[::-1], axis=0)[::-1]
        assert np.all(S[:, :1] >= S - 1e-15)


class TestPushforward:
    def test_lebesgue_becomes_nu_p(self):
        rng = np.random.default_rng(11)
        for p in (1.0, 2.0):
            mu = pushforward_density(lebesgue(HALF_LINE), p)
            for a in rng.uniform(1e-3, 1, 30):
                got = integrate(mu, None, a, 1.0, tol=1e-12)
                assert got == pytest.approx((a**-p - 1) / p, rel=1e-10)

    def test_lambda_q_asymptotic(self):
        p, q = 2.0, 0.5
        mu = pushforward_density(lambda_q(q), p)
        for x in (1e-4, 1e-6):
            assert mu.density(x) / (p**q * x ** (p * q - p - 1)) == pytest.approx(1.0, rel=1e-3)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-3, 0.98), st.floats(1e-3, 0.5))
    def test_masses_match_by_change_of_variables(self, a, width):
        b = min(1.0, a + width)
        lo, hi = psi(b, 1.0), psi(a, 1.0)
        assert interval_mass(lebesgue(HALF_LINE), lo, hi) == pytest.approx(interval_mass(nu_p(1), a, b), rel=1e-10)

    def test_integral_transport(self):
        f = lambda y: np.exp(-y) * (1 + np.sin(y))  # noqa: E731
        lhs = integrate(lebesgue(HALF_LINE), f, 0.0, 40.0, tol=1e-12)
        rhs = integrate(nu_p(2), lambda x: f(psi(x, 2.0)), psi_inv(40.0, 2.0), 1.0, tol=1e-12)
        assert lhs == pytest.approx(rhs, rel=1e-8)
