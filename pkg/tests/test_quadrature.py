import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glomix.errors import NonIntegrable
from glomix.grid import GridFunction, geometric_grid
from glomix.quadrature import gk_integrate


class TestGaussKronrod:
    def test_power_singularity_away_from_zero(self):
        assert gk_integrate(lambda x: x**-2.0, 0.1, 1.0).value == pytest.approx(9.0, rel=1e-13)

    def test_jump_with_breakpoint(self):
        f = lambda x: np.where(x < 0.3, 1.0, 2.0)  # noqa: E731
        assert gk_integrate(f, 0, 1, breakpoints=[0.3]).value == pytest.approx(0.3 + 1.4, abs=1e-14)

    def test_jump_without_breakpoint_still_converges(self):
        f = lambda x: np.where(x < 1 / 3, 1.0, 0.0)  # noqa: E731
        assert gk_integrate(f, 0, 1, rtol=1e-14, atol=1e-14).value == pytest.approx(1 / 3, abs=1e-13)

    def test_very_wide_range(self):
        got = gk_integrate(lambda y: 1 / (1 + y), 0.0, 1e200).value
        assert got == pytest.approx(math.log1p(1e200), rel=1e-12)

    def test_oscillatory(self):
        got = gk_integrate(np.sin, 0.0, 1e4).value
        assert got == pytest.approx(1 - math.cos(1e4), abs=1e-8)

    def test_reversed_bounds(self):
        assert gk_integrate(np.exp, 1.0, 0.0).value == pytest.approx(-(math.e - 1), rel=1e-14)

    def test_empty_interval(self):
        assert gk_integrate(np.exp, 2.0, 2.0).value == 0.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    @pytest.mark.parametrize("power", [1.0, 1.5])
    def test_divergent_integrand_raises(self, power):
        with pytest.raises(NonIntegrable):
            gk_integrate(lambda x: x**-power, 0.0, 1.0, max_panels=2000)

    def test_infinite_bound_rejected(self):
        with pytest.raises(ValueError):
            gk_integrate(np.exp, 0.0, math.inf)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(0.0, 2.0), st.floats(0.1, 3.0))
    def test_polynomials_exact(self, coeffs, a, width):
        b = a + width
        poly = np.polynomial.Polynomial(coeffs)
        want = poly.integ()(b) - poly.integ()(a)
        got = gk_integrate(poly, a, b, atol=1e-13).value
        assert got == pytest.approx(want, abs=1e-11 * max(1.0, abs(want)))

    def test_reduction_order_is_fixed(self):
        f = lambda x: np.sin(7 * x) * np.exp(x)  # noqa: E731
        values = {gk_integrate(f, 0, 5).value for _ in range(3)}
        assert len(values) == 1


class TestGridFunction:
    def test_geometric_grid(self):
        g = geometric_grid(1e-6, 1.0, 100, include_zero=True, uniform_tail=10)
        assert g[0] == 0.0 and g[-1] == 1.0
        assert np.all(np.diff(g) > 0)

    def test_interp_conventions(self):
        gf = GridFunction([0.0, 1.0, 2.0], [3.0, 2.0, 1.0], "HalfLine")
        assert gf(0.5) == 2.5
        assert gf(5.0) == 0.0
        assert gf(-1.0) == 3.0

    def test_norm_and_monotone(self):
        gf = GridFunction([0.0, 1.0, 2.0], [2.0, 1.0, -1.0])
        assert gf.l1_norm() == pytest.approx(1.5 + 1.0)
        assert gf.is_decreasing()
        assert gf.worst_increase() == -1.0

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            GridFunction([0.0, 0.0, 1.0], [1.0, 1.0, 1.0])

    def test_csv_round_trip(self, tmp_path):
        gf = GridFunction(np.geomspace(1e-9, 1, 50), np.random.default_rng(1).random(50))
        gf.to_csv(tmp_path / "g.csv")
        back = GridFunction.from_csv(tmp_path / "g.csv")
        assert np.array_equal(back.grid, gf.grid)
        assert np.array_equal(back.values, gf.values)
