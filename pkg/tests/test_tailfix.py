import math

import numpy as np
import pytest

from tailglm.errors import ConstructionError
from tailglm.links import (
    LinkFunction,
    antiderivative_m,
    compute_assumption_bounds,
    make_comp_exponential,
    make_scaled_sigmoid,
)
from tailglm.tailfix import (
    CorrectedLink,
    InputRangeBounds,
    SearchParams,
    build_corrected_link,
    find_lower_knot,
    find_upper_knot,
    passthrough_link,
)

from oracles import central_diff, second_diff, simpson_quad


def identity_link():
    return LinkFunction(
        name="identity",
        value=lambda x: np.asarray(x, dtype=float),
        deriv1=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        deriv2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )


@pytest.fixture(scope="module")
def exp_corrected():
    return build_corrected_link(
        make_comp_exponential(), InputRangeBounds(2.0, 0.0, 2)
    )


@pytest.fixture(scope="module")
def sig_corrected():
    return build_corrected_link(
        make_scaled_sigmoid(), InputRangeBounds(3.0, -3.0, 3)
    )


class TestBounds:
    def test_valid(self):
        b = InputRangeBounds(2.0, -1.0, 3)
        assert b.upper_u == 2.0

    @pytest.mark.parametrize(
        "u, l, d", [(-0.5, -1.0, 2), (1.0, 0.5, 2), (1.0, -1.0, 0)]
    )
    def test_invalid(self, u, l, d):
        with pytest.raises(ValueError):
            InputRangeBounds(u, l, d)


class TestKnotSearch:
    def test_comp_exponential_upper(self):
        # curvature -e^(-x) is negative everywhere, so the scan start wins
        x = find_upper_knot(make_comp_exponential(), InputRangeBounds(2.0, 0.0, 2))
        assert x == 4.0

    def test_comp_exponential_lower_absent(self):
        assert (
            find_lower_knot(make_comp_exponential(), InputRangeBounds(2.0, 0.0, 2))
            is None
        )

    def test_scaled_sigmoid_both(self):
        link = make_scaled_sigmoid()
        bounds = InputRangeBounds(3.0, -3.0, 3)
        assert find_upper_knot(link, bounds) == 6.0
        assert find_lower_knot(link, bounds) == -6.0

    def test_unbounded_link_absent(self):
        bounds = InputRangeBounds(1.0, -1.0, 1)
        assert find_upper_knot(identity_link(), bounds) is None
        assert find_lower_knot(identity_link(), bounds) is None

    def test_flat_tail_fails(self):
        # claims bounds but has zero curvature everywhere: no knot exists
        liar = LinkFunction(
            name="liar",
            value=lambda x: np.asarray(x, dtype=float),
            deriv1=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            deriv2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            sup_value=1e9,
            inf_value=-1e9,
        )
        search = SearchParams(span=50.0)
        with pytest.raises(ConstructionError):
            find_upper_knot(liar, InputRangeBounds(1.0, -1.0, 1), search)
        with pytest.raises(ConstructionError):
            find_lower_knot(liar, InputRangeBounds(1.0, -1.0, 1), search)

    def test_degenerate_curvature_skipped(self):
        # curvature exactly zero at the scan start, healthy half a step later
        link = LinkFunction(
            name="flat_then_curved",
            value=lambda x: np.asarray(x, dtype=float),
            deriv1=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            deriv2=lambda x: np.where(np.asarray(x, dtype=float) < 2.4, 0.0, -0.01),
            sup_value=100.0,
        )
        c = build_corrected_link(link, InputRangeBounds(1.0, 0.0, 1))
        assert c.knots.x_star == 2.5


class TestConstruction:
    def test_comp_exponential_knots(self, exp_corrected):
        k = exp_corrected.knots
        assert k.x_star == 4.0
        assert k.x_dstar is None
        assert k.a_plus == pytest.approx(math.exp(-4.0), rel=1e-15)
        assert k.b_plus == pytest.approx(-math.exp(-4.0), rel=1e-15)
        assert exp_corrected.diverges_above and exp_corrected.diverges_below

    def test_scaled_sigmoid_knots(self, sig_corrected):
        k = sig_corrected.knots
        assert (k.x_star, k.x_dstar) == (6.0, -6.0)
        assert k.a_plus > 0 and k.b_plus < 0
        assert k.a_minus > 0 and k.b_minus > 0

    def test_passthrough_is_identity(self):
        link = make_comp_exponential()
        c = passthrough_link(link)
        assert c.knots.x_star is None and c.knots.x_dstar is None
        assert not c.diverges_above  # bounded above and no tail added
        xs = np.linspace(-5.0, 50.0, 64)
        np.testing.assert_array_equal(c.value(xs), np.asarray(link.value(xs)))

    def test_unbounded_link_untouched(self):
        c = build_corrected_link(identity_link(), InputRangeBounds(1.0, -1.0, 2))
        assert c.knots.x_star is None and c.knots.x_dstar is None
        assert float(c.value(123.0)) == 123.0


class TestCoreIdentity:
    @pytest.mark.parametrize("fixture", ["exp_corrected", "sig_corrected"])
    def test_core_is_bitwise_identical(self, fixture, request):
        c = request.getfixturevalue(fixture)
        rng = np.random.default_rng(11)
        xs = rng.uniform(c.bounds.lower_l, c.bounds.upper_u, size=1000)
        np.testing.assert_array_equal(c.value(xs), np.asarray(c.base.value(xs)))
        np.testing.assert_array_equal(c.deriv1(xs), np.asarray(c.base.deriv1(xs)))
        np.testing.assert_array_equal(c.deriv2(xs), np.asarray(c.base.deriv2(xs)))

    def test_knot_point_belongs_to_core(self, exp_corrected):
        xs = exp_corrected.knots.x_star
        assert float(exp_corrected.value(xs)) == float(exp_corrected.base.value(xs))


def _knots_of(c):
    out = []
    if c.knots.x_star is not None:
        out.append(c.knots.x_star)
    if c.knots.x_dstar is not None:
        out.append(c.knots.x_dstar)
    return out


class TestSmoothness:
    @pytest.mark.parametrize("fixture", ["exp_corrected", "sig_corrected"])
    def test_one_sided_limits_agree(self, fixture, request):
        c = request.getfixturevalue(fixture)
        for xk in _knots_of(c):
            d = 1e-8
            assert abs(float(c.value(xk - d)) - float(c.value(xk + d))) <= 1e-9
            assert abs(float(c.deriv1(xk - d)) - float(c.deriv1(xk + d))) <= 1e-9
            assert abs(float(c.deriv2(xk - d)) - float(c.deriv2(xk + d))) <= 1e-9

    @pytest.mark.parametrize("fixture", ["exp_corrected", "sig_corrected"])
    def test_c2_stitching_finite_differences(self, fixture, request):
        c = request.getfixturevalue(fixture)
        for xk in _knots_of(c):
            fd1 = central_diff(c.value, xk, h=1e-5)
            assert abs(fd1 - float(c.deriv1(xk))) <= 1e-6
            fd2 = second_diff(c.value, xk, h=1e-4)
            assert abs(fd2 - float(c.deriv2(xk))) <= 1e-5

    def test_upper_knot_values_match_base(self, exp_corrected):
        xs = exp_corrected.knots.x_star
        assert float(exp_corrected.value(xs + 1e-12)) == pytest.approx(
            float(exp_corrected.base.value(xs)), abs=1e-12
        )


class TestTailBehavior:
    def test_tail_point_closed_form(self, exp_corrected):
        # at x = x_star - (a/b)(e-1) the log argument is exactly e, so the
        # tail must sit at mu(x_star) - a^2/b
        k = exp_corrected.knots
        a, b = k.a_plus, k.b_plus
        x = k.x_star - (a / b) * (math.e - 1.0)
        expected = float(exp_corrected.base.value(k.x_star)) - a * a / b
        assert float(exp_corrected.value(x)) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("fixture", ["exp_corrected", "sig_corrected"])
    def test_tail_monotone_and_unbounded(self, fixture, request):
        c = request.getfixturevalue(fixture)
        xs = c.knots.x_star
        points = [xs + 10.0**k for k in range(7)]
        assert all(float(c.deriv1(p)) > 0.0 for p in points)
        vals = [float(c.value(p)) for p in points]
        assert all(v2 > v1 for v1, v2 in zip(vals, vals[1:]))
        # growth is logarithmic: coeff * log1p(distance / offset), exactly
        k = c.knots
        coeff = -k.a_plus**2 / k.b_plus
        offset = -k.a_plus / k.b_plus
        grown = float(c.value(xs + 1e6)) - float(c.value(xs))
        assert grown == pytest.approx(coeff * math.log1p(1e6 / offset), rel=1e-12)
        assert grown > 0.0

    def test_lower_tail_mirrors(self, sig_corrected):
        c = sig_corrected
        xd = c.knots.x_dstar
        points = [xd - 10.0**k for k in range(7)]
        assert all(float(c.deriv1(p)) > 0.0 for p in points)
        vals = [float(c.value(p)) for p in points]
        assert all(v2 < v1 for v1, v2 in zip(vals, vals[1:]))

    @pytest.mark.parametrize("fixture", ["exp_corrected", "sig_corrected"])
    def test_tail_derivative_caps(self, fixture, request):
        c = request.getfixturevalue(fixture)
        ab = compute_assumption_bounds(
            c.base,
            np.zeros(c.bounds.dim_d),
            extra_interval=(
                (c.knots.x_dstar or c.bounds.lower_l) - 1.0,
                c.knots.x_star + 1.0,
            ),
        )
        rng = np.random.default_rng(5)
        tail = c.knots.x_star + 10.0 ** rng.uniform(-3.0, 6.0, size=1000)
        d1 = np.asarray(c.deriv1(tail))
        d2 = np.asarray(c.deriv2(tail))
        assert np.all(d1 > 0.0)
        assert np.all(d1 < c.knots.a_plus)
        assert c.knots.a_plus <= ab.l_mu
        assert np.all(d2 <= ab.m_mu)
        assert np.all(d2 < 0.0)  # upper tail stays concave
        if c.knots.x_dstar is not None:
            tail = c.knots.x_dstar - 10.0 ** rng.uniform(-3.0, 6.0, size=1000)
            d1 = np.asarray(c.deriv1(tail))
            d2 = np.asarray(c.deriv2(tail))
            assert np.all(d1 > 0.0)
            assert np.all(d1 < c.knots.a_minus)
            assert np.all(d2 > 0.0)
            assert np.all(d2 <= ab.m_mu)


class TestAntiderivative:
    @pytest.mark.parametrize("fixture", ["exp_corrected", "sig_corrected"])
    def test_zero_and_core(self, fixture, request):
        c = request.getfixturevalue(fixture)
        assert float(c.antiderivative(0.0)) == 0.0
        xs = np.linspace(c.bounds.lower_l, c.bounds.upper_u, 41)
        np.testing.assert_array_equal(
            c.antiderivative(xs), np.asarray(antiderivative_m(c.base, xs))
        )

    @pytest.mark.parametrize("fixture", ["exp_corrected", "sig_corrected"])
    def test_stitched_tail_vs_quadrature(self, fixture, request):
        c = request.getfixturevalue(fixture)
        x = c.knots.x_star + 1.0
        oracle = simpson_quad(lambda t: float(c.value(t)), 0.0, x, n=16385)
        assert float(c.antiderivative(x)) == pytest.approx(oracle, abs=1e-8)
        if c.knots.x_dstar is not None:
            x = c.knots.x_dstar - 1.0
            oracle = simpson_quad(lambda t: float(c.value(t)), 0.0, x, n=16385)
            assert float(c.antiderivative(x)) == pytest.approx(oracle, abs=1e-8)

    @pytest.mark.parametrize("fixture", ["exp_corrected", "sig_corrected"])
    def test_second_difference_matches_deriv1(self, fixture, request):
        c = request.getfixturevalue(fixture)
        probes = [
            c.bounds.lower_l + 0.3,
            0.0,
            c.bounds.upper_u - 0.3,
            c.knots.x_star + 2.5,
            c.knots.x_star + 40.0,
        ]
        if c.knots.x_dstar is not None:
            probes += [c.knots.x_dstar - 2.5, c.knots.x_dstar - 40.0]
        for x in probes:
            fd2 = second_diff(c.antiderivative, x, h=1e-4)
            assert abs(fd2 - float(c.deriv1(x))) <= 1e-5
            assert fd2 > 0.0  # convexity

    def test_far_tail_continuity(self, sig_corrected):
        # antiderivative should be continuous and increasing across the knot
        c = sig_corrected
        xs = np.linspace(c.knots.x_star - 0.5, c.knots.x_star + 0.5, 101)
        vals = np.asarray(c.antiderivative(xs))
        assert np.all(np.diff(vals) > 0.0)
