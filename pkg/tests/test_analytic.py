"""Tests for the closed-form kernels and the Green quadrature."""
import math

import numpy as np
import pytest

from models.geometry import Disc, EmptyRegion, MoebiusMap, QuadratureSpec, TestFunction
from services import analytic
from utils.errors import ConfigurationError, DomainError, PrecisionError


def test_green_disc_is_symmetric_and_positive():
    x, y = 0.2 + 0.1j, -0.5 + 0.3j
    assert analytic.green_disc(x, y) == pytest.approx(analytic.green_disc(y, x), rel=1e-14)
    assert analytic.green_disc(x, y) > 0


def test_green_disc_rejects_bad_points():
    with pytest.raises(DomainError):
        analytic.green_disc(0.3, 0.3)
    with pytest.raises(DomainError):
        analytic.green_disc(1.2, 0.0)


def test_green_disc_scales_with_radius():
    assert analytic.green_disc(0.1, 0.2j, r=0.5) == pytest.approx(analytic.green_disc(0.2, 0.4j), rel=1e-14)


def test_green_is_moebius_invariant():
    m = MoebiusMap(0.35 - 0.2j, 1.1)
    rng = np.random.default_rng(7)
    for _ in range(20):
        x, y = 0.9 * rng.uniform(-0.7, 0.7, 2) @ [1, 1j], 0.9 * rng.uniform(-0.7, 0.7, 2) @ [1, 1j]
        image_x, _ = analytic.moebius_eval(m, x)
        image_y, _ = analytic.moebius_eval(m, y)
        assert analytic.green_disc(image_x, image_y) == pytest.approx(analytic.green_disc(x, y), abs=1e-12)


def test_moebius_inverse_round_trip():
    m = MoebiusMap(-0.4 + 0.25j, 0.3)
    z = 0.1 - 0.6j
    image, derivative = analytic.moebius_eval(m, z)
    back, inverse_derivative = analytic.moebius_eval(m, image, inverse=True)
    assert back == pytest.approx(z, abs=1e-13)
    assert derivative * inverse_derivative == pytest.approx(1.0, rel=1e-12)


def test_poisson_kernel_normalization():
    assert analytic.harmonic_extension(np.ones(64), 0.3 + 0.4j) == pytest.approx(1.0, abs=1e-10)


def test_poisson_kernel_rejects_off_circle_point():
    with pytest.raises(DomainError):
        analytic.poisson_kernel_disc(0.2, 0.9)
    assert analytic.poisson_kernel_disc(0.0, 1.0) == pytest.approx(1.0 / (2.0 * math.pi))


def test_harmonic_extension_reproduces_linear_data():
    values = analytic.sample_boundary(np.cos, 64)
    x = np.array([0.3, -0.2 + 0.5j, 0.6j])
    assert analytic.harmonic_extension(values, x) == pytest.approx(x.real, abs=1e-12)


def test_harmonic_extension_needs_eight_nodes():
    with pytest.raises(ConfigurationError):
        analytic.harmonic_extension(np.ones(4), 0.0)


def test_kernel_K_at_center():
    for y in (0.0, 0.5, 0.9, 0.9998):
        assert analytic.kernel_K(1.0, 0.0, y) == pytest.approx(2.0 / math.pi, rel=1e-8)


def test_kernel_K_reports_both_iterates_at_the_node_cap():
    with pytest.raises(PrecisionError) as info:
        analytic.kernel_K(1.0, 0.0, 1.0 - 1e-7)
    assert info.value.previous != info.value.current


@pytest.mark.parametrize("y0", [0.3, 0.5, 0.7, 0.9, 0.95, 0.98])
def test_loop_F_chain_matches_squared_log(y0):
    assert analytic.loop_F_chain(y0) == pytest.approx(math.log(y0) ** 2 / math.pi ** 2, rel=1e-6)


def test_loop_F_chain_inside_the_edge_strip():
    for y0 in (0.9999, 0.99995):
        assert analytic.loop_F_chain(y0) == pytest.approx(math.log(y0) ** 2 / math.pi ** 2, rel=1e-6)
    assert analytic.loop_F_chain(0.999) < 1e-6


def test_expected_exit_time_and_circle_average():
    assert analytic.expected_exit_time(0.0) == pytest.approx(0.5)
    rho, y = 0.3, 0.6 + 0.0j
    theta = 2.0 * math.pi * np.arange(256) / 256
    average = np.mean([analytic.green_disc(rho * np.exp(1j * t), y) for t in theta])
    assert average == pytest.approx(analytic.green_circle_average(rho, y), abs=1e-10)


def test_quad_green_power_matches_mean_value_formula(left_disc, right_disc):
    # G is harmonic in each variable away from the diagonal, so ∫∫G = |A||B|·G(c_A, c_B)
    expected = left_disc.area * right_disc.area * analytic.green_disc(left_disc.center, right_disc.center)
    result = analytic.quad_green_power(left_disc, right_disc, 1)
    assert result.value == pytest.approx(expected, rel=1e-6)
    assert result.error <= 1e-6 * result.value


def test_quad_green_power_agrees_across_resolutions(left_disc, right_disc):
    coarse = analytic.quad_green_power(left_disc, right_disc, 2, QuadratureSpec(8, 2, 1e-6))
    fine = analytic.quad_green_power(left_disc, right_disc, 2, QuadratureSpec(10, 3, 1e-6))
    assert fine.value == pytest.approx(coarse.value, rel=1e-5)


def test_quad_green_power_is_monotone_in_the_region(left_disc, right_disc):
    smaller = Disc(right_disc.center, 0.15)
    assert analytic.quad_green_power(left_disc, smaller, 2).value < analytic.quad_green_power(left_disc, right_disc, 2).value


def test_quad_green_power_empty_region():
    assert analytic.quad_green_power(EmptyRegion(), Disc(0.2, 0.1), 1).value == 0.0


def test_quad_green_power_rejects_escaping_region():
    with pytest.raises(DomainError):
        analytic.quad_green_power(Disc(0.9, 0.2), Disc(-0.3, 0.1), 1)


def test_quad_green_power_reports_nonconvergence():
    disc = Disc(0.0, 0.2)
    with pytest.raises(PrecisionError) as info:
        analytic.quad_green_power(disc, disc, 1, QuadratureSpec(8, 1, 1e-9))
    assert info.value.previous != info.value.current


@pytest.mark.slow
def test_quad_green_power_self_overlap_closed_form():
    radius = 0.2
    expected = math.pi * radius ** 4 * (0.25 - math.log(radius))
    disc = Disc(0.0, radius)
    result = analytic.quad_green_power(disc, disc, 1, QuadratureSpec(8, 5, 1e-3))
    assert result.value == pytest.approx(expected, rel=1e-2)


def test_transported_quadrature_equals_quadrature_over_images(left_disc, right_disc):
    m = MoebiusMap(0.2 + 0.1j, 0.4)
    mapped_a, mapped_b = left_disc.transported(m), right_disc.transported(m)
    expected = mapped_a.area * mapped_b.area * analytic.green_disc(mapped_a.center, mapped_b.center)
    result = analytic.quad_green_power_transported(left_disc, right_disc, m, 1)
    assert result.value == pytest.approx(expected, rel=1e-5)


def test_green_chain_of_two_equals_green_power(left_disc, right_disc):
    chain = analytic.quad_green_chain([left_disc, right_disc])
    assert chain.value == pytest.approx(analytic.quad_green_power(left_disc, right_disc, 1).value, rel=1e-5)
    assert analytic.quad_green_chain([left_disc, right_disc, EmptyRegion()]).value == 0.0


def test_p_fold_target_scales_green_power(left_disc, right_disc):
    assert analytic.p_fold_intersection_target(left_disc, right_disc, 2) == pytest.approx(
        16.0 * analytic.quad_green_power(left_disc, right_disc, 2).value)


def test_gff_covariance_of_disjoint_discs(left_disc, right_disc):
    f = TestFunction(left_disc, 2.0)
    g = TestFunction(right_disc, 1.0)
    expected = 0.5 * 2.0 * left_disc.area * right_disc.area * analytic.green_disc(-0.4, 0.4)
    assert analytic.gff_covariance(f, g) == pytest.approx(expected, rel=1e-6)
    assert analytic.gff_covariance(TestFunction(left_disc, 0.0), g) == 0.0


def test_dirichlet_target_for_cosine_boundary():
    disc = Disc(0.3, 0.2)
    values = analytic.sample_boundary(np.cos, 512)
    assert analytic.dirichlet_occupation_target(values, disc) == pytest.approx(2.0 * 0.3 * disc.area, rel=1e-7)


@pytest.mark.parametrize("order", [0, 1, 2])
def test_rayleigh_sums_behind_the_disc_green_square(order):
    from scipy.special import jn_zeros

    zeros = jn_zeros(order, 1000)
    assert np.sum(zeros ** -4.0) == pytest.approx(1.0 / (16.0 * (order + 1) ** 2 * (order + 2)), rel=1e-8)


def test_disc_green_square_sums_the_eigenvalues():
    nu = np.arange(1, 1_000_000, dtype=float)
    series = 4.0 * (1.0 / 32.0 + 2.0 * np.sum(1.0 / (16.0 * (nu + 1) ** 2 * (nu + 2))))
    assert analytic.UNIT_DISC_GREEN_SQUARE == pytest.approx(series, rel=1e-9)


def test_small_loop_variance_scales_with_r_min():
    f = TestFunction(Disc(0.1, 0.3), 2.0)
    expected = 4.0 * 0.1 ** 4 * analytic.UNIT_DISC_GREEN_SQUARE
    assert analytic.small_loop_variance(f, 0.1) == pytest.approx(expected, rel=1e-12)
    assert analytic.small_loop_variance(f, 0.0) == 0.0
    assert analytic.small_loop_variance(TestFunction(Disc(0.5, 0.1)), 0.1) == 0.0
    with pytest.raises(ConfigurationError):
        analytic.small_loop_variance(TestFunction(Disc(0.12, 0.05)), 0.1)

