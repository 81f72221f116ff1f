"""Tests for the Monte Carlo estimator service and the verdict rule."""
import math

import pytest

from config import Verdict
from models.estimate import Estimate, RunningStats
from models.geometry import BoundaryFunction, Disc, EmptyRegion
from models.path import LoopRootSpec
from services.estimators import EstimatorService, StratifiedStats, compare_with_target
from services.sampler import Constant, OccupationFunctional
from utils.errors import ConfigurationError, DomainError


@pytest.fixture
def service():
    return EstimatorService(workers=1, tasks=4)


def test_compare_with_target_passes_inside_tolerance():
    assert compare_with_target(Estimate(1.04, 0.5, 1000), 1.0, 0.05) == Verdict.PASS


def test_compare_with_target_flags_wide_intervals():
    assert compare_with_target(Estimate(1.2, 0.1, 1000), 1.0, 0.05) == Verdict.UNDERPOWERED
    assert compare_with_target(Estimate(0.0, math.inf, 1000), 1.0, 0.25) == Verdict.UNDERPOWERED


def test_compare_with_target_uses_inflated_interval():
    # outside tolerance, narrow interval, but within 1.96·1.5 standard errors
    assert compare_with_target(Estimate(1.06, 0.025, 1000), 1.0, 0.05) == Verdict.PASS


def test_compare_with_target_fails_far_estimates():
    assert compare_with_target(Estimate(1.3, 0.01, 1000), 1.0, 0.05) == Verdict.FAIL


def test_compare_with_target_at_zero():
    assert compare_with_target(Estimate(0.0, 0.0, 1000), 0.0, 0.05) == Verdict.PASS
    with pytest.raises(ConfigurationError):
        compare_with_target(Estimate(0.0, 0.0, 1000), 0.0, 0.0)


def test_stratified_estimate_averages_strata():
    stats = StratifiedStats.empty(2)
    stats.strata[0].push_many([1.0, 3.0])
    stats.strata[1].push_many([5.0, 7.0, 9.0])
    estimate = stats.estimate()
    assert estimate.mean == pytest.approx(4.5)
    assert estimate.std_error == pytest.approx(math.sqrt((2.0 / 2 + 4.0 / 3) / 4))
    assert stats.count == 5


def test_running_stats_merge_matches_pooled():
    left, right, pooled = RunningStats(), RunningStats(), RunningStats()
    left.push_many([1.0, 2.0, 4.0])
    right.push_many([8.0, 16.0])
    pooled.push_many([1.0, 2.0, 4.0, 8.0, 16.0])
    left.merge(right)
    assert left.count == pooled.count
    assert left.mean == pytest.approx(pooled.mean)
    assert left.variance == pytest.approx(pooled.variance)


def test_sample_count_floor(service, coarse_excursion, seed):
    with pytest.raises(ConfigurationError):
        service.mc_excursion_expectation(Constant(1.0), coarse_excursion, 999, seed)


def test_zero_functional_gives_zero(service, coarse_excursion, seed):
    estimate = service.mc_excursion_expectation(Constant(0.0), coarse_excursion, 1000, seed)
    assert estimate.mean == 0.0
    assert estimate.std_error == 0.0


def test_constant_functional_carries_angle_mass(service, coarse_excursion, seed):
    estimate = service.mc_excursion_expectation(Constant(1.0), coarse_excursion, 1000, seed)
    assert estimate.mean == pytest.approx(2.0 * math.pi / coarse_excursion.eps_start)
    assert estimate.std_error == pytest.approx(0.0, abs=1e-9)


def test_estimates_depend_on_seed_and_tasks_only(coarse_excursion, seed):
    functional = OccupationFunctional(Disc(0.5, 0.4))
    serial = EstimatorService(workers=1, tasks=4).mc_excursion_expectation(functional, coarse_excursion, 1000, seed)
    parallel = EstimatorService(workers=2, tasks=4).mc_excursion_expectation(functional, coarse_excursion, 1000, seed)
    assert serial.mean == parallel.mean
    assert serial.std_error == parallel.std_error


def test_covariance_of_outside_region_is_zero(service, coarse_excursion, seed):
    estimate = service.excursion_covariance(Disc(0.0, 0.2), Disc(2.0, 0.5), coarse_excursion, 1000, seed)
    assert estimate.mean == 0.0
    assert estimate.target == 0.0


def test_covariance_rejects_straddling_and_touching_regions(service, coarse_excursion, seed):
    with pytest.raises(DomainError):
        service.excursion_covariance(Disc(0.0, 0.2), Disc(0.9, 0.2), coarse_excursion, 1000, seed)
    with pytest.raises(DomainError):
        service.excursion_covariance(Disc(-0.2, 0.2), Disc(0.2, 0.2), coarse_excursion, 1000, seed)


def test_ordered_moment_with_an_empty_region(service, coarse_excursion, seed):
    regions = (Disc(-0.4, 0.1), EmptyRegion(), Disc(0.4, 0.1))
    estimate = service.higher_moment_ordered(regions, 3, coarse_excursion, 1000, seed)
    assert estimate.mean == 0.0
    with pytest.raises(ConfigurationError):
        service.higher_moment_ordered(regions, 2, coarse_excursion, 1000, seed)


def test_zero_boundary_function_gives_zero(service, coarse_excursion, seed):
    estimate = service.dirichlet_weighted_occupation(BoundaryFunction(), Disc(0.3, 0.2), coarse_excursion, 1000, seed)
    assert estimate.mean == 0.0
    assert estimate.target == 0.0


def test_loop_weights_average_to_root_integral(service, seed):
    # with r >= 0.5 the offset is ε everywhere and E[weight] = ((1 - r_min²) - ε(1 - r_min))/ε²
    spec = LoopRootSpec(eps_offset=0.05, r_min=0.5, dt_scale=1e-4)
    estimate = service.mc_loop_expectation(Constant(1.0), spec, 1000, seed)
    expected = ((1.0 - 0.25) - 0.05 * 0.5) / 0.05 ** 2
    assert estimate.mean == pytest.approx(expected, rel=1e-2)


def test_pair_estimator_without_meetings_is_underpowered(service, coarse_excursion, seed):
    A, B = Disc(-0.5, 0.01), Disc(0.5, 0.01)
    estimate = service.pair_intersection_covariance(A, B, coarse_excursion, 1000, 0.05, seed)
    assert estimate.std_error == math.inf
    assert compare_with_target(estimate, estimate.target, 0.25) == Verdict.UNDERPOWERED


def test_pair_estimator_checks_mollifier(service, coarse_excursion, seed):
    with pytest.raises(ConfigurationError):
        service.pair_intersection_covariance(Disc(-0.5, 0.1), Disc(0.5, 0.1), coarse_excursion, 1000, 0.01, seed)


@pytest.mark.slow
def test_occupation_expectation_is_twice_the_area(seed):
    from config import EXCURSION_TOLERANCE
    from models.path import ExcursionConfig

    region = Disc(0.0, 0.5)
    cfg = ExcursionConfig(eps_start=0.05, dt=1e-5)
    estimate = EstimatorService(workers=1, tasks=8).mc_excursion_expectation(
        OccupationFunctional(region), cfg, 200_000, seed, target=2.0 * region.area)
    assert compare_with_target(estimate, estimate.target, 3 * EXCURSION_TOLERANCE) != Verdict.FAIL
