"""
Reduced-scale Monte Carlo checks of the occupation identities and their invariants.

Excursions start on the circle of radius ρ = 1 - ε. Averaging G(ρe^{iθ}, a) over θ
gives -log(ρ)/π for |a| < ρ, so every occupation functional of regions inside the
start circle has the exact finite-ε value -log(1 - ε)/ε times its ε → 0 target.
The tests compare against those exact values, which leaves the time-step bias as
the only systematic error.
"""
import math

import numpy as np
import pytest

from config import ANGLE_MASS, LOOP_TOLERANCE, Verdict
from models.cloud import Cloud
from models.geometry import BoundaryFunction, Disc, MoebiusMap, TestFunction
from models.path import ExcursionConfig, LoopRootSpec, RngStream
from services import analytic
from services.clouds import CloudService
from services.estimators import EstimatorService, compare_with_target
from services.sampler import Lifetime, OrderedOccupation


@pytest.fixture
def service():
    return EstimatorService(workers=1, tasks=4)


@pytest.fixture
def moderate_excursion():
    return ExcursionConfig(eps_start=0.1, dt=4e-4)


def _occupation_factor(cfg):
    return -math.log1p(-cfg.eps_start) / cfg.eps_start


def _tau_mass(cfg):
    return ANGLE_MASS / cfg.eps_start * analytic.expected_exit_time(cfg.start_radius)


def _assert_matches(estimate, target, tol_rel, z=3.0):
    assert math.isfinite(estimate.std_error)
    assert abs(estimate.mean - target) <= tol_rel * abs(target) + z * estimate.std_error, (
        f"{estimate.mean:.6g} ± {estimate.std_error:.2g} vs {target:.6g}")


# ---------------------------------------------------------------------------
# Excursion identities
# ---------------------------------------------------------------------------

def test_tau_mass(service, moderate_excursion, seed):
    estimate = service.mc_excursion_expectation(Lifetime(), moderate_excursion, 20_000, seed)
    target = _tau_mass(moderate_excursion)
    assert target == pytest.approx(2.0 * math.pi * (1.0 - moderate_excursion.eps_start / 2.0))
    assert estimate.std_error < 0.03 * target
    # without the exit correction the estimate sits about 12% high here
    _assert_matches(estimate, target, 0.03)


def test_excursion_covariance(service, moderate_excursion, seed):
    A, B = Disc(-0.35, 0.25), Disc(0.35, 0.25)
    estimate = service.excursion_covariance(A, B, moderate_excursion, 20_000, seed)
    assert estimate.target == pytest.approx(4.0 * analytic.quad_green_power(A, B, 1).value)
    assert estimate.std_error < 0.5 * estimate.target
    _assert_matches(estimate, _occupation_factor(moderate_excursion) * estimate.target, 0.04)


def test_dirichlet_weighted_occupation(service, moderate_excursion, seed):
    A = Disc(0.4, 0.25)
    estimate = service.dirichlet_weighted_occupation(BoundaryFunction.parse("cos"), A, moderate_excursion,
                                                     20_000, seed)
    assert estimate.target == pytest.approx(2.0 * 0.4 * A.area, rel=1e-6)
    # the first Fourier mode of G on the start circle is Re(a)·(1/ρ - ρ)
    eps = moderate_excursion.eps_start
    exact = estimate.target * (2.0 - eps) / (2.0 * (1.0 - eps))
    assert estimate.std_error < 0.5 * exact
    _assert_matches(estimate, exact, 0.04)


@pytest.mark.slow
def test_third_ordered_moment(service, moderate_excursion, seed):
    regions = (Disc(-0.45, 0.15), Disc(0.0, 0.15), Disc(0.45, 0.15))
    estimate = service.higher_moment_ordered(regions, 3, moderate_excursion, 40_000, seed)
    assert estimate.target == pytest.approx(2.0 * analytic.quad_green_chain(regions).value)
    _assert_matches(estimate, _occupation_factor(moderate_excursion) * estimate.target, 0.10)


@pytest.mark.slow
def test_pair_intersection(service, moderate_excursion, seed):
    A, B = Disc(-0.3, 0.2), Disc(0.3, 0.2)
    estimate = service.pair_intersection_covariance(A, B, moderate_excursion, 2000, 0.05, seed)
    assert estimate.target == pytest.approx(16.0 * analytic.quad_green_power(A, B, 2).value)
    target = _occupation_factor(moderate_excursion) ** 2 * estimate.target
    assert compare_with_target(estimate, target, 0.5) != Verdict.FAIL


# ---------------------------------------------------------------------------
# Loop identity
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_loop_covariance(service, seed):
    # both regions avoid U_{r_min}, so the dropped roots carry none of the target
    A, B = Disc(-0.3, 0.2), Disc(0.3, 0.2)
    spec = LoopRootSpec(eps_offset=0.05, r_min=0.05, dt_scale=1e-4)
    estimate = service.loop_covariance(A, B, spec, 16_000, seed)
    assert estimate.target == pytest.approx(analytic.quad_green_power(A, B, 2).value)
    _assert_matches(estimate, estimate.target, 2 * LOOP_TOLERANCE)


# ---------------------------------------------------------------------------
# Invariants
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_tau_mass_under_time_step_refinement(service, seed):
    coarse = ExcursionConfig(eps_start=0.1, dt=4e-4)
    fine = ExcursionConfig(eps_start=0.1, dt=1e-4)
    first = service.mc_excursion_expectation(Lifetime(), coarse, 20_000, seed)
    second = service.mc_excursion_expectation(Lifetime(), fine, 20_000, seed + 1)
    target = _tau_mass(coarse)
    _assert_matches(first, target, 0.03)
    _assert_matches(second, target, 0.03)
    assert abs(first.mean - second.mean) <= 4.0 * math.hypot(first.std_error, second.std_error)


@pytest.mark.slow
def test_tau_mass_moves_toward_the_limit_as_eps_shrinks(service, seed):
    wide = ExcursionConfig(eps_start=0.1, dt=4e-4)
    narrow = ExcursionConfig(eps_start=0.05, dt=1e-4)
    first = service.mc_excursion_expectation(Lifetime(), wide, 20_000, seed)
    second = service.mc_excursion_expectation(Lifetime(), narrow, 20_000, seed + 1)
    _assert_matches(first, _tau_mass(wide), 0.03)
    _assert_matches(second, _tau_mass(narrow), 0.03)
    step = _tau_mass(narrow) - _tau_mass(wide)
    assert step == pytest.approx(math.pi * 0.05)
    assert abs(second.mean - first.mean - step) <= 0.03 * _tau_mass(narrow) + 4.0 * math.hypot(
        first.std_error, second.std_error)


@pytest.mark.slow
def test_standard_error_halves_with_four_times_the_samples(service, moderate_excursion, seed):
    small = service.mc_excursion_expectation(Lifetime(), moderate_excursion, 4000, seed)
    large = service.mc_excursion_expectation(Lifetime(), moderate_excursion, 16_000, seed + 1)
    assert 1.6 < small.std_error / large.std_error < 2.5


@pytest.mark.slow
def test_moebius_transport_keeps_the_covariance(service, moderate_excursion, seed):
    A, B = Disc(-0.3, 0.2), Disc(0.3, 0.2)
    m = MoebiusMap(0.2 + 0.1j, 0.3)
    mapped_a, mapped_b = A.transported(m), B.transported(m)
    assert max(mapped_a.max_modulus(), mapped_b.max_modulus()) < moderate_excursion.start_radius
    estimate = service.transported_covariance(A, B, m, moderate_excursion, 20_000, seed)
    assert estimate.target == pytest.approx(4.0 * analytic.quad_green_power(mapped_a, mapped_b, 1).value, rel=1e-5)
    _assert_matches(estimate, _occupation_factor(moderate_excursion) * estimate.target, 0.04)


@pytest.mark.slow
def test_excursions_are_reversible(service, moderate_excursion, seed):
    # the regions differ, so only time reversal makes A-then-B and B-then-A agree
    A, B = Disc(0.0, 0.3), Disc(0.55, 0.15)
    forward = service.mc_excursion_expectation(OrderedOccupation((A, B)), moderate_excursion, 20_000, seed)
    backward = service.mc_excursion_expectation(OrderedOccupation((B, A)), moderate_excursion, 20_000, seed)
    target = 2.0 * _occupation_factor(moderate_excursion) * analytic.quad_green_power(A, B, 1).value
    _assert_matches(forward, target, 0.05)
    _assert_matches(backward, target, 0.05)
    assert abs(forward.mean - backward.mean) <= 0.05 * target + 4.0 * (forward.std_error + backward.std_error)


# ---------------------------------------------------------------------------
# Clouds
# ---------------------------------------------------------------------------

def test_cloud_statistics_add_under_superposition(moderate_excursion, seed):
    clouds = CloudService(workers=1, tasks=1)
    first = clouds.sample_excursion_cloud(0.3, moderate_excursion, RngStream(seed, 1))
    second = clouds.sample_excursion_cloud(0.2, moderate_excursion, RngStream(seed, 2))
    union = first.superpose(second)
    f = TestFunction(Disc(0.0, 0.5), 1.5)
    parts = np.add(CloudService.cloud_statistics(first, f), CloudService.cloud_statistics(second, f))
    assert CloudService.cloud_statistics(union, f) == pytest.approx(tuple(parts), abs=1e-12)
    assert union.intensity == pytest.approx(0.5)


@pytest.mark.slow
def test_superposed_cloud_size_matches_the_summed_intensity(moderate_excursion, seed):
    clouds = CloudService(workers=1, tasks=1)
    sizes = []
    for k in range(300):
        union = Cloud([], [], 0.0, moderate_excursion.eps_start)
        for c, stream in ((0.3, 2 * k), (0.2, 2 * k + 1)):
            union = union.superpose(clouds.sample_excursion_cloud(c, moderate_excursion, RngStream(seed, stream)))
        sizes.append(len(union))
    expected = ANGLE_MASS * 0.5 / moderate_excursion.eps_start
    assert abs(np.mean(sizes) - expected) <= 4.0 * math.sqrt(expected / len(sizes))


@pytest.mark.slow
def test_cloud_fluctuation_variances(moderate_excursion, seed):
    clouds = CloudService(workers=1, tasks=4)
    f = TestFunction(Disc(0.0, 0.5), 1.0, "center")
    samples = clouds.clt_fluctuation(1, 2.0, f, 400, seed, moderate_excursion)
    target = 2.0 * _occupation_factor(moderate_excursion) * 4.0 * analytic.occupation_variance(f)
    for kind in ("Y", "X~"):
        values = np.array([s.value for s in samples if s.kind == kind])
        centered = values - values.mean()
        variance = float(np.mean(centered ** 2))
        std_error = float(np.std(centered ** 2) / math.sqrt(values.size))
        assert abs(variance - target) <= 0.1 * target + 4.0 * std_error, f"Var {kind} = {variance:.5g}"

    # fair signs make Y symmetric about zero
    signed = np.array([s.value for s in samples if s.kind == "Y"])
    assert abs(signed.mean()) <= 4.0 * signed.std() / math.sqrt(signed.size)
    assert abs(np.mean(signed > 0) - 0.5) <= 4.0 * 0.5 / math.sqrt(signed.size)
