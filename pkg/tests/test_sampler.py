"""Tests for the path samplers and the pathwise occupation functionals."""
import math
import struct

import numpy as np
import pytest
from scipy import integrate

from models.geometry import Disc, EmptyRegion, RegionUnion
from models.path import ExcursionConfig, LoopRootConfig, Path, RngStream
from services import sampler
from utils.errors import ConfigurationError, TruncationError


def _path(points, dt=0.1):
    return Path(dt, np.asarray(points, dtype=complex))


def test_bm_stops_at_first_exit(seed):
    path = sampler.sample_bm_until_exit(0j, 1.0, 1e-3, RngStream(seed))
    assert np.all(np.abs(path.points[:-1]) < 1.0)
    assert abs(path.end) >= 1.0


def test_bm_is_reproducible(seed):
    first = sampler.sample_bm_until_exit(0.2j, 0.8, 1e-3, RngStream(seed, 3))
    second = sampler.sample_bm_until_exit(0.2j, 0.8, 1e-3, RngStream(seed, 3))
    other = sampler.sample_bm_until_exit(0.2j, 0.8, 1e-3, RngStream(seed, 4))
    assert first.to_bytes() == second.to_bytes()
    assert first.to_bytes() != other.to_bytes()


def test_bm_near_the_boundary_exits_quickly(seed):
    lifetimes = [sampler.sample_bm_until_exit(0.999, 1.0, 1e-6, RngStream(seed, k)).lifetime
                 for k in range(10)]
    assert np.median(lifetimes) < 0.01


def test_bm_rejects_bad_arguments(seed):
    with pytest.raises(ConfigurationError):
        sampler.sample_bm_until_exit(1.5, 1.0, 1e-3, RngStream(seed))
    with pytest.raises(ConfigurationError):
        sampler.sample_bm_until_exit(0j, 1.0, 0.0, RngStream(seed))


def test_bm_truncation_carries_partial_path(seed):
    with pytest.raises(TruncationError) as info:
        sampler.sample_bm_until_exit(0j, 1.0, 1e-6, RngStream(seed), max_steps=10)
    assert info.value.partial_path.steps == 10


def test_excursion_starts_on_inner_circle(seed, coarse_excursion):
    path = sampler.sample_excursion(coarse_excursion, RngStream(seed))
    assert abs(path.start) == pytest.approx(0.95, abs=1e-12)
    assert abs(path.end) >= coarse_excursion.exit_radius
    assert np.all(np.abs(path.points[:-1]) < coarse_excursion.exit_radius)


def test_exit_radius_sits_between_start_and_circle(coarse_excursion):
    assert coarse_excursion.start_radius < coarse_excursion.exit_radius < 1.0
    assert 1.0 - coarse_excursion.exit_radius == pytest.approx(0.5826 * 0.025)


def test_corrected_exits_land_on_the_circle_on_average(seed):
    # grid monitoring overshoots by about 0.58·sqrt(dt); the pulled-in radius cancels it
    cfg = ExcursionConfig(eps_start=0.05, dt=1e-4)
    generator = RngStream(seed).generator()
    ends = np.array([abs(sampler.sample_excursion(cfg, generator).end) for _ in range(500)])
    assert abs(ends.mean() - 1.0) < 0.15 * math.sqrt(cfg.dt)


def test_batch_and_single_excursions_share_the_exit_rule(seed):
    cfg = ExcursionConfig(eps_start=0.05, dt=1e-4)
    generator = RngStream(seed).generator()
    _, lifetimes, truncated = sampler.batch_excursion_occupations(cfg, 4000, [], generator)
    assert truncated == 0
    # E τ from radius 1 - ε is (1 - (1 - ε)²)/2 once exits land on the circle
    expected = (1.0 - cfg.start_radius ** 2) / 2.0
    assert lifetimes.mean() == pytest.approx(expected, rel=0.25)


def test_path_bytes_round_trip(seed, coarse_excursion):
    path = sampler.sample_excursion(coarse_excursion, RngStream(seed))
    restored = Path.from_bytes(path.to_bytes())
    assert restored.dt == path.dt
    assert np.array_equal(restored.points, path.points)


def test_path_dump_header_holds_the_step_count():
    payload = _path([0.0, 0.1, 0.2 + 0.1j, 0.5]).to_bytes()
    steps, dt = struct.unpack_from("<Qd", payload, 0)
    assert (steps, dt) == (3, 0.1)
    assert len(payload) == 16 + 8 * 2 * (steps + 1)


def test_occupation_of_a_covering_region_is_the_lifetime(seed, coarse_excursion):
    path = sampler.sample_excursion(coarse_excursion, RngStream(seed))
    assert sampler.occupation_time(path, Disc(0.0, 2.0)) == path.lifetime
    assert sampler.occupation_time(path, EmptyRegion()) == 0.0


def test_occupation_is_additive(seed):
    path = sampler.sample_bm_until_exit(0j, 1.0, 1e-4, RngStream(seed))
    a, b = Disc(-0.3, 0.25), Disc(0.3, 0.25)
    total = sampler.occupation_time(path, RegionUnion((a, b)))
    assert sampler.occupation_time(path, a) + sampler.occupation_time(path, b) == pytest.approx(total, rel=1e-12)


def test_occupation_uses_left_endpoints():
    path = _path([0.0, 0.5, 2.0])
    assert sampler.occupation_time(path, Disc(0.5, 0.1)) == pytest.approx(0.1)
    assert sampler.occupation_time(path, Disc(2.0, 0.1)) == 0.0


def test_ordered_products_split_the_product():
    a, b = Disc(-0.5, 0.1), Disc(0.5, 0.1)
    path = _path([-0.5, 0.5, -0.5, -0.5, 0.5, 0.0])
    forward = sampler.ordered_occupation_product(path, [a, b])
    backward = sampler.ordered_occupation_product(path, [b, a])
    product = sampler.occupation_time(path, a) * sampler.occupation_time(path, b)
    assert forward + backward == pytest.approx(product, rel=1e-12)
    # a-visits at 0, 2, 3 and b-visits at 1, 4: pairs (0,1), (0,4), (2,4), (3,4)
    assert forward == pytest.approx(4 * 0.01)


def test_ordered_product_of_whole_path_is_half_square(seed):
    path = sampler.sample_bm_until_exit(0j, 1.0, 1e-3, RngStream(seed))
    whole = Disc(0.0, 2.0)
    tau = path.lifetime
    expected = 0.5 * tau * tau - 0.5 * tau * path.dt
    assert sampler.ordered_occupation_product(path, [whole, whole]) == pytest.approx(expected, rel=1e-10)


def test_ordered_product_validates_order():
    path = _path([0.0, 0.1, 2.0])
    with pytest.raises(ConfigurationError):
        sampler.ordered_occupation_product(path, [Disc(0.0, 0.5)])
    with pytest.raises(ConfigurationError):
        sampler.ordered_occupation_product(path, [Disc(0.0, 0.5)] * 2, p=3)
    assert sampler.ordered_occupation_product(path, [Disc(0.0, 0.5), EmptyRegion()]) == 0.0


def test_lens_weight_limits():
    eps = 0.05
    assert float(sampler.lens_weight(0.0, eps)) == pytest.approx(1.0 / (math.pi * eps * eps))
    assert float(sampler.lens_weight(2.0 * eps, eps)) == 0.0
    assert float(sampler.lens_weight(3.0 * eps, eps)) == 0.0
    d = np.linspace(0.0, 2.0 * eps, 50)
    assert np.all(np.diff(sampler.lens_weight(d, eps)) <= 0.0)


def test_lens_weight_integrates_to_one():
    # ∫ w(|x|) dx over the plane is 1 for the normalized lens kernel
    eps = 0.05
    r = np.linspace(0.0, 2.0 * eps, 20001)
    integral = integrate.trapezoid(2.0 * math.pi * r * sampler.lens_weight(r, eps), r)
    assert integral == pytest.approx(1.0, rel=1e-4)


def test_close_pairs_matches_brute_force():
    rng = np.random.default_rng(3)
    first = rng.uniform(-1, 1, 300) + 1j * rng.uniform(-1, 1, 300)
    second = rng.uniform(-1, 1, 200) + 1j * rng.uniform(-1, 1, 200)
    cell = 0.1
    i, j = sampler.close_pairs(first, second, cell)
    found = {(a, b) for a, b in zip(i.tolist(), j.tolist()) if abs(first[a] - second[b]) < cell}
    expected = {(a, b) for a in range(first.size) for b in range(second.size)
                if abs(first[a] - second[b]) < cell}
    assert found == expected
    assert len(set(zip(i.tolist(), j.tolist()))) == i.size


def test_pair_kernel_sum_matches_direct_double_sum():
    rng = np.random.default_rng(5)
    first = 0.2 * (rng.standard_normal(150) + 1j * rng.standard_normal(150))
    second = 0.2 * (rng.standard_normal(120) + 1j * rng.standard_normal(120))
    eps = 0.05
    direct = 0.01 * 0.02 * float(np.sum(sampler.lens_weight(np.abs(first[:, None] - second[None, :]), eps)))
    assert sampler.pair_kernel_sum(first, 0.01, second, 0.02, eps) == pytest.approx(direct, rel=1e-12)


def test_mollified_intersection_is_symmetric(seed):
    p1 = sampler.sample_bm_until_exit(0j, 1.0, 1e-4, RngStream(seed, 1))
    p2 = sampler.sample_bm_until_exit(0j, 1.0, 1e-4, RngStream(seed, 2))
    region = Disc(0.0, 0.6)
    forward = sampler.mollified_pair_intersection(p1, p2, region, 0.05)
    backward = sampler.mollified_pair_intersection(p2, p1, region, 0.05)
    assert forward == pytest.approx(backward, rel=1e-12)
    assert forward > 0.0


def test_mollified_intersection_of_separated_paths_is_zero():
    p1 = _path([-0.5, -0.5 + 0.01j, -0.49], dt=1e-4)
    p2 = _path([0.5, 0.5 + 0.01j, 0.49], dt=1e-4)
    assert sampler.mollified_pair_intersection(p1, p2, Disc(0.0, 0.9), 0.05) == 0.0
    assert sampler.mollified_pair_intersection(p1, p1, EmptyRegion(), 0.05) == 0.0


def test_mollified_intersection_checks_radius():
    p1 = _path([0.0, 0.01], dt=1e-2)
    with pytest.raises(ConfigurationError):
        sampler.mollified_pair_intersection(p1, p1, Disc(0.0, 0.5), 0.05)
    with pytest.raises(ConfigurationError):
        sampler.mollified_pair_intersection(p1, p1, Disc(0.0, 0.5), 0.3)


def test_loop_drift_points_at_the_root():
    drift = sampler.loop_drift(np.array([0j]), np.array([1.0 + 0j]), np.array([1.0]))
    assert complex(drift[0]) == pytest.approx(2.0)


def test_conditioned_loop_closes_at_its_root(seed):
    cfg = LoopRootConfig.for_root(0.8, 1.0, eps_offset=0.05, dt_scale=1e-4)
    path = sampler.sample_conditioned_loop(cfg, RngStream(seed))
    assert path.start == cfg.root
    assert path.end == cfg.root
    assert np.all(np.abs(path.points[1:-1]) < cfg.r)


def test_conditioned_loops_batch(seed):
    configs = [LoopRootConfig.for_root(r, theta, eps_offset=0.05, dt_scale=1e-4)
               for r, theta in ((0.6, 0.0), (0.9, 2.0), (1.0, 4.0))]
    paths = sampler.sample_conditioned_loops(configs, RngStream(seed).generator())
    assert len(paths) == 3
    for cfg, path in zip(configs, paths):
        assert path is not None
        assert path.end == cfg.root
        assert path.dt == cfg.dt


def test_loop_weight_is_positive():
    cfg = LoopRootConfig.for_root(0.5, 0.0, eps_offset=0.05)
    eps = cfg.eps_offset
    h = (2.0 * cfg.r - eps) / (2.0 * math.pi * cfg.r * eps)
    assert sampler.loop_weight(cfg, math.pi) == pytest.approx(math.pi * h / eps)


def test_functionals(seed, coarse_excursion):
    from models.geometry import BoundaryFunction

    path = sampler.sample_excursion(coarse_excursion, RngStream(seed))
    region = Disc(0.0, 2.0)
    assert sampler.Lifetime()(path) == path.lifetime
    assert sampler.Constant(3.0)(path) == 3.0
    assert sampler.OccupationFunctional(region)(path) == path.lifetime
    assert sampler.OccupationProduct(region, region)(path) == pytest.approx(path.lifetime ** 2)
    weighted = sampler.StartWeightedOccupation(BoundaryFunction(cos_coeffs=(1.0,)), region)(path)
    assert weighted == pytest.approx(math.cos(np.angle(path.start)) * path.lifetime)
