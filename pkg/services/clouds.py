"""
Cloud service for the occupation-time verification toolkit.
Poissonian clouds of excursions and loops, their signed and centered occupation
fluctuations, and the comparison with the Gaussian free field covariance.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, stats

from config import (
    ANGLE_MASS,
    CLOUD_BUDGET,
    DEFAULT_TASKS,
    DEFAULT_WORKERS,
    LOOP_BATCH_SIZE,
    LOOP_SOUP_BUCKETS,
    LOOP_SOUP_GRID,
    LOOP_SOUP_PILOT,
    SUPPORT_MARGIN,
)
from models.cloud import Cloud, FluctuationSample, GffReport
from models.geometry import Region, TestFunction
from models.lattice import LatticeModel
from models.path import ExcursionConfig, LoopRootSpec, Path, RandomSource, RngStream, as_generator
from services import analytic
from services.lattice_oracle import lattice_functional_covariance
from services.sampler import (
    batch_excursion_occupations,
    loop_weight,
    occupation_time,
    sample_conditioned_loops,
    sample_excursion,
)
from utils.errors import ConfigurationError, EstimationError, TruncationError
from utils.helpers import split_tasks

logger = logging.getLogger(__name__)


def _excursion_intensity(c: float, cfg: ExcursionConfig) -> float:
    intensity = ANGLE_MASS * c / cfg.eps_start
    if c < 0:
        raise ConfigurationError("cloud intensity must be nonnegative")
    if intensity > CLOUD_BUDGET:
        raise ConfigurationError(f"expected cloud size {intensity:.3g} exceeds the budget {CLOUD_BUDGET}")
    return intensity


def _signs(generator: np.random.Generator, count: int) -> np.ndarray:
    return 2.0 * generator.integers(0, 2, size=count) - 1.0


def _excursion_replica_task(functions: Tuple[TestFunction, ...], n_clouds: int, c: float,
                            cfg: ExcursionConfig, count: int, stream: RngStream) -> np.ndarray:
    """Replica values of shape (count, 2, m): [:, 0] signed sums, [:, 1] centered sums."""
    generator = stream.generator()
    intensity = _excursion_intensity(c, cfg)
    regions = [f.region for f in functions]
    amplitudes = np.array([f.amplitude for f in functions])
    means = np.array([c * 2.0 * f.integral() for f in functions])
    values = np.zeros((count, 2, len(functions)))
    for replica in range(count):
        sizes = generator.poisson(intensity, size=n_clouds)
        occupations, _, _ = batch_excursion_occupations(cfg, int(sizes.sum()), regions, generator)
        integrals = occupations * amplitudes
        signs = _signs(generator, integrals.shape[0])
        values[replica, 0] = signs @ integrals / math.sqrt(n_clouds)
        centered = integrals.sum(axis=0) - n_clouds * means
        values[replica, 1] = centered / math.sqrt(n_clouds)
    return values


@dataclass(frozen=True)
class SoupSampler:
    """
    ε-approximated loop measure restricted to roots with r >= spec.r_min.

    Roots are drawn with radial density ∝ r·g(r), g(r) the per-root mass
    (1/ε_r)·h_{U_r}(z + ε_r n, z), so every sampled loop carries the same weight
    total_mass.

    Attributes:
        spec: Root settings
        grid: Radii of the inverse-CDF table
        cdf: Normalized cumulative radial mass on the grid
        total_mass: 2π ∫ r g(r) dr
    """
    spec: LoopRootSpec
    grid: np.ndarray
    cdf: np.ndarray
    total_mass: float

    @classmethod
    def build(cls, spec: LoopRootSpec) -> "SoupSampler":
        if spec.r_min <= 0.0:
            raise ConfigurationError("the loop soup needs r_min > 0: small loops have infinite mass")

        def density(r: float) -> float:
            return r * loop_weight(spec.config_for(r, 0.0), 1.0)

        knee = min(max(10.0 * spec.eps_offset, spec.r_min), 1.0)
        mass = sum(integrate.quad(density, lo, hi, limit=200)[0]
                   for lo, hi in ((spec.r_min, knee), (knee, 1.0)) if hi > lo)
        grid = np.linspace(spec.r_min, 1.0, LOOP_SOUP_GRID)
        cumulative = integrate.cumulative_trapezoid([density(r) for r in grid], grid, initial=0.0)
        return cls(spec, grid, cumulative / cumulative[-1], 2.0 * math.pi * mass)

    def sample(self, count: int, generator: np.random.Generator) -> List[Optional[Path]]:
        radii = np.interp(generator.uniform(size=count), self.cdf, self.grid)
        angles = generator.uniform(0.0, 2.0 * math.pi, size=count)
        configs = [self.spec.config_for(float(r), float(t)) for r, t in zip(radii, angles)]
        return sample_conditioned_loops(configs, generator)


def _bucket(lifetime: float) -> int:
    """Lifetime bucket j with τ ∈ (2^{-(j+1)}, 2^{-j}]; the last bucket collects the tail."""
    if lifetime <= 0.0:
        return LOOP_SOUP_BUCKETS
    return int(min(max(math.floor(-math.log2(lifetime)), 0), LOOP_SOUP_BUCKETS))


def _soup_hits(sampler: SoupSampler, support: Region, function: TestFunction, wanted: int,
               generator: np.random.Generator) -> List[Tuple[float, int]]:
    """(∫f, bucket) for `wanted` loops hitting the support, by rejection."""
    found: List[Tuple[float, int]] = []
    while len(found) < wanted:
        for path in sampler.sample(min(LOOP_BATCH_SIZE, 2 * (wanted - len(found)) + 8), generator):
            if path is None or not support.contains(path.points).any():
                continue
            found.append((function.amplitude * occupation_time(path, function.region),
                          _bucket(path.lifetime)))
            if len(found) == wanted:
                break
    return found


def _soup_replica_task(sampler: SoupSampler, support: Region, function: TestFunction,
                       restricted_mass: float, bucket_means: np.ndarray, n_clouds: int, c: float,
                       count: int, stream: RngStream) -> np.ndarray:
    generator = stream.generator()
    values = np.zeros((count, 2))
    for replica in range(count):
        sizes = generator.poisson(c * restricted_mass, size=n_clouds)
        hits = _soup_hits(sampler, support, function, int(sizes.sum()), generator)
        integrals = np.array([value for value, _ in hits])
        buckets = np.array([bucket for _, bucket in hits], dtype=int)
        signs = _signs(generator, integrals.size)
        values[replica, 0] = float(signs @ integrals) / math.sqrt(n_clouds)
        per_bucket = np.bincount(buckets, weights=integrals, minlength=LOOP_SOUP_BUCKETS + 1)
        centered = per_bucket - n_clouds * bucket_means
        values[replica, 1] = float(centered.sum()) / math.sqrt(n_clouds)
    return values


class CloudService:
    """Service for Poissonian clouds and their fluctuation statistics."""

    def __init__(self, workers: int = DEFAULT_WORKERS, tasks: int = DEFAULT_TASKS):
        self.workers = workers
        self.tasks = tasks
        self.last_diagnostics: Dict[str, float] = {}

    def _fan_out(self, func, argument_lists: List[tuple]) -> list:
        if self.workers == 1 or len(argument_lists) == 1:
            return [func(*args) for args in argument_lists]
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            futures = [pool.submit(func, *args) for args in argument_lists]
            return [future.result() for future in futures]

    def sample_excursion_cloud(self, c: float, cfg: ExcursionConfig, rng: RandomSource) -> Cloud:
        """
        Poisson(2πc/ε) i.i.d. ε-level excursions with fair signs.

        Raises:
            ConfigurationError: Expected size above CLOUD_BUDGET
        """
        intensity = _excursion_intensity(c, cfg)
        generator = as_generator(rng)
        count = int(generator.poisson(intensity)) if intensity > 0 else 0
        paths = []
        for _ in range(count):
            try:
                paths.append(sample_excursion(cfg, generator))
            except TruncationError as e:
                logger.warning(f"Dropping truncated cloud excursion: {e}")
        return Cloud(paths, _signs(generator, len(paths)), c, cfg.eps_start)

    @staticmethod
    def cloud_statistics(cloud: Cloud, f: TestFunction) -> Tuple[float, float, float]:
        """
        (X_f, X̃_f, Y_f) of one cloud.

        X̃_f centers with the analytic mean c·2∫f.
        """
        if f.is_zero() or not len(cloud):
            return 0.0, -cloud.intensity * 2.0 * f.integral(), 0.0
        integrals = np.array([f.amplitude * occupation_time(path, f.region) for path in cloud.paths])
        total = float(integrals.sum())
        return total, total - cloud.intensity * 2.0 * f.integral(), float(cloud.signs @ integrals)

    def _replica_matrix(self, functions: Sequence[TestFunction], n_clouds: int, c: float,
                        cfg: ExcursionConfig, n_replicas: int, seed: int) -> np.ndarray:
        sizes = split_tasks(n_replicas, self.tasks)
        parts = self._fan_out(_excursion_replica_task,
                              [(tuple(functions), n_clouds, c, cfg, size, RngStream(seed, k))
                               for k, size in enumerate(sizes)])
        return np.concatenate(parts, axis=0)

    def clt_fluctuation(self, N: int, c: float, f: TestFunction, n_replicas: int, seed: int,
                        cfg: ExcursionConfig) -> List[FluctuationSample]:
        """
        Replicas of (Y¹ + … + Y^N)/√N and (X̃¹ + … + X̃^N)/√N.

        Returns:
            n_replicas samples of kind "Y" followed by n_replicas of kind "X~"
        """
        if N < 1 or n_replicas < 2:
            raise ConfigurationError("need N >= 1 clouds and at least 2 replicas")
        _excursion_intensity(c, cfg)
        values = self._replica_matrix([f], N, c, cfg, n_replicas, seed)
        samples = [FluctuationSample(float(v), N, f.label, "Y") for v in values[:, 0, 0]]
        samples += [FluctuationSample(float(v), N, f.label, "X~") for v in values[:, 1, 0]]
        logger.info(f"CLT {f.label}: N={N}, {n_replicas} replicas, "
                    f"Var Y={np.var(values[:, 0, 0], ddof=1):.5g}")
        return samples

    @staticmethod
    def excess_kurtosis(samples: Sequence[FluctuationSample], kind: str = "Y") -> float:
        values = np.array([s.value for s in samples if s.kind == kind])
        return float(stats.kurtosis(values, fisher=True, bias=False))

    def gff_compare(self, functions: Sequence[TestFunction], N: int, n_replicas: int, seed: int,
                    cfg: ExcursionConfig, c: float = 1.0, lattice: Optional[LatticeModel] = None,
                    c_G: float = 2.0, lattice_draws: int = 10_000) -> GffReport:
        """
        Empirical covariance of the signed CLT replicas over a function family.

        Compared entrywise with 8·gff_covariance(f_i, f_j) = 4∫∫G f_i f_j and,
        when a lattice is given, with 8× the lattice GFF functional covariance.
        """
        functions = list(functions)
        if not 1 <= len(functions) <= 8:
            raise ConfigurationError("gff_compare takes between 1 and 8 test functions")
        values = self._replica_matrix(functions, N, c, cfg, n_replicas, seed)
        empirical = np.atleast_2d(np.cov(values[:, 0, :], rowvar=False))
        m = len(functions)
        target = np.zeros((m, m))
        for i in range(m):
            for j in range(i, m):
                target[i, j] = target[j, i] = 8.0 * c * analytic.gff_covariance(functions[i], functions[j])
        report = GffReport([f.label for f in functions], empirical, target, n_replicas)
        report.diagnostics["centered_var_ratio"] = float(
            np.mean(np.var(values[:, 1, :], axis=0, ddof=1) / np.where(np.diag(target) > 0, np.diag(target), 1.0)))
        if lattice is not None:
            lattice_empirical, lattice_exact = lattice_functional_covariance(
                lattice, functions, lattice_draws, RngStream(seed, 1 << 30), c_G)
            report.lattice = 8.0 * c * lattice_empirical
            report.diagnostics["lattice_exact_max_rel"] = float(np.max(report.relative_errors(8.0 * c * lattice_exact)))
        logger.info(f"GFF comparison over {m} functions: max rel error {report.max_relative_error():.3f}")
        return report

    def loop_soup_signed(self, c: float, spec: LoopRootSpec, support: Region, f: TestFunction,
                         N: int, n_replicas: int, seed: int) -> List[FluctuationSample]:
        """
        Signed and centered fluctuations of a Poissonized loop soup restricted to loops hitting S.

        A pilot run estimates the restricted mass and the per-bucket means used to
        center X̃; loops are then drawn by rejection until each cloud holds its
        Poisson number of support-hitting loops. Diagnostics (restricted mass,
        bucket tail share, variance target) land in last_diagnostics.

        Raises:
            ConfigurationError: Support too close to the circle, f not inside it, or f
                cutting the circle of radius r_min
            EstimationError: No pilot loop hit the support
        """
        if support.max_modulus() > 1.0 - SUPPORT_MARGIN:
            raise ConfigurationError(f"support must stay {SUPPORT_MARGIN} away from the unit circle")
        points, _ = f.region.quadrature(8)
        if not f.region.is_empty() and not support.contains(points).all():
            raise ConfigurationError("f must be supported inside the support region")
        if f.is_zero():
            samples = [FluctuationSample(0.0, N, f.label, kind) for kind in ("Y", "X~") for _ in range(n_replicas)]
            self.last_diagnostics = {"restricted_mass": 0.0}
            return samples

        # loops rooted below r_min never enter the soup, so their share leaves the target too
        small_loops = analytic.small_loop_variance(f, spec.r_min)
        sampler = SoupSampler.build(spec)
        generator = RngStream(seed, 1 << 30).generator()
        pilot = sampler.sample(LOOP_SOUP_PILOT, generator)
        hits = 0
        bucket_sums = np.zeros(LOOP_SOUP_BUCKETS + 1)
        for path in pilot:
            if path is None:
                continue
            if support.contains(path.points).any():
                hits += 1
                bucket_sums[_bucket(path.lifetime)] += f.amplitude * occupation_time(path, f.region)
        if hits == 0:
            raise EstimationError("no pilot loop reached the support; restricted mass unknown")
        hit_rate = hits / len(pilot)
        restricted_mass = sampler.total_mass * hit_rate
        # E[Σ ∫f over one cloud in bucket j] = c·M_S·E[∫f·1_j | hit]
        bucket_means = c * restricted_mass * bucket_sums / hits
        total = bucket_sums.sum()
        self.last_diagnostics = {
            "total_mass": sampler.total_mass,
            "restricted_mass": restricted_mass,
            "hit_rate": hit_rate,
            "tail_share": float(bucket_sums[-1] / total) if total > 0 else 0.0,
            "small_loop_variance": c * small_loops,
            "variance_target": c * (analytic.occupation_variance(f, power=2) - small_loops),
        }
        logger.info(f"Loop soup: restricted mass {restricted_mass:.4g} ({hits}/{len(pilot)} pilot hits)")

        sizes = split_tasks(n_replicas, self.tasks)
        parts = self._fan_out(_soup_replica_task,
                              [(sampler, support, f, restricted_mass, bucket_means, N, c, size,
                                RngStream(seed, k)) for k, size in enumerate(sizes)])
        values = np.concatenate(parts, axis=0)
        samples = [FluctuationSample(float(v), N, f.label, "Y") for v in values[:, 0]]
        samples += [FluctuationSample(float(v), N, f.label, "X~") for v in values[:, 1]]
        return samples
