"""
Estimator service for the occupation-time verification toolkit.
Monte Carlo estimates of excursion-, loop- and pair-measure functionals, with
their analytic targets and verdicts.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from config import (
    ANGLE_MASS,
    BOUNDARY_NODES,
    CI_Z,
    DEFAULT_TASKS,
    DEFAULT_WORKERS,
    MIN_SAMPLES,
    PAIR_BATCHES,
    PASS_CI_INFLATION,
    LOOP_BATCH_SIZE,
    Verdict,
)
from models.estimate import Estimate, RunningStats
from models.geometry import BoundaryFunction, MoebiusMap, Region
from models.path import ExcursionConfig, LoopRootSpec, Path, RngStream
from services import analytic
from services.sampler import (
    OccupationProduct,
    OrderedOccupation,
    StartWeightedOccupation,
    loop_weight,
    pair_kernel_sum,
    sample_conditioned_loops,
    sample_excursion,
)
from utils.errors import ConfigurationError, DomainError, EstimationError, TruncationError
from utils.helpers import split_tasks

logger = logging.getLogger(__name__)

PathFunctional = Callable[[Path], float]


def compare_with_target(e: Estimate, target: float, tol_rel: float) -> str:
    """
    Verdict of an estimate against a target.

    pass if within tol_rel of the target; otherwise underpowered if the 95% CI is
    wider than 2·tol_rel·|target|; otherwise pass if within 1.5 inflated CI
    half-widths; otherwise fail.
    """
    if tol_rel <= 0:
        raise ConfigurationError("tol_rel must be positive")
    deviation = abs(e.mean - target)
    if deviation <= tol_rel * abs(target):
        return Verdict.PASS
    if 2.0 * CI_Z * e.std_error > 2.0 * tol_rel * abs(target):
        return Verdict.UNDERPOWERED
    if deviation <= CI_Z * PASS_CI_INFLATION * e.std_error:
        return Verdict.PASS
    return Verdict.FAIL


@dataclass
class StratifiedStats:
    """Per-stratum streaming moments; the estimate averages stratum means with equal mass."""
    strata: List[RunningStats] = field(default_factory=list)

    @classmethod
    def empty(cls, count: int) -> "StratifiedStats":
        return cls([RunningStats() for _ in range(count)])

    def merge(self, other: "StratifiedStats") -> None:
        for mine, theirs in zip(self.strata, other.strata):
            mine.merge(theirs)

    @property
    def truncated(self) -> int:
        return sum(s.truncated for s in self.strata)

    @property
    def count(self) -> int:
        return sum(s.count for s in self.strata)

    def estimate(self, target: Optional[float] = None, label: str = "") -> Estimate:
        filled = [s for s in self.strata if s.count > 0]
        if not filled:
            raise EstimationError("no loop samples completed")
        if len(filled) < len(self.strata):
            logger.warning(f"{len(self.strata) - len(filled)} empty loop strata")
        mean = sum(s.mean for s in filled) / len(filled)
        variance = sum(s.variance / s.count for s in filled) / len(filled) ** 2
        return Estimate(mean, math.sqrt(variance), self.count, target, label)


# ---------------------------------------------------------------------------
# Task bodies (module level so worker processes can unpickle them)
# ---------------------------------------------------------------------------

def _excursion_task(functional: PathFunctional, cfg: ExcursionConfig, count: int,
                    stream: RngStream) -> RunningStats:
    generator = stream.generator()
    values = np.empty(count)
    kept = 0
    truncated = 0
    for _ in range(count):
        try:
            path = sample_excursion(cfg, generator)
        except TruncationError as e:
            truncated += 1
            logger.debug(f"Dropping truncated excursion: {e}")
            continue
        values[kept] = functional(path)
        kept += 1
    stats = RunningStats(truncated=truncated)
    stats.push_many(values[:kept])
    return stats


def _loop_task(functional: PathFunctional, spec: LoopRootSpec, count: int,
               stream: RngStream) -> StratifiedStats:
    generator = stream.generator()
    stats = StratifiedStats.empty(spec.strata)
    strata = np.arange(count) % spec.strata
    for start in range(0, count, LOOP_BATCH_SIZE):
        batch = strata[start:start + LOOP_BATCH_SIZE]
        u = (batch + generator.uniform(size=batch.size)) / spec.strata
        radii = spec.radius_from_uniform(u)
        angles = generator.uniform(0.0, 2.0 * math.pi, size=batch.size)
        configs = [spec.config_for(float(r), float(t)) for r, t in zip(radii, angles)]
        paths = sample_conditioned_loops(configs, generator)
        for s, cfg, path in zip(batch, configs, paths):
            if path is None:
                stats.strata[s].truncated += 1
                continue
            value = functional(path)
            weighted = loop_weight(cfg, spec.root_mass) * value if value else 0.0
            stats.strata[s].push_many(np.array([weighted]))
    return stats


@dataclass(frozen=True)
class PairGroupFilter:
    """Keeps excursions that visit both regions; stores their left-endpoint points inside each."""
    first: Region
    second: Region

    def __call__(self, path: Path) -> Optional[Tuple[float, np.ndarray, np.ndarray]]:
        points = path.points[:-1]
        in_first = points[self.first.contains(points)]
        if in_first.size == 0:
            return None
        in_second = points[self.second.contains(points)]
        if in_second.size == 0:
            return None
        return path.dt, in_first, in_second


def _pair_group_task(keep: PairGroupFilter, cfg: ExcursionConfig, count: int, offset: int,
                     stream: RngStream) -> Tuple[List[Tuple[int, float, np.ndarray, np.ndarray]], int]:
    generator = stream.generator()
    kept = []
    truncated = 0
    for k in range(count):
        try:
            path = sample_excursion(cfg, generator)
        except TruncationError:
            truncated += 1
            continue
        record = keep(path)
        if record is not None:
            kept.append((offset + k, *record))
    return kept, truncated


def _pair_product_task(group: List[Tuple[int, float, np.ndarray, np.ndarray]],
                       others: List[Tuple[int, float, np.ndarray, np.ndarray]],
                       eps_moll: float, n: int, batches: int) -> np.ndarray:
    """Σ T̂(A)·T̂(B) per batch (index batch of both partners must match) and in total."""
    sums = np.zeros(batches + 1)
    for i, dt1, a1, b1 in group:
        for j, dt2, a2, b2 in others:
            t_a = pair_kernel_sum(a1, dt1, a2, dt2, eps_moll)
            if t_a == 0.0:
                continue
            t_b = pair_kernel_sum(b1, dt1, b2, dt2, eps_moll)
            product = t_a * t_b
            sums[-1] += product
            bi, bj = i * batches // n, j * batches // n
            if bi == bj:
                sums[bi] += product
    return sums


class EstimatorService:
    """Service for Monte Carlo estimates of path-measure functionals."""

    def __init__(self, workers: int = DEFAULT_WORKERS, tasks: int = DEFAULT_TASKS):
        """
        Initialize the estimator service.

        Args:
            workers: Worker processes; 1 runs in-process
            tasks: Task decomposition size; results depend on (seed, tasks) only
        """
        if workers < 1 or tasks < 1:
            raise ConfigurationError("workers and tasks must be positive")
        self.workers = workers
        self.tasks = tasks

    def _fan_out(self, func, argument_lists: List[tuple]) -> list:
        """Run func over argument tuples, results in submission order."""
        if self.workers == 1 or len(argument_lists) == 1:
            return [func(*args) for args in argument_lists]
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            futures = [pool.submit(func, *args) for args in argument_lists]
            return [future.result() for future in futures]

    @staticmethod
    def _check_count(n: int) -> None:
        if n < MIN_SAMPLES:
            raise ConfigurationError(f"n must be at least {MIN_SAMPLES}, got {n}")

    def mc_excursion_expectation(self, F: PathFunctional, cfg: ExcursionConfig, n: int, seed: int,
                                 target: Optional[float] = None, label: str = "") -> Estimate:
        """
        μ_ε(F) from n uniform-start excursions.

        Each sample carries the weight 2π/ε of the start-angle integral.

        Args:
            F: Bounded path functional (picklable when workers > 1)
            cfg: Excursion settings
            n: Number of excursions (>= 1000)
            seed: Master seed

        Returns:
            Estimate with mean (2π/ε)·mean(F) and scaled standard error

        Raises:
            EstimationError: Every sample was truncated
        """
        self._check_count(n)
        sizes = split_tasks(n, self.tasks)
        parts = self._fan_out(_excursion_task,
                              [(F, cfg, size, RngStream(seed, k)) for k, size in enumerate(sizes)])
        total = RunningStats()
        for part in parts:
            total.merge(part)
        if total.truncated:
            logger.warning(f"{total.truncated} of {n} excursions truncated and dropped")
        if total.count == 0:
            raise EstimationError("all excursion samples were truncated")
        return total.estimate(ANGLE_MASS / cfg.eps_start, target, label)

    @staticmethod
    def _pair_target(A: Region, B: Region, power: int, factor: float) -> Tuple[float, bool]:
        """(target, outside) where outside means a region lies entirely outside the disc."""
        for region in (A, B):
            if region.is_empty() or region.outside_disc(1.0):
                return 0.0, True
            if not region.inside_disc(1.0):
                raise DomainError(f"region {region} straddles the unit circle")
        if A.distance_to(B) < 1e-3:
            raise DomainError("regions must be disjoint at distance >= 1e-3")
        return factor * analytic.quad_green_power(A, B, power).value, False

    def excursion_covariance(self, A: Region, B: Region, cfg: ExcursionConfig, n: int,
                             seed: int) -> Estimate:
        """μ(occ_A·occ_B) against 4∫_{A×B} G."""
        target, outside = self._pair_target(A, B, 1, 4.0)
        if outside:
            return Estimate(0.0, 0.0, n, 0.0, "occ_A*occ_B")
        estimate = self.mc_excursion_expectation(OccupationProduct(A, B), cfg, n, seed)
        logger.info(f"Excursion covariance {estimate.mean:.6g} ± {estimate.std_error:.2g}, target {target:.6g}")
        return estimate.with_target(target, "occ_A*occ_B")

    def transported_covariance(self, A: Region, B: Region, m: MoebiusMap, cfg: ExcursionConfig,
                               n: int, seed: int) -> Estimate:
        """
        μ(occ_{m(A)}·occ_{m(B)}) against 4∫_{A×B} G·|m'|²|m'|².

        The target is computed on the untransported regions, so agreement checks
        the conformal invariance of G.
        """
        if not (hasattr(A, "transported") and hasattr(B, "transported")):
            raise ConfigurationError("Moebius transport is available for disc regions only")
        mapped_a, mapped_b = A.transported(m), B.transported(m)
        if mapped_a.distance_to(mapped_b) < 1e-3:
            raise DomainError("transported regions must stay disjoint")
        target = 4.0 * analytic.quad_green_power_transported(A, B, m, 1).value
        estimate = self.mc_excursion_expectation(OccupationProduct(mapped_a, mapped_b), cfg, n, seed)
        return estimate.with_target(target, "occ_mA*occ_mB")

    def dirichlet_weighted_occupation(self, f: BoundaryFunction, A: Region, cfg: ExcursionConfig,
                                      n: int, seed: int) -> Estimate:
        """μ(f(γ_0)·occ_A) against 2∫_A u with u the harmonic extension of f."""
        if f.is_zero() or A.is_empty():
            return Estimate(0.0, 0.0, n, 0.0, "f(start)*occ_A")
        target = analytic.dirichlet_occupation_target(f.samples(BOUNDARY_NODES), A)
        estimate = self.mc_excursion_expectation(StartWeightedOccupation(f, A), cfg, n, seed)
        return estimate.with_target(target, "f(start)*occ_A")

    def higher_moment_ordered(self, regions: Sequence[Region], p: int, cfg: ExcursionConfig,
                              n: int, seed: int) -> Estimate:
        """Ordered p-fold occupation moment against 2∫ G(x_1,x_2)…G(x_{p-1},x_p)."""
        regions = tuple(regions)
        if len(regions) != p or not 2 <= p <= 5:
            raise ConfigurationError(f"p={p} must match the {len(regions)} regions and lie in 2..5")
        label = f"ordered_p{p}"
        if any(region.is_empty() for region in regions):
            return Estimate(0.0, 0.0, n, 0.0, label)
        for i, first in enumerate(regions):
            for second in regions[i + 1:]:
                if first.distance_to(second) == 0.0:
                    raise DomainError("ordered-moment regions must be pairwise disjoint")
        target = 2.0 * analytic.quad_green_chain(regions).value
        estimate = self.mc_excursion_expectation(OrderedOccupation(regions), cfg, n, seed)
        return estimate.with_target(target, label)

    def mc_loop_expectation(self, F: PathFunctional, spec: LoopRootSpec, n: int, seed: int,
                            target: Optional[float] = None, label: str = "") -> Estimate:
        """
        λ_ε(F) from n conditioned loops with stratified roots.

        Roots have radius density 2r on (r_min, 1), split into equal-mass strata,
        and uniform angle; each loop carries π(1 - r_min²)·(1/ε)·h_{U_r}(z + εn, z).
        """
        self._check_count(n)
        sizes = split_tasks(n, self.tasks)
        parts = self._fan_out(_loop_task,
                              [(F, spec, size, RngStream(seed, k)) for k, size in enumerate(sizes)])
        total = StratifiedStats.empty(spec.strata)
        for part in parts:
            total.merge(part)
        if total.truncated:
            logger.warning(f"{total.truncated} of {n} loops truncated and dropped")
        return total.estimate(target, label)

    def loop_covariance(self, A: Region, B: Region, spec: LoopRootSpec, n: int, seed: int) -> Estimate:
        """λ(occ_A·occ_B) against ∫_{A×B} G²."""
        target, outside = self._pair_target(A, B, 2, 1.0)
        if outside:
            return Estimate(0.0, 0.0, n, 0.0, "loop occ_A*occ_B")
        return self.mc_loop_expectation(OccupationProduct(A, B), spec, n, seed, target, "loop occ_A*occ_B")

    def pair_intersection_covariance(self, A: Region, B: Region, cfg: ExcursionConfig, n: int,
                                     eps_moll: float, seed: int) -> Estimate:
        """
        (μ⊗μ)(T̂(A)·T̂(B)) against 16∫_{A×B} G².

        Two independent groups of n excursions; the mean averages over all n² cross
        pairs with weight (2π/ε)². The standard error comes from batch means over
        PAIR_BATCHES index-matched sub-blocks, which overstates it.
        """
        self._check_count(n)
        if not math.sqrt(cfg.dt) < eps_moll < 0.2:
            raise ConfigurationError(f"eps_moll={eps_moll} must lie in (sqrt(dt), 0.2)")
        target, outside = self._pair_target(A, B, 2, 16.0)
        label = "T(A)*T(B)"
        if outside:
            return Estimate(0.0, 0.0, n, 0.0, label)

        keep = PairGroupFilter(A, B)
        sizes = split_tasks(n, self.tasks)
        offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])).tolist()
        arguments = [(keep, cfg, size, offset, RngStream(seed, group * len(sizes) + k))
                     for group in (0, 1) for k, (size, offset) in enumerate(zip(sizes, offsets))]
        results = self._fan_out(_pair_group_task, arguments)
        half = len(sizes)
        first = [record for kept, _ in results[:half] for record in kept]
        second = [record for kept, _ in results[half:] for record in kept]
        truncated = sum(t for _, t in results)
        if truncated:
            logger.warning(f"{truncated} of {2 * n} pair excursions truncated and dropped")
        logger.info(f"Pair estimator keeps {len(first)} x {len(second)} excursions visiting both regions")

        batches = PAIR_BATCHES
        chunks = [first[k::self.tasks] for k in range(min(self.tasks, max(len(first), 1)))]
        sums = np.zeros(batches + 1)
        for part in self._fan_out(_pair_product_task,
                                  [(chunk, second, eps_moll, n, batches) for chunk in chunks]):
            sums += part
        weight = (ANGLE_MASS / cfg.eps_start) ** 2
        mean = weight * sums[-1] / n ** 2
        block = n / batches
        batch_means = weight * sums[:-1] / block ** 2
        if not np.any(batch_means):
            logger.warning("No excursion pair met inside both regions; estimate is uninformative")
            return Estimate(mean, math.inf, n, target, label)
        std_error = float(np.std(batch_means, ddof=1) / math.sqrt(batches))
        return Estimate(float(mean), std_error, n, target, label)
