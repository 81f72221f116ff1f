"""
Sampler service for the occupation-time verification toolkit.
Generates Brownian paths, ε-level excursions and h-transform conditioned loops,
and evaluates pathwise occupation functionals on them.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import BM_FIRST_BLOCK, BM_MAX_BLOCK, EXCURSION_MAX_STEPS, LOOP_MAX_RESAMPLE
from models.geometry import BoundaryFunction, Region
from models.path import (
    ExcursionConfig,
    LoopRootConfig,
    Path,
    RandomSource,
    as_generator,
    truncation_note,
)
from utils.errors import ConfigurationError, TruncationError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Brownian motion and excursions
# ---------------------------------------------------------------------------

def _walk_until_exit(start: complex, radius: float, dt: float, generator: np.random.Generator,
                     max_steps: int) -> Path:
    sigma = math.sqrt(dt)
    pieces = [np.array([start], dtype=complex)]
    position = start
    steps = 0
    block = BM_FIRST_BLOCK
    while steps < max_steps:
        size = min(block, max_steps - steps)
        normals = generator.standard_normal((size, 2))
        trail = position + np.cumsum(sigma * (normals[:, 0] + 1j * normals[:, 1]))
        exits = np.flatnonzero(np.abs(trail) >= radius)
        if exits.size:
            pieces.append(trail[:exits[0] + 1])
            return Path(dt, np.concatenate(pieces))
        pieces.append(trail)
        position = complex(trail[-1])
        steps += size
        block = min(2 * block, BM_MAX_BLOCK)
    partial = Path(dt, np.concatenate(pieces))
    raise TruncationError(f"no exit within {max_steps} steps ({truncation_note(partial)})", partial)


def sample_bm_until_exit(start: complex, disc_radius: float, dt: float, rng: RandomSource,
                         max_steps: int = EXCURSION_MAX_STEPS) -> Path:
    """
    Brownian motion from `start`, stopped at the first sample outside the disc.

    Increments are drawn in blocks (1024 doubling up to 65536) and the crossing
    sample is kept as-is.

    Args:
        start: Start point, |start| < disc_radius
        disc_radius: Radius of the centered disc
        dt: Time step; increments have per-coordinate variance dt
        rng: Stream or generator
        max_steps: Step budget

    Returns:
        Path whose last point is the first one with |x| >= disc_radius

    Raises:
        ConfigurationError: Start outside the disc or non-positive dt
        TruncationError: Step budget exhausted; carries the partial path
    """
    if not abs(start) < disc_radius:
        raise ConfigurationError(f"start {start} must lie inside the disc of radius {disc_radius}")
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    return _walk_until_exit(complex(start), disc_radius, dt, as_generator(rng), max_steps)


def sample_excursion(cfg: ExcursionConfig, rng: RandomSource) -> Path:
    """
    ε-level excursion: uniform start on the circle of radius 1 - ε, run to the unit circle.

    The start angle is the first draw of the stream. Exit is checked against
    cfg.exit_radius, which absorbs the overshoot of a path monitored only on the dt grid.
    """
    generator = as_generator(rng)
    theta = generator.uniform(0.0, 2.0 * math.pi)
    start = cfg.start_radius * complex(math.cos(theta), math.sin(theta))
    return _walk_until_exit(start, cfg.exit_radius, cfg.dt, generator, cfg.max_steps)


def batch_excursion_occupations(cfg: ExcursionConfig, count: int, regions: Sequence[Region],
                                generator: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Occupation times of `count` excursions in each region without storing the paths.

    All excursions advance together; finished ones drop out of the step. Exit uses
    the same corrected radius as sample_excursion.

    Returns:
        (occupations of shape (count, len(regions)), lifetimes, truncated count);
        truncated excursions keep their partial occupation
    """
    occupations = np.zeros((count, len(regions)))
    lifetimes = np.zeros(count)
    if count == 0:
        return occupations, lifetimes, 0
    theta = generator.uniform(0.0, 2.0 * math.pi, size=count)
    position = cfg.start_radius * np.exp(1j * theta)
    alive = np.arange(count)
    sigma = math.sqrt(cfg.dt)
    exit_radius = cfg.exit_radius
    for _ in range(cfg.max_steps):
        for k, region in enumerate(regions):
            occupations[alive, k] += cfg.dt * region.contains(position)
        lifetimes[alive] += cfg.dt
        normals = generator.standard_normal((alive.size, 2))
        position = position + sigma * (normals[:, 0] + 1j * normals[:, 1])
        inside = np.abs(position) < exit_radius
        alive, position = alive[inside], position[inside]
        if alive.size == 0:
            return occupations, lifetimes, 0
    logger.warning(f"{alive.size} excursions hit the step budget of {cfg.max_steps}")
    return occupations, lifetimes, int(alive.size)


# ---------------------------------------------------------------------------
# Conditioned loops
# ---------------------------------------------------------------------------

def loop_drift(x: np.ndarray, z: np.ndarray, r: np.ndarray) -> np.ndarray:
    """∇ log h_{U_r}(·, z) = -2x/(r² - |x|²) - 2(x - z)/|x - z|²."""
    return -2.0 * x / (r * r - np.abs(x) ** 2) - 2.0 * (x - z) / np.abs(x - z) ** 2


def loop_weight(cfg: LoopRootConfig, root_mass: float) -> float:
    """root_mass · (1/ε) · h_{U_r}(z + εn, z)."""
    r, eps = cfg.r, cfg.eps_offset
    h = (2.0 * r - eps) / (2.0 * math.pi * r * eps)
    return root_mass * h / eps


def sample_conditioned_loops(configs: Sequence[LoopRootConfig],
                             rng: RandomSource) -> List[Optional[Path]]:
    """
    Euler-Maruyama for a batch of h-transformed diffusions, each conditioned to exit U_r at its root.

    A proposal outside U_r is redrawn up to LOOP_MAX_RESAMPLE times, after which
    the loop stays put for that step. A loop stops once within stop_radius of its
    root (checked from the first step on); both endpoints are then set to the root.

    Returns:
        One Path per config, or None where the step budget ran out
    """
    generator = as_generator(rng)
    count = len(configs)
    if count == 0:
        return []
    z = np.array([c.root for c in configs])
    r = np.array([c.r for c in configs])
    dt = np.array([c.dt for c in configs])
    stop = np.array([c.stop_radius for c in configs])
    budget = np.array([c.max_steps for c in configs])
    sigma = np.sqrt(dt)

    records: List[Tuple[np.ndarray, np.ndarray]] = []
    alive = np.arange(count)
    position = np.array([c.start for c in configs])
    finished = np.zeros(count, dtype=bool)
    step = 0
    while alive.size:
        step += 1
        idx = alive
        drift = loop_drift(position, z[idx], r[idx])
        mean = position + drift * dt[idx]
        proposal = mean + sigma[idx] * _complex_normals(generator, idx.size)
        outside = np.flatnonzero(np.abs(proposal) >= r[idx])
        for _ in range(LOOP_MAX_RESAMPLE):
            if outside.size == 0:
                break
            proposal[outside] = mean[outside] + sigma[idx[outside]] * _complex_normals(generator, outside.size)
            outside = outside[np.abs(proposal[outside]) >= r[idx[outside]]]
        proposal[outside] = position[outside]
        records.append((idx, proposal))

        done = np.abs(proposal - z[idx]) <= stop[idx]
        finished[idx[done]] = True
        keep = ~done & (step < budget[idx])
        alive, position = idx[keep], proposal[keep]

    paths: List[Optional[Path]] = []
    trails: List[List[complex]] = [[c.start] for c in configs]
    for idx, positions in records:
        for k, p in zip(idx.tolist(), positions.tolist()):
            trails[k].append(p)
    for k, cfg in enumerate(configs):
        if not finished[k]:
            logger.warning(f"loop at root {cfg.root:.4f} did not close within {cfg.max_steps} steps")
            paths.append(None)
            continue
        points = np.asarray(trails[k], dtype=complex)
        points[0] = points[-1] = cfg.root
        paths.append(Path(cfg.dt, points))
    return paths


def _complex_normals(generator: np.random.Generator, size: int) -> np.ndarray:
    normals = generator.standard_normal((size, 2))
    return normals[:, 0] + 1j * normals[:, 1]


def sample_conditioned_loop(cfg: LoopRootConfig, rng: RandomSource) -> Path:
    """
    One loop rooted at z = r·e^{iθ}, started at z + ε·(inward normal).

    Raises:
        TruncationError: Step budget exhausted before reaching z
    """
    path = sample_conditioned_loops([cfg], rng)[0]
    if path is None:
        raise TruncationError(f"loop at root {cfg.root:.4f} did not close", None)
    return path


# ---------------------------------------------------------------------------
# Pathwise functionals
# ---------------------------------------------------------------------------

def _left_points(path: Path) -> np.ndarray:
    return path.points[:-1]


def occupation_time(path: Path, A: Region) -> float:
    """Left-endpoint Riemann sum dt·Σ_{i<n} 1_A(γ_{t_i})."""
    if A.is_empty():
        return 0.0
    return path.dt * float(np.count_nonzero(A.contains(_left_points(path))))


def ordered_occupation_product(path: Path, regions: Sequence[Region], p: Optional[int] = None) -> float:
    """
    dt^p · Σ_{i_1 < … < i_p} Π_k 1_{A_k}(γ_{t_{i_k}}) by nested prefix sums.

    Raises:
        ConfigurationError: p != len(regions) or p outside 2..5
    """
    regions = list(regions)
    p = len(regions) if p is None else p
    if p != len(regions) or not 2 <= p <= 5:
        raise ConfigurationError(f"ordered products need 2 <= p <= 5 regions, got p={p}")
    if any(region.is_empty() for region in regions):
        return 0.0
    points = _left_points(path)
    chain = path.dt * regions[0].contains(points).astype(float)
    for region in regions[1:]:
        earlier = np.concatenate(([0.0], np.cumsum(chain)[:-1]))
        chain = path.dt * region.contains(points) * earlier
    return float(np.sum(chain))


def lens_weight(d, eps: float) -> np.ndarray:
    """
    Lens area of two ε-discs at distance d divided by (πε²)².

    w(0) = 1/(πε²); w(d) = 0 for d >= 2ε.
    """
    d = np.asarray(d, dtype=float)
    inside = d < 2.0 * eps
    dc = np.minimum(d, 2.0 * eps)
    area = 2.0 * eps * eps * np.arccos(dc / (2.0 * eps)) - 0.5 * dc * np.sqrt(np.maximum(4.0 * eps * eps - dc * dc, 0.0))
    return np.where(inside, area / (math.pi * math.pi * eps ** 4), 0.0)


_HASH_OFFSET = 1 << 20
_HASH_SPAN = 1 << 21


def _cell_keys(ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    return (ix + _HASH_OFFSET) * _HASH_SPAN + (iy + _HASH_OFFSET)


def close_pairs(first: np.ndarray, second: np.ndarray, cell: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Index pairs (i, j) with |first_i - second_j| possibly below `cell`.

    Points of `second` are bucketed on a grid of the given cell size; each point of
    `first` is matched against its own and the 8 adjacent cells.
    """
    if first.size == 0 or second.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    sx = np.floor(second.real / cell).astype(np.int64)
    sy = np.floor(second.imag / cell).astype(np.int64)
    keys = _cell_keys(sx, sy)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]

    fx = np.floor(first.real / cell).astype(np.int64)
    fy = np.floor(first.imag / cell).astype(np.int64)
    rows, cols = [], []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            neighbour_keys = _cell_keys(fx + dx, fy + dy)
            lo = np.searchsorted(sorted_keys, neighbour_keys, side="left")
            hi = np.searchsorted(sorted_keys, neighbour_keys, side="right")
            counts = hi - lo
            if not counts.any():
                continue
            i = np.repeat(np.arange(first.size), counts)
            starts = np.repeat(lo, counts)
            offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
            rows.append(i)
            cols.append(order[starts + offsets])
    if not rows:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def pair_kernel_sum(first: np.ndarray, dt_first: float, second: np.ndarray, dt_second: float,
                    eps_moll: float) -> float:
    """dt¹·dt²·Σ_{i,j} w(|x_i - y_j|) over two point clouds, pruned by the spatial hash."""
    i, j = close_pairs(first, second, 2.0 * eps_moll)
    if i.size == 0:
        return 0.0
    weights = lens_weight(np.abs(first[i] - second[j]), eps_moll)
    return dt_first * dt_second * float(np.sum(weights))


def mollified_pair_intersection(p1: Path, p2: Path, A: Region, eps_moll: float) -> float:
    """
    Mollified intersection local time of two paths inside A.

    Σ_{i,j} dt²·w(|γ¹_{t_i} - γ²_{t_j}|)·1_A(γ¹_{t_i})·1_A(γ²_{t_j}) with the lens kernel w.

    Raises:
        ConfigurationError: eps_moll outside (√dt, 0.2)
    """
    if not math.sqrt(max(p1.dt, p2.dt)) < eps_moll < 0.2:
        raise ConfigurationError(f"eps_moll={eps_moll} must lie in (sqrt(dt), 0.2)")
    if A.is_empty():
        return 0.0
    first = _left_points(p1)
    second = _left_points(p2)
    first = first[A.contains(first)]
    second = second[A.contains(second)]
    return pair_kernel_sum(first, p1.dt, second, p2.dt, eps_moll)


# ---------------------------------------------------------------------------
# Picklable path functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lifetime:
    """F(γ) = τ."""

    def __call__(self, path: Path) -> float:
        return path.lifetime


@dataclass(frozen=True)
class Constant:
    value: float = 0.0

    def __call__(self, path: Path) -> float:
        return self.value


@dataclass(frozen=True)
class OccupationFunctional:
    """F(γ) = occupation time of a region."""
    region: Region

    def __call__(self, path: Path) -> float:
        return occupation_time(path, self.region)


@dataclass(frozen=True)
class OccupationProduct:
    """F(γ) = occ_A(γ)·occ_B(γ)."""
    first: Region
    second: Region

    def __call__(self, path: Path) -> float:
        occ = occupation_time(path, self.first)
        if occ == 0.0:
            return 0.0
        return occ * occupation_time(path, self.second)


@dataclass(frozen=True)
class OrderedOccupation:
    """F(γ) = ordered p-fold occupation product over a region sequence."""
    regions: Tuple[Region, ...]

    def __call__(self, path: Path) -> float:
        return ordered_occupation_product(path, self.regions)


@dataclass(frozen=True)
class StartWeightedOccupation:
    """F(γ) = f(start direction)·occ_A(γ)."""
    boundary: BoundaryFunction
    region: Region

    def __call__(self, path: Path) -> float:
        occ = occupation_time(path, self.region)
        if occ == 0.0:
            return 0.0
        return float(self.boundary(np.angle(path.start))) * occ
