"""
Path and sampler configuration models for the occupation-time verification toolkit.
"""
import math
import struct
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from config import (
    BM_EXIT_SHIFT,
    EXCURSION_DT,
    EXCURSION_EPS,
    EXCURSION_EPS_RANGE,
    EXCURSION_MAX_STEPS,
    LOOP_DT_SCALE,
    LOOP_EPS,
    LOOP_MAX_STEPS,
    LOOP_STOP_FRACTION,
    LOOP_STRATA,
)
from utils.errors import ConfigurationError


@dataclass(frozen=True)
class Path:
    """
    Time-stamped planar trajectory sampled at t_i = i·dt.

    Attributes:
        dt: Time step
        points: Complex positions, length n + 1 with n >= 1
    """
    dt: float
    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=complex)
        if points.ndim != 1 or points.size < 2:
            raise ConfigurationError("a path needs at least two samples")
        object.__setattr__(self, "points", points)

    @property
    def steps(self) -> int:
        return self.points.size - 1

    @property
    def lifetime(self) -> float:
        return self.steps * self.dt

    @property
    def start(self) -> complex:
        return complex(self.points[0])

    @property
    def end(self) -> complex:
        return complex(self.points[-1])

    def reversed(self) -> "Path":
        """Time reversal t -> τ - t."""
        return Path(self.dt, self.points[::-1].copy())

    def to_bytes(self) -> bytes:
        """Debug dump: step count n as u64, dt as f64, then the n + 1 samples as 2(n + 1) f64 (little-endian)."""
        coords = np.empty(2 * self.points.size, dtype="<f8")
        coords[0::2] = self.points.real
        coords[1::2] = self.points.imag
        return struct.pack("<Qd", self.steps, self.dt) + coords.tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes) -> "Path":
        steps, dt = struct.unpack_from("<Qd", payload, 0)
        coords = np.frombuffer(payload, dtype="<f8", count=2 * (steps + 1), offset=16)
        return cls(dt, coords[0::2] + 1j * coords[1::2])


@dataclass(frozen=True)
class RngStream:
    """
    Reproducible random stream: (algorithm, master seed, stream index).

    Identical (seed, index) pairs give identical generators; distinct indices are
    independent children of the same SeedSequence.
    """
    seed: int
    index: int = 0
    algorithm: str = "PCG64"

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.index,))
        bit_generator = getattr(np.random, self.algorithm)(sequence)
        return np.random.Generator(bit_generator)

    def child(self, index: int) -> "RngStream":
        """Stream with the same seed and another index."""
        return RngStream(self.seed, index, self.algorithm)


RandomSource = Union[RngStream, np.random.Generator]


def as_generator(rng: RandomSource) -> np.random.Generator:
    """Fresh generator for a stream, or the generator itself."""
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


@dataclass(frozen=True)
class ExcursionConfig:
    """
    Settings of the ε-level excursion sampler.

    Attributes:
        eps_start: Start radius is 1 - eps_start
        dt: Time step
        max_steps: Step budget per path
    """
    eps_start: float = EXCURSION_EPS
    dt: float = EXCURSION_DT
    max_steps: int = EXCURSION_MAX_STEPS

    def __post_init__(self):
        low, high = EXCURSION_EPS_RANGE
        if not low < self.eps_start < high:
            raise ConfigurationError(f"eps_start must lie in ({low}, {high}), got {self.eps_start}")
        if not 0 < self.dt <= self.eps_start ** 2 / 4:
            raise ConfigurationError(f"dt={self.dt} must be positive and at most eps^2/4")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be positive")

    @property
    def start_radius(self) -> float:
        return 1.0 - self.eps_start

    @property
    def exit_radius(self) -> float:
        """Unit circle pulled in by the mean grid overshoot, so exits land on |x| = 1 on average."""
        return 1.0 - BM_EXIT_SHIFT * math.sqrt(self.dt)


@dataclass(frozen=True)
class LoopRootConfig:
    """
    Root of one conditioned loop: z = r·e^{iθ}, started at z + eps_offset·n.

    Attributes:
        r: Radius of the disc U_r
        theta: Angle of the root z
        eps_offset: Distance of the start from z along the inward normal
        dt: Time step
        stop_radius: Loop closes once within this distance of z
        max_steps: Step budget
    """
    r: float
    theta: float
    eps_offset: float
    dt: float
    stop_radius: float
    max_steps: int = LOOP_MAX_STEPS

    def __post_init__(self):
        if not 0.0 < self.r <= 1.0:
            raise ConfigurationError(f"r must lie in (0, 1], got {self.r}")
        if not 0.0 < self.eps_offset < self.r / 10.0:
            raise ConfigurationError("eps_offset must be positive and below r/10")
        if not 0.0 < self.stop_radius <= self.eps_offset:
            raise ConfigurationError("stop_radius must be positive and at most eps_offset")
        if not 0.0 < self.dt <= self.eps_offset ** 2 / 4:
            raise ConfigurationError("dt must be positive and at most eps_offset^2/4")

    @property
    def root(self) -> complex:
        return self.r * complex(math.cos(self.theta), math.sin(self.theta))

    @property
    def start(self) -> complex:
        return self.root * (1.0 - self.eps_offset / self.r)

    @classmethod
    def for_root(cls, r: float, theta: float, eps_offset: float = LOOP_EPS,
                 dt_scale: float = LOOP_DT_SCALE, stop_fraction: float = LOOP_STOP_FRACTION,
                 max_steps: int = LOOP_MAX_STEPS) -> "LoopRootConfig":
        """Config with diffusive dt scaling; the offset shrinks to r/10 on small circles."""
        eps = min(eps_offset, r / 10.0 * (1.0 - 1e-9))
        dt = min(dt_scale * r * r, eps * eps / 4.0)
        return cls(r, theta, eps, dt, stop_fraction * eps, max_steps)


@dataclass(frozen=True)
class LoopRootSpec:
    """
    Root distribution of the loop estimator: r with density ∝ r on (r_min, 1), θ uniform.

    Attributes:
        eps_offset: Start offset ε
        r_min: Lower radius of the roots
        dt_scale: dt = dt_scale · r²
        stop_fraction: stop_radius = stop_fraction · ε
        strata: Number of equal-mass radial strata
        max_steps: Step budget per loop
    """
    eps_offset: float = LOOP_EPS
    r_min: float = 0.0
    dt_scale: float = LOOP_DT_SCALE
    stop_fraction: float = LOOP_STOP_FRACTION
    strata: int = LOOP_STRATA
    max_steps: int = LOOP_MAX_STEPS

    def __post_init__(self):
        if not 0.0 < self.eps_offset < 0.1:
            raise ConfigurationError("loop eps_offset must lie in (0, 0.1)")
        if not 0.0 <= self.r_min < 1.0:
            raise ConfigurationError("r_min must lie in [0, 1)")
        if not 0.0 < self.stop_fraction <= 1.0:
            raise ConfigurationError("stop_fraction must lie in (0, 1]")
        if self.strata < 1:
            raise ConfigurationError("strata must be positive")

    @property
    def root_mass(self) -> float:
        """∫_{r_min}^1 r dr ∫_0^{2π} dθ."""
        return math.pi * (1.0 - self.r_min ** 2)

    def config_for(self, r: float, theta: float) -> LoopRootConfig:
        return LoopRootConfig.for_root(r, theta, self.eps_offset, self.dt_scale,
                                       self.stop_fraction, self.max_steps)

    def radius_from_uniform(self, u: np.ndarray) -> np.ndarray:
        """Inverse CDF of the density 2r/(1 - r_min²) on (r_min, 1)."""
        return np.sqrt(self.r_min ** 2 + (1.0 - self.r_min ** 2) * np.asarray(u))


def truncation_note(path: Optional[Path]) -> str:
    """Short description of a partial path for log messages."""
    if path is None:
        return "no samples"
    return f"{path.steps} steps, last point {path.end:.4f}"
