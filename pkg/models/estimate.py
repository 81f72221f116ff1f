"""
Estimate models for the occupation-time verification toolkit.
Represents Monte Carlo estimates and the streaming moments they are built from.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config import CI_Z


@dataclass(frozen=True)
class Estimate:
    """
    Monte Carlo estimate with a normal-approximation confidence interval.

    Attributes:
        mean: Point estimate
        std_error: Standard error of the mean
        n_samples: Number of samples behind the estimate
        target: Analytic value the estimate is compared with
        label: Quantity name used in reports
    """
    mean: float
    std_error: float
    n_samples: int
    target: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if self.std_error < 0 or math.isnan(self.std_error):
            raise ValueError("std_error must be non-negative")

    @property
    def ci95(self) -> Tuple[float, float]:
        half = CI_Z * self.std_error
        return self.mean - half, self.mean + half

    @property
    def rel_err(self) -> Optional[float]:
        if self.target is None or self.target == 0:
            return None
        return abs(self.mean - self.target) / abs(self.target)

    def covers_target(self) -> bool:
        if self.target is None:
            return False
        lo, hi = self.ci95
        return lo <= self.target <= hi

    def with_target(self, target: Optional[float], label: Optional[str] = None) -> "Estimate":
        return Estimate(self.mean, self.std_error, self.n_samples, target, label or self.label)

    def scaled(self, factor: float) -> "Estimate":
        return Estimate(self.mean * factor, self.std_error * abs(factor), self.n_samples,
                        self.target, self.label)


@dataclass
class RunningStats:
    """
    Streaming count, mean and centered second moment (Welford/Chan merge).

    Merging partial results in a fixed order gives bit-identical totals for a
    fixed task decomposition.
    """
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    truncated: int = 0

    def push_many(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return
        other = RunningStats(int(values.size), float(values.mean()),
                             float(np.sum((values - values.mean()) ** 2)))
        self.merge(other)

    def merge(self, other: "RunningStats") -> None:
        self.truncated += other.truncated
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self.m2 += other.m2 + delta * delta * self.count * other.count / total
        self.count = total

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    def estimate(self, scale: float = 1.0, target: Optional[float] = None, label: str = "") -> Estimate:
        std_error = math.sqrt(self.variance / self.count) if self.count > 0 else 0.0
        return Estimate(scale * self.mean, abs(scale) * std_error, self.count, target, label)
