"""
Cloud models for the occupation-time verification toolkit.
Represents Poissonian clouds of paths and the fluctuation samples drawn from them.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from models.path import Path


@dataclass
class Cloud:
    """
    Finite Poisson sample of paths with independent fair signs.

    Attributes:
        paths: Sampled paths
        signs: ±1 per path
        intensity: Intensity c of the cloud
        eps_used: Start offset of the ε-level measure
    """
    paths: List[Path]
    signs: np.ndarray
    intensity: float
    eps_used: float

    def __post_init__(self):
        self.signs = np.asarray(self.signs, dtype=float)
        if len(self.paths) != self.signs.size:
            raise ValueError("one sign per path is required")

    def __len__(self) -> int:
        return len(self.paths)

    def superpose(self, other: "Cloud") -> "Cloud":
        """Union of two independent clouds; intensities add."""
        if self.eps_used != other.eps_used:
            raise ValueError("clouds at different eps levels cannot be superposed")
        return Cloud(self.paths + other.paths, np.concatenate([self.signs, other.signs]),
                     self.intensity + other.intensity, self.eps_used)


@dataclass(frozen=True)
class FluctuationSample:
    """
    One CLT replica of a normalized cloud sum.

    Attributes:
        value: (Z¹ + … + Z^N)/√N
        n_clouds: N
        f_descriptor: Label of the test function
        kind: "Y" (signed sum) or "X~" (centered sum)
    """
    value: float
    n_clouds: int
    f_descriptor: str
    kind: str = "Y"


def replica_values(samples: List[FluctuationSample], kind: str = "Y",
                   f_descriptor: Optional[str] = None) -> np.ndarray:
    """Values of the samples of one kind (and optionally one test function)."""
    return np.array([s.value for s in samples
                     if s.kind == kind and (f_descriptor is None or s.f_descriptor == f_descriptor)])


@dataclass
class GffReport:
    """
    Empirical vs analytic covariance of cloud fluctuations over a test-function family.

    Attributes:
        labels: Test-function labels
        empirical: Empirical covariance of the CLT replicas
        target: 8·gff_covariance(f_i, f_j) = 4∫∫G f_i f_j
        lattice: 8× covariance of lattice GFF functionals, when computed
        n_replicas: Replicas behind the empirical matrix
    """
    labels: List[str]
    empirical: np.ndarray
    target: np.ndarray
    n_replicas: int
    lattice: Optional[np.ndarray] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def relative_errors(self, reference: Optional[np.ndarray] = None) -> np.ndarray:
        """Entrywise |empirical - target|/|target| (zero targets give absolute error)."""
        reference = self.target if reference is None else reference
        scale = np.where(reference == 0.0, 1.0, np.abs(reference))
        return np.abs(self.empirical - reference) / scale

    def max_relative_error(self) -> float:
        return float(np.max(self.relative_errors())) if self.target.size else 0.0
