"""
Lattice models for the occupation-time verification toolkit.
Represents simple-random-walk domains on the square grid and fields over them.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

import numpy as np
import scipy.sparse as sps

from utils.errors import ModelError

Vertex = Tuple[int, int]
NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass
class LatticeModel:
    """
    Square-grid random walk killed on leaving the interior.

    Attributes:
        spacing: Grid spacing h; vertex (i, j) sits at complex position h·(i + 1j·j)
        interior: Ordered interior vertices
        boundary: Ordered boundary vertices (neighbours of the interior outside it)
    """
    spacing: float
    interior: List[Vertex]
    boundary: List[Vertex] = field(default_factory=list)
    index: Dict[Vertex, int] = field(default_factory=dict, repr=False)
    boundary_index: Dict[Vertex, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.interior:
            raise ModelError("a lattice model needs at least one interior vertex")
        self.interior = sorted(set(self.interior))
        self.index = {v: k for k, v in enumerate(self.interior)}
        boundary = {
            (i + di, j + dj)
            for i, j in self.interior for di, dj in NEIGHBOURS
            if (i + di, j + dj) not in self.index
        }
        self.boundary = sorted(boundary)
        self.boundary_index = {v: k for k, v in enumerate(self.boundary)}

    @classmethod
    def from_vertices(cls, vertices: Iterable[Vertex], spacing: float = 1.0) -> "LatticeModel":
        return cls(spacing, list(vertices))

    @classmethod
    def rectangle(cls, width: int, height: int, spacing: float = 1.0) -> "LatticeModel":
        """width × height block of interior vertices with lower-left corner at the origin."""
        return cls(spacing, [(i, j) for i in range(width) for j in range(height)])

    @classmethod
    def disc(cls, spacing: float) -> "LatticeModel":
        """Grid points with |v| < 1 - h."""
        m = int(np.ceil(1.0 / spacing))
        vertices = [
            (i, j) for i in range(-m, m + 1) for j in range(-m, m + 1)
            if abs(complex(i, j)) * spacing < 1.0 - spacing
        ]
        return cls(spacing, vertices)

    @property
    def size(self) -> int:
        return len(self.interior)

    def positions(self) -> np.ndarray:
        """Complex positions of the interior vertices."""
        return self.spacing * np.array([complex(i, j) for i, j in self.interior])

    def boundary_positions(self) -> np.ndarray:
        return self.spacing * np.array([complex(i, j) for i, j in self.boundary])

    def nearest_vertex(self, point: complex) -> int:
        """Index of the interior vertex closest to a continuum point."""
        distances = np.abs(self.positions() - point)
        return int(np.argmin(distances))

    def transition_matrix(self) -> sps.csr_matrix:
        """Interior-to-interior transition matrix, 1/4 per neighbour."""
        rows, cols = [], []
        for k, (i, j) in enumerate(self.interior):
            for di, dj in NEIGHBOURS:
                target = self.index.get((i + di, j + dj))
                if target is not None:
                    rows.append(k)
                    cols.append(target)
        data = np.full(len(rows), 0.25)
        return sps.coo_matrix((data, (rows, cols)), shape=(self.size, self.size)).tocsr()

    def boundary_matrix(self) -> sps.csr_matrix:
        """Interior-to-boundary transition matrix, 1/4 per boundary neighbour."""
        rows, cols = [], []
        for k, (i, j) in enumerate(self.interior):
            for di, dj in NEIGHBOURS:
                target = self.boundary_index.get((i + di, j + dj))
                if target is not None:
                    rows.append(k)
                    cols.append(target)
        data = np.full(len(rows), 0.25)
        return sps.coo_matrix((data, (rows, cols)), shape=(self.size, len(self.boundary))).tocsr()

    def exit_weights(self) -> np.ndarray:
        """One-step exit probability from each interior vertex."""
        return np.asarray(self.boundary_matrix().sum(axis=1)).ravel()

    def is_connected(self) -> bool:
        seen = {self.interior[0]}
        stack = [self.interior[0]]
        while stack:
            i, j = stack.pop()
            for di, dj in NEIGHBOURS:
                v = (i + di, j + dj)
                if v in self.index and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.size

    def indicator(self, region) -> np.ndarray:
        """0/1 vector of interior vertices whose positions lie in a continuum region."""
        return region.contains(self.positions()).astype(float)

    def indicator_of(self, vertices: Iterable[Vertex]) -> np.ndarray:
        vector = np.zeros(self.size)
        for v in vertices:
            if v not in self.index:
                raise ModelError(f"vertex {v} is not interior")
            vector[self.index[v]] = 1.0
        return vector

    def dump(self) -> str:
        """Plain-text vertex list for debugging."""
        lines = [f"# spacing {self.spacing}", f"# interior {self.size}", f"# boundary {len(self.boundary)}"]
        lines += [f"I {i} {j}" for i, j in self.interior]
        lines += [f"B {i} {j}" for i, j in self.boundary]
        return "\n".join(lines) + "\n"


@dataclass
class DiscreteField:
    """
    Real values on the interior vertices of a lattice model.

    Attributes:
        model: Underlying lattice
        values: One value per interior vertex, in model order
    """
    model: LatticeModel
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.model.size,):
            raise ModelError("field length must match the interior size")
        if not np.all(np.isfinite(self.values)):
            raise ModelError("field entries must be finite")

    def __getitem__(self, vertex: Vertex) -> float:
        return float(self.values[self.model.index[vertex]])

    def as_table(self) -> Dict[Vertex, float]:
        return {v: float(self.values[k]) for k, v in enumerate(self.model.interior)}
