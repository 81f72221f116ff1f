"""
Geometry models for the occupation-time verification toolkit.
Points are Python/numpy complex numbers; regions carry membership, area and panel
decompositions used by the area quadrature.
"""
import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from config import MOEBIUS_TOLERANCE, RegionKind
from utils.errors import ConfigurationError, DomainError
from utils.validators import validate_interior

# A planar point is a complex number re + i·im
Point = complex


@lru_cache(maxsize=64)
def unit_gauss(q: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes and weights mapped to [0, 1]."""
    x, w = leggauss(q)
    return (x + 1.0) / 2.0, w / 2.0


@dataclass(frozen=True)
class Panel:
    """
    Quadrilateral patch of a region in parameter form.

    A polar panel covers {c + r e^{iθ}: r0 <= r <= r1, t0 <= θ <= t1};
    a box panel covers [x0, x1] × [y0, y1].
    """
    polar: bool
    c: complex
    a0: float
    a1: float
    b0: float
    b1: float

    def _map(self, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a = self.a0 + (self.a1 - self.a0) * u
        b = self.b0 + (self.b1 - self.b0) * v
        if self.polar:
            return self.c + a * np.exp(1j * b), a
        return a + 1j * b, np.ones_like(a)

    def nodes(self, q: int, q2: int = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Tensor Gauss nodes of the panel.

        Args:
            q: Nodes along the first parameter
            q2: Nodes along the second parameter (defaults to q)

        Returns:
            (points, weights) as flat arrays
        """
        u, wu = unit_gauss(q)
        v, wv = unit_gauss(q2 or q)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        points, jac = self._map(uu.ravel(), vv.ravel())
        weights = np.outer(wu, wv).ravel() * jac * (self.a1 - self.a0) * (self.b1 - self.b0)
        return points, weights

    def children(self) -> List["Panel"]:
        am = 0.5 * (self.a0 + self.a1)
        bm = 0.5 * (self.b0 + self.b1)
        return [
            Panel(self.polar, self.c, a0, a1, b0, b1)
            for a0, a1 in ((self.a0, am), (am, self.a1))
            for b0, b1 in ((self.b0, bm), (bm, self.b1))
        ]

    @property
    def area(self) -> float:
        if self.polar:
            return 0.5 * (self.a1 ** 2 - self.a0 ** 2) * (self.b1 - self.b0)
        return (self.a1 - self.a0) * (self.b1 - self.b0)

    def bounding_circle(self) -> Tuple[complex, float]:
        """Center and radius of a circle enclosing the panel."""
        grid = np.array([0.0, 0.5, 1.0])
        uu, vv = np.meshgrid(grid, grid, indexing="ij")
        points, _ = self._map(uu.ravel(), vv.ravel())
        center = points[4]
        radius = float(np.max(np.abs(points - center)))
        if self.polar:
            # sagitta of the outer arc
            radius += self.a1 * (1.0 - math.cos(0.5 * (self.b1 - self.b0)))
        return complex(center), radius


class Region:
    """Closed measurable planar set with membership, area and quadrature panels."""

    kind: str = ""

    def contains(self, points) -> np.ndarray:
        raise NotImplementedError

    @property
    def area(self) -> float:
        raise NotImplementedError

    def bounding_box(self) -> Tuple[complex, complex]:
        raise NotImplementedError

    def panels(self) -> List[Panel]:
        raise NotImplementedError

    def is_empty(self) -> bool:
        return self.area == 0.0

    def max_modulus(self) -> float:
        """Largest |x| over the region."""
        raise NotImplementedError

    def min_modulus(self) -> float:
        """Smallest |x| over the region."""
        raise NotImplementedError

    def inside_disc(self, radius: float = 1.0) -> bool:
        return self.is_empty() or self.max_modulus() <= radius

    def outside_disc(self, radius: float = 1.0) -> bool:
        return self.is_empty() or self.min_modulus() >= radius

    def distance_to(self, other: "Region") -> float:
        """Lower bound on the distance between two regions (exact for discs)."""
        lo1, hi1 = self.bounding_box()
        lo2, hi2 = other.bounding_box()
        dx = max(lo2.real - hi1.real, lo1.real - hi2.real, 0.0)
        dy = max(lo2.imag - hi1.imag, lo1.imag - hi2.imag, 0.0)
        return math.hypot(dx, dy)

    def quadrature(self, q: int, depth: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """
        Gauss nodes covering the region.

        Args:
            q: Nodes per panel axis
            depth: Uniform dyadic refinements of the root panels

        Returns:
            (points, weights)
        """
        panels = self.panels()
        for _ in range(depth):
            panels = [child for panel in panels for child in panel.children()]
        if not panels:
            return np.zeros(0, dtype=complex), np.zeros(0)
        parts = [panel.nodes(q) for panel in panels]
        return np.concatenate([p for p, _ in parts]), np.concatenate([w for _, w in parts])


@dataclass(frozen=True)
class Disc(Region):
    """Closed disc {|x - center| <= radius}."""
    center: complex
    radius: float
    kind: str = field(default=RegionKind.DISC, init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigurationError(f"disc radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", complex(self.center))

    def contains(self, points) -> np.ndarray:
        return np.abs(np.asarray(points) - self.center) <= self.radius

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2

    def bounding_box(self) -> Tuple[complex, complex]:
        r = self.radius
        return self.center - r - 1j * r, self.center + r + 1j * r

    def panels(self) -> List[Panel]:
        r, c = self.radius, self.center
        quarter = 0.5 * math.pi
        return [
            Panel(True, c, r0, r1, k * quarter, (k + 1) * quarter)
            for r0, r1 in ((0.0, 0.5 * r), (0.5 * r, r))
            for k in range(4)
        ]

    def max_modulus(self) -> float:
        return abs(self.center) + self.radius

    def min_modulus(self) -> float:
        return max(abs(self.center) - self.radius, 0.0)

    def distance_to(self, other: Region) -> float:
        if isinstance(other, Disc):
            return max(abs(self.center - other.center) - self.radius - other.radius, 0.0)
        return super().distance_to(other)

    def transported(self, moebius: "MoebiusMap") -> "Disc":
        """Image of the disc under a disc automorphism (circles map to circles)."""
        if self.max_modulus() >= 1.0:
            raise DomainError("only discs inside the unit disc can be transported")
        angles = np.array([0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0])
        images = moebius.apply(self.center + self.radius * np.exp(1j * angles))
        center, radius = _circumcircle(*images)
        return Disc(center, radius)


@dataclass(frozen=True)
class Rectangle(Region):
    """Closed axis-aligned rectangle [lo.re, hi.re] × [lo.im, hi.im]."""
    lo: complex
    hi: complex
    kind: str = field(default=RegionKind.RECTANGLE, init=False)

    def __post_init__(self):
        lo, hi = complex(self.lo), complex(self.hi)
        if not (lo.real < hi.real and lo.imag < hi.imag):
            raise ConfigurationError(f"rectangle needs lo < hi componentwise, got {lo}, {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, points) -> np.ndarray:
        points = np.asarray(points)
        return ((points.real >= self.lo.real) & (points.real <= self.hi.real)
                & (points.imag >= self.lo.imag) & (points.imag <= self.hi.imag))

    @property
    def area(self) -> float:
        return (self.hi.real - self.lo.real) * (self.hi.imag - self.lo.imag)

    def bounding_box(self) -> Tuple[complex, complex]:
        return self.lo, self.hi

    def panels(self) -> List[Panel]:
        width = self.hi.real - self.lo.real
        height = self.hi.imag - self.lo.imag
        nx = max(1, round(width / height)) if width >= height else 1
        ny = max(1, round(height / width)) if height > width else 1
        xs = np.linspace(self.lo.real, self.hi.real, nx + 1)
        ys = np.linspace(self.lo.imag, self.hi.imag, ny + 1)
        return [
            Panel(False, 0j, float(xs[i]), float(xs[i + 1]), float(ys[j]), float(ys[j + 1]))
            for i in range(nx) for j in range(ny)
        ]

    def _corners(self) -> np.ndarray:
        return np.array([self.lo, complex(self.hi.real, self.lo.imag), self.hi,
                         complex(self.lo.real, self.hi.imag)])

    def max_modulus(self) -> float:
        return float(np.max(np.abs(self._corners())))

    def min_modulus(self) -> float:
        x = min(max(0.0, self.lo.real), self.hi.real)
        y = min(max(0.0, self.lo.imag), self.hi.imag)
        return math.hypot(x, y)


@dataclass(frozen=True)
class EmptyRegion(Region):
    """The empty set."""
    kind: str = field(default=RegionKind.EMPTY, init=False)

    def contains(self, points) -> np.ndarray:
        return np.zeros(np.shape(points), dtype=bool)

    @property
    def area(self) -> float:
        return 0.0

    def bounding_box(self) -> Tuple[complex, complex]:
        return 0j, 0j

    def panels(self) -> List[Panel]:
        return []

    def max_modulus(self) -> float:
        return 0.0

    def min_modulus(self) -> float:
        return math.inf

    def distance_to(self, other: Region) -> float:
        return math.inf


@dataclass(frozen=True)
class RegionUnion(Region):
    """Union of pairwise disjoint regions."""
    parts: Tuple[Region, ...]
    kind: str = field(default=RegionKind.UNION, init=False)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    def contains(self, points) -> np.ndarray:
        result = np.zeros(np.shape(points), dtype=bool)
        for part in self.parts:
            result |= part.contains(points)
        return result

    @property
    def area(self) -> float:
        return sum(part.area for part in self.parts)

    def bounding_box(self) -> Tuple[complex, complex]:
        boxes = [part.bounding_box() for part in self.parts if not part.is_empty()]
        if not boxes:
            return 0j, 0j
        lo = complex(min(b[0].real for b in boxes), min(b[0].imag for b in boxes))
        hi = complex(max(b[1].real for b in boxes), max(b[1].imag for b in boxes))
        return lo, hi

    def panels(self) -> List[Panel]:
        return [panel for part in self.parts for panel in part.panels()]

    def max_modulus(self) -> float:
        return max((part.max_modulus() for part in self.parts), default=0.0)

    def min_modulus(self) -> float:
        return min((part.min_modulus() for part in self.parts), default=math.inf)

    def distance_to(self, other: Region) -> float:
        return min((part.distance_to(other) for part in self.parts), default=math.inf)


def _circumcircle(a: complex, b: complex, c: complex) -> Tuple[complex, float]:
    """Center and radius of the circle through three points."""
    bx, cx = b - a, c - a
    denominator = 2.0 * (bx.real * cx.imag - bx.imag * cx.real)
    if abs(denominator) < 1e-300:
        raise DomainError("points are collinear")
    b2, c2 = abs(bx) ** 2, abs(cx) ** 2
    ux = (cx.imag * b2 - bx.imag * c2) / denominator
    uy = (bx.real * c2 - cx.real * b2) / denominator
    center = a + complex(ux, uy)
    return center, abs(center - a)


@dataclass(frozen=True)
class MoebiusMap:
    """
    Disc automorphism z -> e^{i·phase}(z - pole)/(1 - conj(pole) z).

    Attributes:
        pole: Point sent to the origin, |pole| < 1
        phase: Rotation angle in radians
    """
    pole: complex = 0j
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pole", complex(self.pole))
        ok, error = validate_interior(self.pole)
        if not ok:
            raise DomainError(f"Moebius pole: {error}")

    def apply(self, z, inverse: bool = False):
        """Image of z (array-friendly); see services.analytic.moebius_eval for the derivative."""
        a = self.pole
        rotation = cmath.exp(1j * self.phase)
        z = np.asarray(z, dtype=complex)
        if inverse:
            u = z / rotation
            return (u + a) / (1.0 + a.conjugate() * u)
        return rotation * (z - a) / (1.0 - a.conjugate() * z)

    def inverse(self) -> "MoebiusMap":
        """The inverse automorphism expressed in the same normal form."""
        rotation = cmath.exp(1j * self.phase)
        # z = e^{-iφ}(w + a e^{iφ})/(1 + conj(a e^{iφ}) w)
        return MoebiusMap(pole=-self.pole * rotation, phase=-self.phase)

    def compose(self, other: "MoebiusMap") -> "MoebiusMap":
        """self ∘ other in normal form."""
        pole = complex(other.apply(self.pole, inverse=True))
        if abs(pole) > MOEBIUS_TOLERANCE:
            image_of_zero = complex(self.apply(other.apply(0j)))
            phase = cmath.phase(-image_of_zero / pole)
        else:
            pole = 0j
            phase = cmath.phase(complex(self.apply(other.apply(0.5))) / 0.5)
        return MoebiusMap(pole=pole, phase=phase)


@dataclass(frozen=True)
class QuadratureSpec:
    """
    Settings for the area quadrature of Green-kernel integrals.

    Attributes:
        base_resolution: Gauss nodes per panel axis
        max_depth: Maximal dyadic refinement near the diagonal
        tolerance: Target relative change between consecutive refinements
    """
    base_resolution: int = 8
    max_depth: int = 6
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.base_resolution < 8:
            raise ConfigurationError("quadrature base resolution must be at least 8")
        if not 0.0 < self.tolerance < 0.1:
            raise ConfigurationError("quadrature tolerance must lie in (0, 0.1)")
        if self.max_depth < 1:
            raise ConfigurationError("quadrature depth must be at least 1")


@dataclass(frozen=True)
class TestFunction:
    """
    Region-weighted test function f = amplitude · 1_region.

    Attributes:
        region: Support of the function
        amplitude: Constant value on the support
        label: Identifier used in reports
    """
    __test__ = False  # not a pytest class

    region: Region
    amplitude: float = 1.0
    label: str = "f"

    def __call__(self, points) -> np.ndarray:
        return self.amplitude * self.region.contains(points)

    def integral(self) -> float:
        return self.amplitude * self.region.area

    def is_zero(self) -> bool:
        return self.amplitude == 0.0 or self.region.is_empty()


def disc_family(specs: Sequence[Tuple[complex, float]], prefix: str = "f") -> List[TestFunction]:
    """Disc-indicator test functions from (center, radius) pairs."""
    return [TestFunction(Disc(center, radius), 1.0, f"{prefix}{i + 1}")
            for i, (center, radius) in enumerate(specs)]


@dataclass(frozen=True)
class BoundaryFunction:
    """
    Trigonometric polynomial on the unit circle:
    f(e^{iθ}) = constant + Σ_k (cos_coeffs[k-1]·cos kθ + sin_coeffs[k-1]·sin kθ).

    Attributes:
        constant: Mean value
        cos_coeffs: Cosine coefficients for k = 1, 2, …
        sin_coeffs: Sine coefficients for k = 1, 2, …
    """
    constant: float = 0.0
    cos_coeffs: Tuple[float, ...] = ()
    sin_coeffs: Tuple[float, ...] = ()

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        value = np.full(theta.shape, float(self.constant))
        for k, a in enumerate(self.cos_coeffs, start=1):
            value = value + a * np.cos(k * theta)
        for k, b in enumerate(self.sin_coeffs, start=1):
            value = value + b * np.sin(k * theta)
        return value

    def samples(self, n: int) -> np.ndarray:
        """Values at θ_k = 2πk/n."""
        return self(2.0 * math.pi * np.arange(n) / n)

    def is_zero(self) -> bool:
        return self.constant == 0.0 and not any(self.cos_coeffs) and not any(self.sin_coeffs)

    @classmethod
    def parse(cls, text: str) -> "BoundaryFunction":
        """'1' → constant, 'cos' → cos θ, 'cos2' → cos 2θ, 'sin' → sin θ."""
        text = text.strip().lower()
        if text in ("cos", "sin") or text[:3] in ("cos", "sin") and text[3:].isdigit():
            k = int(text[3:] or 1)
            coeffs = tuple(1.0 if j == k else 0.0 for j in range(1, k + 1))
            return cls(cos_coeffs=coeffs) if text.startswith("cos") else cls(sin_coeffs=coeffs)
        try:
            return cls(constant=float(text))
        except ValueError:
            raise ConfigurationError(f"unknown boundary function '{text}'")
