"""
Analytic service for the occupation-time verification toolkit.
Closed-form kernels on the unit disc, Moebius transport and deterministic
quadrature of the Green-kernel integrals the identities compare against.

All functions are pure; points are complex numbers.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from config import (
    BOUNDARY_MAX_NODES,
    BOUNDARY_NODES,
    BOUNDARY_TOLERANCE,
    CHAIN_EDGE_CUTOFF,
    KERNEL_RTOL,
    QUAD_BASE_RESOLUTION,
    QUAD_MAX_DEPTH,
    QUAD_SINGULAR_TOLERANCE,
    QUAD_TOLERANCE,
)
from models.geometry import MoebiusMap, Panel, QuadratureSpec, Region, TestFunction
from utils.errors import ConfigurationError, DomainError, PrecisionError

logger = logging.getLogger(__name__)

# Pair blocks evaluated per vectorized kernel call
_PAIR_CHUNK = 256
_ROW_CHUNK = 1024


@dataclass(frozen=True)
class QuadratureResult:
    """
    Value of a quadrature with the change over its last refinement step.

    Attributes:
        value: Integral estimate at the finest level
        error: |value - previous level|
        level: Refinement level reached
    """
    value: float
    error: float
    level: int

    def __float__(self) -> float:
        return self.value


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def _check_interior(x: complex, r: float, name: str = "x") -> None:
    if not abs(x) < r:
        raise DomainError(f"{name}={x} must lie inside the disc of radius {r}")


def _check_radius(r: float) -> None:
    if not 0.0 < r <= 1.0:
        raise DomainError(f"radius must lie in (0, 1], got {r}")


def green_kernel(x, y) -> np.ndarray:
    """Unit-disc Green function on arrays, no validation; coincident points give 0."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    distance = np.abs(x - y)
    mirror = np.abs(1.0 - x * np.conj(y))
    with np.errstate(divide="ignore", invalid="ignore"):
        value = -np.log(distance / mirror) / math.pi
    return np.where(distance > 0.0, value, 0.0)


def green_disc(x: complex, y: complex, r: float = 1.0) -> float:
    """
    Green function of the disc of radius r.

    G_{U_r}(x, y) = G_U(x/r, y/r), G_U(x, y) = -(1/π) log(|x - y| / |1 - x·conj(y)|).

    Raises:
        DomainError: Coincident points or points outside the open disc
    """
    _check_radius(r)
    _check_interior(x, r, "x")
    _check_interior(y, r, "y")
    if x == y:
        raise DomainError("Green function is singular at coincident points")
    return float(green_kernel(complex(x) / r, complex(y) / r))


def poisson_kernel_array(x, z, r: float = 1.0) -> np.ndarray:
    """Poisson kernel of U_r on arrays, no validation."""
    x = np.asarray(x, dtype=complex)
    z = np.asarray(z, dtype=complex)
    return (r * r - np.abs(x) ** 2) / (2.0 * math.pi * r * np.abs(x - z) ** 2)


def poisson_kernel_disc(x: complex, z: complex, r: float = 1.0) -> float:
    """
    Poisson kernel h_{U_r}(x, z) = (r² - |x|²)/(2π r |x - z|²), density w.r.t. arc length.

    Raises:
        DomainError: x outside the open disc or z off the circle
    """
    _check_radius(r)
    _check_interior(x, r, "x")
    if abs(abs(z) - r) > BOUNDARY_TOLERANCE:
        raise DomainError(f"z={z} is not on the circle of radius {r}")
    return float(poisson_kernel_array(x, z, r))


def expected_exit_time(x: complex, r: float = 1.0) -> float:
    """E_x τ for planar Brownian motion in U_r: (r² - |x|²)/2."""
    _check_interior(x, r)
    return 0.5 * (r * r - abs(x) ** 2)


def green_circle_average(rho: float, y: complex) -> float:
    """Average of G_U(ρe^{iθ}, y) over θ: -log(max(ρ, |y|))/π."""
    return -math.log(max(rho, abs(y))) / math.pi


# ---------------------------------------------------------------------------
# Moebius transport
# ---------------------------------------------------------------------------

def moebius_eval(m: MoebiusMap, z, inverse: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Image of z under a disc automorphism and |d(image)/dz|.

    Args:
        m: The automorphism e^{iφ}(z - a)/(1 - ā z)
        z: Point(s) in the closed disc
        inverse: Evaluate the inverse map instead

    Returns:
        (image, derivative_modulus), scalars for scalar input
    """
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) > 1.0 + BOUNDARY_TOLERANCE):
        raise DomainError("Moebius evaluation needs points in the closed unit disc")
    a = m.pole
    image = m.apply(z, inverse=inverse)
    if inverse:
        u = z * np.exp(-1j * m.phase)
        derivative = (1.0 - abs(a) ** 2) / np.abs(1.0 + np.conj(a) * u) ** 2
    else:
        derivative = (1.0 - abs(a) ** 2) / np.abs(1.0 - np.conj(a) * z) ** 2
    if image.ndim == 0:
        return complex(image), float(derivative)
    return image, derivative


# ---------------------------------------------------------------------------
# Boundary integrals
# ---------------------------------------------------------------------------

def circle_nodes(n: int, r: float = 1.0) -> np.ndarray:
    return r * np.exp(2j * math.pi * np.arange(n) / n)


def sample_boundary(f: Callable[[np.ndarray], np.ndarray], n: int = BOUNDARY_NODES) -> np.ndarray:
    """Samples f(θ_k) at θ_k = 2πk/n."""
    theta = 2.0 * math.pi * np.arange(n) / n
    return np.asarray(f(theta), dtype=float)


def harmonic_extension(boundary_values: np.ndarray, x):
    """
    Solution of the Dirichlet problem in U from uniformly sampled boundary data.

    Periodic trapezoid rule for ∫_0^{2π} h_U(x, e^{iθ}) f(e^{iθ}) dθ.

    Args:
        boundary_values: f(e^{iθ_k}) at θ_k = 2πk/n
        x: Interior point(s)

    Raises:
        ConfigurationError: Fewer than 8 boundary nodes
        DomainError: x outside the open disc
    """
    values = np.asarray(boundary_values, dtype=float)
    n = values.size
    if n < 8:
        raise ConfigurationError(f"harmonic extension needs at least 8 boundary nodes, got {n}")
    x = np.asarray(x, dtype=complex)
    if np.any(np.abs(x) >= 1.0):
        raise DomainError("harmonic extension is evaluated inside the open disc")
    z = circle_nodes(n)
    kernel = poisson_kernel_array(x.reshape(-1, 1), z.reshape(1, -1))
    result = kernel @ values * (2.0 * math.pi / n)
    return float(result[0]) if x.ndim == 0 else result.reshape(x.shape)


def _poisson_product_sum(r: float, x: complex, y: complex, n: int) -> float:
    z = circle_nodes(n, r)
    product = poisson_kernel_array(x, z, r) * poisson_kernel_array(y, z, r)
    return 4.0 * float(np.sum(product)) * (2.0 * math.pi / n)


def kernel_K(r: float, x: complex, y: complex, nodes: int = BOUNDARY_NODES) -> float:
    """
    K_{U_r}(x, y) = 4 ∫_0^{2π} dθ h_{U_r}(x, re^{iθ}) h_{U_r}(y, re^{iθ}).

    The trapezoid rule is doubled from `nodes` until two levels agree to
    KERNEL_RTOL relative, or to a few ulps of the positive sum.

    Raises:
        DomainError: Points outside U_r
        PrecisionError: Not converged at the node cap
    """
    _check_radius(r)
    _check_interior(x, r, "x")
    _check_interior(y, r, "y")
    n = max(nodes, 8)
    previous = current = _poisson_product_sum(r, x, y, n)
    while n < BOUNDARY_MAX_NODES:
        n *= 2
        previous, current = current, _poisson_product_sum(r, x, y, n)
        # every term is positive, so the sum bounds the roundoff
        if abs(current - previous) <= max(KERNEL_RTOL, 64.0 * np.finfo(float).eps) * abs(current):
            return current
    raise PrecisionError("boundary kernel integral did not converge", previous, current)


# ---------------------------------------------------------------------------
# Area quadrature
# ---------------------------------------------------------------------------

def _check_region(region: Region) -> None:
    if not region.inside_disc(1.0):
        raise DomainError(f"region {region} escapes the unit disc")


def _is_near(pa: Panel, pb: Panel) -> bool:
    ca, ra = pa.bounding_circle()
    cb, rb = pb.bounding_circle()
    gap = abs(ca - cb) - ra - rb
    return gap < 0.5 * max(ra, rb)


def _pair_sum(pairs: List[Tuple[Panel, Panel]], q: int, kernel, offset: bool) -> float:
    """Σ over panel pairs of Σ_ij wa_i K(x_i, y_j) wb_j, vectorized in chunks."""
    if not pairs:
        return 0.0
    qb = q + 1 if offset else q
    cache: Dict[Tuple[Panel, int], Tuple[np.ndarray, np.ndarray]] = {}

    def nodes(panel: Panel, order: int):
        key = (panel, order)
        if key not in cache:
            cache[key] = panel.nodes(order)
        return cache[key]

    total = 0.0
    for start in range(0, len(pairs), _PAIR_CHUNK):
        chunk = pairs[start:start + _PAIR_CHUNK]
        xa = np.stack([nodes(pa, q)[0] for pa, _ in chunk])
        wa = np.stack([nodes(pa, q)[1] for pa, _ in chunk])
        xb = np.stack([nodes(pb, qb)[0] for _, pb in chunk])
        wb = np.stack([nodes(pb, qb)[1] for _, pb in chunk])
        values = kernel(xa[:, :, None], xb[:, None, :])
        total += float(np.einsum("pi,pij,pj->", wa, values, wb))
    return total


def _panel_integral(panels_a: List[Panel], panels_b: List[Panel], kernel, q: int, depth: int) -> float:
    """Dyadic subdivision of near panel pairs down to `depth`, Gauss elsewhere."""
    pairs = [(pa, pb) for pa in panels_a for pb in panels_b]
    total = 0.0
    for level in range(depth + 1):
        near = [pair for pair in pairs if _is_near(*pair)]
        far = [pair for pair in pairs if not _is_near(*pair)] if near else pairs
        total += _pair_sum(far, q, kernel, offset=False)
        if not near:
            return total
        if level == depth:
            total += _pair_sum(near, q, kernel, offset=True)
            return total
        pairs = [(ca, cb) for pa, pb in near for ca in pa.children() for cb in pb.children()]
    return total


def _refine(evaluate: Callable[[int, int], float], spec: QuadratureSpec, what: str) -> QuadratureResult:
    """Run levels (q, 0), (q+2, 1), (q+2, 2), … until two agree to spec.tolerance."""
    q = spec.base_resolution
    previous = current = evaluate(q, 0)
    for level in range(1, spec.max_depth + 1):
        previous, current = current, evaluate(q + 2, level)
        error = abs(current - previous)
        logger.debug(f"{what}: level {level} value {current:.12g} change {error:.3g}")
        if error <= spec.tolerance * abs(current) or current == previous:
            return QuadratureResult(current, error, level)
    raise PrecisionError(f"{what} did not converge after depth {spec.max_depth}", previous, current)


def _default_spec(overlapping: bool) -> QuadratureSpec:
    tolerance = QUAD_SINGULAR_TOLERANCE if overlapping else QUAD_TOLERANCE
    return QuadratureSpec(QUAD_BASE_RESOLUTION, QUAD_MAX_DEPTH, tolerance)


def quad_green_power(A: Region, B: Region, p: int = 1,
                     spec: Optional[QuadratureSpec] = None) -> QuadratureResult:
    """
    ∫_{A×B} (G_U(x, y))^p dx dy by panel Gauss quadrature with near-diagonal subdivision.

    Args:
        A: First region, inside the unit disc
        B: Second region, inside the unit disc
        p: Power of the Green function, 1 <= p <= 6
        spec: Quadrature settings; overlapping regions default to a looser tolerance

    Raises:
        DomainError: A region escapes the disc
        PrecisionError: Refinement did not converge (carries the last two iterates)
    """
    if not 1 <= p <= 6:
        raise ConfigurationError(f"power p must lie in 1..6, got {p}")
    if A.is_empty() or B.is_empty():
        return QuadratureResult(0.0, 0.0, 0)
    _check_region(A)
    _check_region(B)
    spec = spec or _default_spec(A.distance_to(B) == 0.0)

    def kernel(x, y):
        return green_kernel(x, y) ** p

    panels_a, panels_b = A.panels(), B.panels()
    return _refine(lambda q, depth: _panel_integral(panels_a, panels_b, kernel, q, depth),
                   spec, f"quad_green_power(p={p})")


def quad_green_power_transported(A: Region, B: Region, m: MoebiusMap, p: int = 1,
                                 spec: Optional[QuadratureSpec] = None) -> QuadratureResult:
    """
    ∫_{A×B} G_U(x, y)^p |m'(x)|² |m'(y)|² dx dy, which equals ∫_{m(A)×m(B)} G^p.
    """
    if A.is_empty() or B.is_empty():
        return QuadratureResult(0.0, 0.0, 0)
    _check_region(A)
    _check_region(B)
    spec = spec or _default_spec(A.distance_to(B) == 0.0)

    def kernel(x, y):
        _, jx = moebius_eval(m, x)
        _, jy = moebius_eval(m, y)
        return green_kernel(x, y) ** p * jx ** 2 * jy ** 2

    panels_a, panels_b = A.panels(), B.panels()
    return _refine(lambda q, depth: _panel_integral(panels_a, panels_b, kernel, q, depth),
                   spec, f"quad_green_power_transported(p={p})")


def _green_apply(sources: np.ndarray, charges: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Σ_j G(sources_j, targets_i) charges_j for every target, in row chunks."""
    result = np.empty(targets.size)
    for start in range(0, targets.size, _ROW_CHUNK):
        block = targets[start:start + _ROW_CHUNK]
        result[start:start + _ROW_CHUNK] = green_kernel(block[:, None], sources[None, :]) @ charges
    return result


def quad_green_chain(regions: Sequence[Region], spec: Optional[QuadratureSpec] = None) -> QuadratureResult:
    """
    ∫ dx_1 … dx_p 1_{A_1}(x_1)…1_{A_p}(x_p) G(x_1, x_2) … G(x_{p-1}, x_p) for disjoint regions.

    Evaluated as a chain of Green applications on Gauss nodes.
    """
    regions = list(regions)
    if len(regions) < 2:
        raise ConfigurationError("a Green chain needs at least two regions")
    if any(region.is_empty() for region in regions):
        return QuadratureResult(0.0, 0.0, 0)
    for region in regions:
        _check_region(region)
    spec = spec or QuadratureSpec(QUAD_BASE_RESOLUTION, min(QUAD_MAX_DEPTH, 3), QUAD_TOLERANCE)

    def evaluate(q: int, depth: int) -> float:
        # Uniform refinement grows fast; chains stop at depth 2
        depth = min(depth, 2)
        points, weights = regions[0].quadrature(q, depth)
        vector = weights.copy()
        for region in regions[1:]:
            targets, target_weights = region.quadrature(q, depth)
            vector = _green_apply(points, vector, targets) * target_weights
            points = targets
        return float(np.sum(vector))

    return _refine(evaluate, spec, f"quad_green_chain(p={len(regions)})")


def p_fold_intersection_target(A: Region, B: Region, p: int = 2,
                               spec: Optional[QuadratureSpec] = None) -> float:
    """4^p ∫_{A×B} G^p, the p-fold intersection-local-time moment."""
    return 4.0 ** p * quad_green_power(A, B, p, spec).value


def area_integral(region: Region, func: Callable[[np.ndarray], np.ndarray],
                  spec: Optional[QuadratureSpec] = None) -> QuadratureResult:
    """∫_region func(x) dx for a smooth func, with one uniform refinement as error estimate."""
    if region.is_empty():
        return QuadratureResult(0.0, 0.0, 0)
    spec = spec or QuadratureSpec(QUAD_BASE_RESOLUTION, 2, QUAD_TOLERANCE)

    def evaluate(q: int, depth: int) -> float:
        points, weights = region.quadrature(q, depth)
        return float(np.sum(np.asarray(func(points)) * weights))

    return _refine(evaluate, spec, "area_integral")


def dirichlet_occupation_target(boundary_values: np.ndarray, A: Region) -> float:
    """2 ∫_A u(y) dy with u the harmonic extension of the boundary samples."""
    if A.is_empty():
        return 0.0
    _check_region(A)
    return 2.0 * area_integral(A, lambda y: harmonic_extension(boundary_values, y)).value


def loop_F_chain(y0: float) -> float:
    """
    ∫_{y0}^{1} (1/r) G_U(0, y0/r) K_U(0, y0/r) dr, evaluated with green_disc and kernel_K.

    On the strip where y0/r > 1 - CHAIN_EDGE_CUTOFF the trapezoid rule behind
    kernel_K would need more than BOUNDARY_MAX_NODES nodes. There K is frozen at
    its value on the inner edge of the strip and G_U(0, s) = -log(s)/π is
    integrated exactly, which gives K·L²/(2π) with L = log(lower/y0).

    Raises:
        DomainError: y0 outside (0, 1)
        PrecisionError: Radial quadrature did not reach 1e-6 relative accuracy
    """
    if not 0.0 < y0 < 1.0:
        raise DomainError(f"y0 must lie in (0, 1), got {y0}")
    edge_point = 1.0 - CHAIN_EDGE_CUTOFF
    lower = min(y0 / edge_point, 1.0)
    strip = math.log(lower / y0)
    edge = kernel_K(1.0, 0.0, edge_point) * strip ** 2 / (2.0 * math.pi)
    if lower >= 1.0:
        return edge

    def integrand(r: float) -> float:
        point = y0 / r
        return green_disc(0.0, point) * kernel_K(1.0, 0.0, point) / r

    value, abserr = integrate.quad(integrand, y0 / edge_point, 1.0, epsabs=1e-14, epsrel=1e-10, limit=200)
    if abserr > 1e-6 * abs(value) and abserr > 1e-14:
        raise PrecisionError("radial chain quadrature did not converge", value - abserr, value)
    logger.debug(f"loop_F_chain({y0}) = {value + edge:.12g} (quad error {abserr:.2g}, edge strip {edge:.3g})")
    return float(value + edge)


def gff_covariance(rho1: TestFunction, rho2: TestFunction,
                   spec: Optional[QuadratureSpec] = None) -> float:
    """Cov[(h, ρ1), (h, ρ2)] = (1/2) ∫∫ G_U(x, y) ρ1(x) ρ2(y) dx dy for region-weighted densities."""
    if rho1.is_zero() or rho2.is_zero():
        return 0.0
    integral = quad_green_power(rho1.region, rho2.region, 1, spec).value
    return 0.5 * rho1.amplitude * rho2.amplitude * integral


def occupation_variance(f: TestFunction, g: Optional[TestFunction] = None, power: int = 1) -> float:
    """
    ∫∫ G^power f g: power 1 gives σ²/4 for excursion clouds, power 2 the loop-soup variance.
    """
    g = g or f
    if f.is_zero() or g.is_zero():
        return 0.0
    return f.amplitude * g.amplitude * quad_green_power(f.region, g.region, power).value


# ∫∫_{U×U} G_U² = 4 Σ_{ν,k} m_ν j_{ν,k}^{-4} with the Rayleigh sums Σ_k j_{ν,k}^{-4} = 1/(16(ν+1)²(ν+2))
UNIT_DISC_GREEN_SQUARE = math.pi ** 2 / 12.0 - 5.0 / 8.0


def small_loop_variance(f: TestFunction, r_min: float) -> float:
    """
    The part of ∫∫G² f f carried by loops that stay inside U_{r_min}.

    Those loops form the loop measure of U_{r_min}; by scaling their share is
    amplitude² · r_min⁴ · ∫∫_{U×U} G² when f is constant on U_{r_min}, and zero
    when f vanishes there.

    Raises:
        ConfigurationError: The region of f cuts the circle of radius r_min
    """
    if r_min <= 0.0 or f.is_zero() or f.region.outside_disc(r_min):
        return 0.0
    ring = circle_nodes(256, r_min)
    if not (f.region.contains(ring).all() and f.region.contains(np.array([0j])).all()):
        raise ConfigurationError(f"f must either cover or avoid the disc of radius {r_min}")
    return f.amplitude ** 2 * r_min ** 4 * UNIT_DISC_GREEN_SQUARE
