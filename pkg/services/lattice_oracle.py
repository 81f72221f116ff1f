"""
Lattice oracle for the occupation-time verification toolkit.
Exact random-walk counterparts of the continuum identities: discrete Green
matrices, transfer-matrix moments of discrete excursions and loops, and the
calibration constants linking the lattice to the continuum.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from config import (
    CALIBRATION_PAIRS,
    CALIBRATION_SPACINGS,
    LATTICE_DENSE_LIMIT,
    LATTICE_GFF_MAX_VERTICES,
    LATTICE_MAX_LENGTH,
    LATTICE_MAX_VERTICES,
    LATTICE_SOLVER_TOLERANCE,
    LATTICE_TAIL_TOLERANCE,
)
from models.geometry import Region, TestFunction
from models.lattice import DiscreteField, LatticeModel, NEIGHBOURS, Vertex
from models.path import RandomSource, as_generator
from services.analytic import green_kernel
from utils.errors import CalibrationWarning, ModelError, PrecisionError

logger = logging.getLogger(__name__)

VertexSet = Union[Region, Iterable[Vertex], np.ndarray]


@dataclass(frozen=True)
class MomentResult:
    """
    Transfer-matrix moment with its truncation bound.

    Attributes:
        value: Sum over paths up to `length` steps
        tail_bound: Bound on the omitted paths
        length: Steps summed
    """
    value: float
    tail_bound: float
    length: int

    def __float__(self) -> float:
        return self.value


@dataclass
class CalibrationResult:
    """
    Lattice-to-continuum constants.

    Attributes:
        c_G: Extrapolated ratio G_disc / G_U
        c_G_error: Spread of the extrapolation over the calibration pairs
        c_T: Continuum time per step in units of h²
        ratios: Per-spacing ratios, one row per spacing, one column per pair
        residuals: |ratio(h) - c_G| averaged over pairs, per spacing
    """
    c_G: float
    c_G_error: float
    c_T: float
    spacings: List[float]
    ratios: np.ndarray
    residuals: List[float] = field(default_factory=list)

    @property
    def product(self) -> float:
        """c_T·c_G, expected to be 1."""
        return self.c_T * self.c_G


# ---------------------------------------------------------------------------
# Linear algebra helpers
# ---------------------------------------------------------------------------

def _check_size(model: LatticeModel, limit: int = LATTICE_MAX_VERTICES) -> None:
    if model.size > limit:
        raise ModelError(f"lattice has {model.size} interior vertices, limit is {limit}")


def _system(model: LatticeModel) -> sps.csc_matrix:
    return (sps.identity(model.size, format="csc") - model.transition_matrix().tocsc()).tocsc()


def _solve(model: LatticeModel, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - P) x = rhs; dense below LATTICE_DENSE_LIMIT vertices."""
    try:
        if model.size < LATTICE_DENSE_LIMIT:
            matrix = np.eye(model.size) - model.transition_matrix().toarray()
            solution = scipy.linalg.solve(matrix, rhs, assume_a="sym")
        else:
            solution = spla.splu(_system(model)).solve(np.asarray(rhs, dtype=float))
    except (np.linalg.LinAlgError, RuntimeError, ValueError) as e:
        raise ModelError(f"lattice solve failed: {e}") from e
    if not np.all(np.isfinite(solution)):
        raise ModelError("lattice solve produced non-finite values")
    return solution


def _indicator(model: LatticeModel, vertices: VertexSet) -> np.ndarray:
    if isinstance(vertices, Region):
        return model.indicator(vertices)
    if isinstance(vertices, np.ndarray) and vertices.shape == (model.size,):
        return vertices.astype(float)
    return model.indicator_of(vertices)


def spectral_radius(model: LatticeModel) -> float:
    """Largest eigenvalue of the interior transition matrix (symmetric, nonnegative)."""
    matrix = model.transition_matrix()
    if model.size < LATTICE_DENSE_LIMIT:
        return float(np.max(np.abs(np.linalg.eigvalsh(matrix.toarray()))))
    value = spla.eigsh(matrix, k=1, which="LA", return_eigenvectors=False)
    return float(value[0])


def geometric_tail(rho: float, start: int) -> float:
    """Σ_{m >= start} (m + 1)² ρ^m in closed form."""
    if rho <= 0.0:
        return 1.0 if start == 0 else 0.0
    if rho >= 1.0:
        return math.inf
    j = start + 1
    numerator = j * j - (2 * j * j - 2 * j - 1) * rho + (j - 1) ** 2 * rho * rho
    return rho ** (j - 1) * numerator / (1.0 - rho) ** 3


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def discrete_green(model: LatticeModel) -> np.ndarray:
    """
    Expected visits to y before exit, for a walk started at x.

    Solves (I - P)·G = I and checks the residual to 1e-10. The matrix is returned
    as solved; symmetry comes from the symmetric walk, not from symmetrizing.

    Raises:
        ModelError: Disconnected interior, oversized model or failed solve
    """
    _check_size(model)
    if not model.is_connected():
        raise ModelError("interior is disconnected")
    green = _solve(model, np.eye(model.size))
    residual = np.max(np.abs(_system(model) @ green - np.eye(model.size)))
    if residual > 1e-10:
        raise ModelError(f"Green residual {residual:.2e} exceeds 1e-10")
    logger.debug(f"Discrete Green matrix of {model.size} vertices, residual {residual:.2e}")
    return green


def green_columns(model: LatticeModel, targets: Sequence[int]) -> np.ndarray:
    """Columns G[:, y] for the given interior indices, by factorized sparse solves."""
    _check_size(model)
    rhs = np.zeros((model.size, len(targets)))
    for k, y in enumerate(targets):
        rhs[y, k] = 1.0
    return _solve(model, rhs)


def expected_steps(model: LatticeModel) -> DiscreteField:
    """Expected number of steps before exit from each interior vertex (G·1)."""
    _check_size(model)
    return DiscreteField(model, _solve(model, np.ones(model.size)))


def _run_transfer(step, rho: float, norm: float, max_len: int, tolerance: float,
                  what: str) -> MomentResult:
    """Iterate `step(k) -> contribution` until the geometric tail drops below tolerance."""
    value = 0.0
    tail = math.inf
    for k in range(max_len):
        value += step(k)
        tail = norm * geometric_tail(rho, k + 1)
        if tail <= tolerance:
            logger.debug(f"{what}: {k + 1} steps, value {value:.15g}, tail {tail:.2e}")
            return MomentResult(value, tail, k + 1)
    raise PrecisionError(f"{what}: tail bound {tail:.2e} above {tolerance:.1e} after {max_len} steps",
                         value, value + tail)


def dp_excursion_moment(model: LatticeModel, A: VertexSet, B: VertexSet,
                        max_len: int = LATTICE_MAX_LENGTH,
                        tolerance: float = LATTICE_TAIL_TOLERANCE) -> MomentResult:
    """
    Σ over boundary-to-boundary paths, weight 4^{-steps}, of ℓ_A·ℓ_B.

    Paths enter from a boundary vertex, wander inside and stop at the first
    return to the boundary. Counters (1, ℓ_A, ℓ_B, ℓ_A·ℓ_B) are carried along the
    transfer iteration; the tail bound uses ‖e‖²·Σ (m+1)² ρ^m with e the entry
    weights and ρ the spectral radius.

    Raises:
        ModelError: A and B share vertices
        PrecisionError: Tail bound above tolerance within max_len steps
    """
    _check_size(model)
    a = _indicator(model, A)
    b = _indicator(model, B)
    if np.any(a * b):
        raise ModelError("A and B must be disjoint vertex sets")
    if not a.any() or not b.any():
        return MomentResult(0.0, 0.0, 0)
    P = model.transition_matrix()
    entry = model.exit_weights()
    rho = spectral_radius(model)
    state = {"w0": entry.copy(), "wa": np.zeros(model.size), "wb": np.zeros(model.size),
             "wab": np.zeros(model.size)}

    def step(_: int) -> float:
        w0, wa, wb, wab = state["w0"], state["wa"], state["wb"], state["wab"]
        va = wa + a * w0
        vb = wb + b * w0
        vab = wab + a * wb + b * wa
        contribution = float(entry @ vab)
        state.update(w0=P @ w0, wa=P @ va, wb=P @ vb, wab=P @ vab)
        return contribution

    return _run_transfer(step, rho, float(entry @ entry), max_len, tolerance, "dp_excursion_moment")


def dp_loop_moment(model: LatticeModel, A: VertexSet, B: VertexSet,
                   max_len: int = LATTICE_MAX_LENGTH,
                   tolerance: float = LATTICE_TAIL_TOLERANCE) -> MomentResult:
    """
    Unrooted loop-measure moment of ℓ_A·ℓ_B over closed walks, weight 4^{-L}/L.

    Matrix states indexed by (root, current vertex) carry the counters; a loop of
    length L closes through tr(P·V_AB)/L. Loops are not rerooted.

    Raises:
        ModelError: A and B share vertices or the model is too large for dense states
    """
    _check_size(model, LATTICE_DENSE_LIMIT)
    a = _indicator(model, A)
    b = _indicator(model, B)
    if np.any(a * b):
        raise ModelError("A and B must be disjoint vertex sets")
    if not a.any() or not b.any():
        return MomentResult(0.0, 0.0, 0)
    P = model.transition_matrix().toarray()
    rho = spectral_radius(model)
    n = model.size
    state = {"w0": np.eye(n), "wa": np.zeros((n, n)), "wb": np.zeros((n, n)), "wab": np.zeros((n, n))}

    def step(k: int) -> float:
        w0, wa, wb, wab = state["w0"], state["wa"], state["wb"], state["wab"]
        va = wa + w0 * a
        vb = wb + w0 * b
        vab = wab + wb * a + wa * b
        length = k + 1
        contribution = float(np.sum(vab * P.T)) / length
        state.update(w0=w0 @ P, wa=va @ P, wb=vb @ P, wab=vab @ P)
        return contribution

    return _run_transfer(step, rho, float(n), max_len, tolerance, "dp_loop_moment")


def dp_pair_intersection_moment(model: LatticeModel, A: VertexSet, B: VertexSet,
                                max_len: int = LATTICE_MAX_LENGTH,
                                tolerance: float = LATTICE_TAIL_TOLERANCE) -> MomentResult:
    """
    Product-measure moment of Σ_{x∈A} ℓ¹_x ℓ²_x · Σ_{y∈B} ℓ¹_y ℓ²_y over two discrete excursions.

    The per-site moments M(x, y) = μ(ℓ_x ℓ_y) come from one transfer iteration with a
    counter per site of A and of B; independence of the two excursions gives
    Σ_{x,y} M(x, y)².
    """
    _check_size(model, LATTICE_DENSE_LIMIT)
    a = _indicator(model, A)
    b = _indicator(model, B)
    if np.any(a * b):
        raise ModelError("A and B must be disjoint vertex sets")
    sites_a = np.flatnonzero(a)
    sites_b = np.flatnonzero(b)
    if sites_a.size == 0 or sites_b.size == 0:
        return MomentResult(0.0, 0.0, 0)
    P = model.transition_matrix()
    entry = model.exit_weights()
    rho = spectral_radius(model)
    n = model.size
    w0 = entry.copy()
    wa = np.zeros((n, sites_a.size))
    wb = np.zeros((n, sites_b.size))
    wab = np.zeros((n, sites_a.size, sites_b.size))
    moments = np.zeros((sites_a.size, sites_b.size))
    norm = float(entry @ entry)
    tail = math.inf
    for k in range(max_len):
        va = wa.copy()
        va[sites_a, np.arange(sites_a.size)] += w0[sites_a]
        vb = wb.copy()
        vb[sites_b, np.arange(sites_b.size)] += w0[sites_b]
        vab = wab.copy()
        vab[sites_a, np.arange(sites_a.size), :] += wb[sites_a, :]
        vab[sites_b, :, np.arange(sites_b.size)] += wa[sites_b, :]
        moments += np.einsum("x,xij->ij", entry, vab)
        w0, wa, wb = P @ w0, P @ va, P @ vb
        wab = (P @ vab.reshape(n, -1)).reshape(vab.shape)
        site_tail = norm * geometric_tail(rho, k + 1)
        tail = float(np.sum((moments + site_tail) ** 2 - moments ** 2))
        if tail <= tolerance:
            value = float(np.sum(moments ** 2))
            logger.debug(f"dp_pair_intersection_moment: {k + 1} steps, value {value:.15g}")
            return MomentResult(value, tail, k + 1)
    value = float(np.sum(moments ** 2))
    raise PrecisionError(f"dp_pair_intersection_moment: tail bound {tail:.2e} after {max_len} steps",
                         value, value + tail)


def calibrate_constants(spacings: Sequence[float] = CALIBRATION_SPACINGS,
                        pairs: Sequence[Tuple[complex, complex]] = CALIBRATION_PAIRS) -> CalibrationResult:
    """
    Fit G_disc(x_h, y_h) ≈ c_G·G_U(x_h, y_h) over shrinking spacings and derive c_T.

    Per pair the ratio is extrapolated linearly in h to h = 0; c_G averages the
    intercepts. c_T is the per-coordinate second moment of one step in units of h².

    Warns:
        CalibrationWarning: Fit residuals do not shrink with h
    """
    spacings = sorted(spacings, reverse=True)
    if len(spacings) < 3:
        raise ModelError("calibration needs at least three spacings")
    ratios = np.zeros((len(spacings), len(pairs)))
    for row, h in enumerate(spacings):
        model = LatticeModel.disc(h)
        starts = [model.nearest_vertex(x) for x, _ in pairs]
        targets = [model.nearest_vertex(y) for _, y in pairs]
        columns = green_columns(model, targets)
        positions = model.positions()
        for col, (i, j) in enumerate(zip(starts, targets)):
            continuum = float(green_kernel(positions[i], positions[j]))
            ratios[row, col] = columns[i, col] / continuum
        logger.info(f"Calibration h={h:.5f}: {model.size} vertices, ratios {np.round(ratios[row], 5).tolist()}")

    h = np.array(spacings)
    intercepts = np.array([np.polyfit(h, ratios[:, col], 1)[1] for col in range(len(pairs))])
    c_G = float(np.mean(intercepts))
    c_G_error = float(np.std(intercepts, ddof=1)) if len(pairs) > 1 else 0.0
    residuals = [float(np.mean(np.abs(ratios[row] - c_G))) for row in range(len(spacings))]
    if any(later > earlier for earlier, later in zip(residuals, residuals[1:])):
        warnings.warn(f"calibration residuals do not decrease with h: {residuals}", CalibrationWarning)

    # one step moves ±h along one axis with probability 1/2 per axis
    c_T = sum(0.25 * di * di for di, _ in NEIGHBOURS)
    result = CalibrationResult(c_G, c_G_error, c_T, list(spacings), ratios, residuals)
    logger.info(f"Calibrated c_G={c_G:.5f} ± {c_G_error:.1e}, c_T={c_T}, c_T*c_G={result.product:.5f}")
    return result


def gff_factor(model: LatticeModel, c_G: float) -> np.ndarray:
    """Lower Cholesky factor of (1/2)·G_disc/c_G."""
    _check_size(model, LATTICE_GFF_MAX_VERTICES)
    covariance = 0.5 * discrete_green(model) / c_G
    try:
        return scipy.linalg.cholesky(covariance, lower=True)
    except np.linalg.LinAlgError as e:
        raise ModelError(f"GFF covariance factorization failed: {e}") from e


def discrete_gff_samples(model: LatticeModel, rng: RandomSource, count: int,
                         c_G: float = 2.0, factor: Optional[np.ndarray] = None) -> np.ndarray:
    """`count` independent lattice GFF draws as rows of a (count, size) array."""
    factor = gff_factor(model, c_G) if factor is None else factor
    normals = as_generator(rng).standard_normal((count, model.size))
    return normals @ factor.T


def discrete_gff_sample(model: LatticeModel, rng: RandomSource, c_G: float = 2.0) -> DiscreteField:
    """
    Gaussian field with covariance (1/2)·G_disc/c_G.

    Args:
        model: Lattice with at most LATTICE_GFF_MAX_VERTICES interior vertices
        rng: Stream or generator
        c_G: Calibrated Green constant

    Raises:
        ModelError: Oversized model or failed factorization
    """
    return DiscreteField(model, discrete_gff_samples(model, rng, 1, c_G)[0])


def lattice_functional_covariance(model: LatticeModel, functions: Sequence[TestFunction], draws: int,
                                  rng: RandomSource, c_G: float = 2.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Covariance of (φ, f_i) ≈ Σ_x φ(x) f_i(x) h² under the lattice GFF.

    Returns:
        (empirical covariance over `draws` samples, exact ρᵀCρ matrix)
    """
    factor = gff_factor(model, c_G)
    weights = np.column_stack([f(model.positions()) for f in functions]) * model.spacing ** 2
    samples = discrete_gff_samples(model, rng, draws, c_G, factor)
    functionals = samples @ weights
    empirical = np.atleast_2d(np.cov(functionals, rowvar=False))
    exact = weights.T @ (factor @ (factor.T @ weights))
    return empirical, exact


def dirichlet_solve(model: LatticeModel, boundary_values) -> DiscreteField:
    """
    Discrete-harmonic extension of boundary values.

    Args:
        model: Lattice model
        boundary_values: Array in model.boundary order, or a callable of complex positions

    Raises:
        ModelError: Wrong length, non-finite values or failed solve
    """
    if callable(boundary_values):
        values = np.asarray(boundary_values(model.boundary_positions()), dtype=float)
    else:
        values = np.asarray(boundary_values, dtype=float)
    if values.shape != (len(model.boundary),):
        raise ModelError(f"expected {len(model.boundary)} boundary values, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ModelError("boundary values must be finite")
    solution = _solve(model, model.boundary_matrix() @ values)
    residual = np.max(np.abs(_system(model) @ solution - model.boundary_matrix() @ values))
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    if residual > 1e3 * LATTICE_SOLVER_TOLERANCE * scale:
        raise ModelError(f"Dirichlet residual {residual:.2e} too large")
    return DiscreteField(model, solution)


def continuum_occupation_table(model: LatticeModel, c_T: float = 0.5) -> Dict[str, float]:
    """Max deviation of c_T·h²·(expected steps) from (1 - |x|²)/2 on a disc model."""
    steps = expected_steps(model).values
    exact = 0.5 * (1.0 - np.abs(model.positions()) ** 2)
    scaled = c_T * model.spacing ** 2 * steps
    return {"max_abs_error": float(np.max(np.abs(scaled - exact))),
            "max_value": float(np.max(scaled))}
