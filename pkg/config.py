"""
Configuration module for the occupation-time verification toolkit.
Contains application-wide settings, defaults and constants.
"""
import math
import os

# Tool identity
TOOL_NAME = "occupation-verify"
TOOL_DESCRIPTION = "Checks Brownian excursion and loop occupation-time identities three ways."

# Geometry tolerances
BOUNDARY_TOLERANCE = 1e-9  # |z| = r accepted within this slack
MOEBIUS_TOLERANCE = 1e-12

# Excursion sampling defaults
EXCURSION_EPS = 0.01
EXCURSION_DT = 1e-5
EXCURSION_MAX_STEPS = 2_000_000
EXCURSION_EPS_RANGE = (1e-4, 0.2)
BM_EXIT_SHIFT = 0.5826  # mean overshoot of a grid-monitored exit, in units of sqrt(dt)

# Mass of the start-angle integral: μ_ε = ∫ dθ/ε · P_{(1-ε)e^{iθ}}
ANGLE_MASS = 2.0 * math.pi

# Brownian block sizes (part of the reproducibility contract)
BM_FIRST_BLOCK = 1024
BM_MAX_BLOCK = 65536

# Loop sampling defaults
LOOP_EPS = 0.05
LOOP_DT_SCALE = 1e-5  # dt = LOOP_DT_SCALE * r**2
LOOP_STOP_FRACTION = 0.5  # stop_radius = fraction * eps_offset
LOOP_MAX_STEPS = 2_000_000
LOOP_STRATA = 8
LOOP_BATCH_SIZE = 512
LOOP_MAX_RESAMPLE = 32

# Estimation defaults
DEFAULT_SAMPLES = 1_000_000
MIN_SAMPLES = 1000
DEFAULT_SEED = 20240607
DEFAULT_TASKS = int(os.environ.get("OCCUPATION_TASKS", "64"))
DEFAULT_WORKERS = int(os.environ.get("OCCUPATION_WORKERS", "1"))
CI_Z = 1.96
PASS_CI_INFLATION = 1.5
PAIR_BATCHES = 32

# Tolerances per experiment family
EXCURSION_TOLERANCE = 0.05
LOOP_TOLERANCE = 0.15
INTERSECTION_TOLERANCE = 0.25
MOMENT_TOLERANCE = 0.10
CLOUD_TOLERANCE = 0.05
GFF_MATRIX_TOLERANCE = 0.07
KURTOSIS_TOLERANCE = 0.2

# Quadrature defaults
QUAD_BASE_RESOLUTION = 8
QUAD_MAX_DEPTH = 6
QUAD_TOLERANCE = 1e-6
QUAD_SINGULAR_TOLERANCE = 1e-4
BOUNDARY_NODES = 512
BOUNDARY_MAX_NODES = 2 ** 19
KERNEL_RTOL = 1e-10  # doubling stops once two trapezoid levels agree this closely
CHAIN_EDGE_CUTOFF = 2e-4  # width of the strip next to the circle handled in closed form

# Cloud defaults
CLOUD_EPS = 0.02
CLOUD_DT = 1e-4
CLOUD_BUDGET = 10_000_000
CLOUD_REPLICAS = 1000
CLOUD_N = 64
CLOUD_N_BASELINE = 16
LOOP_SOUP_PILOT = 20_000
LOOP_SOUP_BUCKETS = 16  # lifetime buckets (2^-(j+1), 2^-j], j < 16, then the tail
LOOP_SOUP_R_MIN = 0.1  # roots on smaller circles are dropped from the soup
LOOP_SOUP_GRID = 4097
SUPPORT_MARGIN = 0.05

# Lattice oracle defaults
LATTICE_DENSE_LIMIT = 500
LATTICE_MAX_VERTICES = 20_000
LATTICE_GFF_MAX_VERTICES = 4_000
LATTICE_TAIL_TOLERANCE = 1e-10
LATTICE_MAX_LENGTH = 20_000
LATTICE_SOLVER_TOLERANCE = 1e-12
CALIBRATION_SPACINGS = (1 / 16, 1 / 32, 1 / 64)
CALIBRATION_PAIRS = ((0.0, 0.5), (0.25 + 0.25j, -0.25), (-0.3j, 0.4 + 0.2j))
GFF_LATTICE_SPACING = 1 / 16

# Report settings
REPORT_COLUMNS = [
    "experiment", "quantity", "estimate", "std_error", "ci_lo", "ci_hi",
    "target", "rel_err", "verdict", "n_samples", "eps", "dt", "seed", "wall_time_s",
]
SIGNIFICANT_DIGITS = 9

# Ledger and logging
LEDGER_URL = os.environ.get("OCCUPATION_LEDGER_URL", "")
LOG_LEVEL = os.environ.get("OCCUPATION_LOG_LEVEL", "INFO")


# Verdicts
class Verdict:
    PASS = "pass"
    FAIL = "fail"
    UNDERPOWERED = "underpowered"


# Exit codes
class ExitCode:
    OK = 0
    USAGE = 1
    FAIL = 2
    UNDERPOWERED = 3


# Region kinds
class RegionKind:
    DISC = "disc"
    RECTANGLE = "rectangle"
    EMPTY = "empty"
    UNION = "union"


# Experiment identifiers
class ExperimentId:
    EXC_COV = "exc-cov"
    LOOP_COV = "loop-cov"
    TAU_MASS = "tau-mass"
    DIRICHLET = "dirichlet"
    MOMENTS_P = "moments-p"
    INTERSECTION = "intersection"
    GFF_FLUCT = "gff-fluct"
    LOOP_SOUP = "loop-soup"
    ORACLE_EXACT = "oracle-exact"
    QUAD_SELFCHECK = "quad-selfcheck"
    CALIBRATE = "calibrate"

    ALL = [
        EXC_COV, LOOP_COV, TAU_MASS, DIRICHLET, MOMENTS_P, INTERSECTION,
        GFF_FLUCT, LOOP_SOUP, ORACLE_EXACT, QUAD_SELFCHECK, CALIBRATE,
    ]


# What each experiment verifies, printed by `list`
EXPERIMENT_DESCRIPTIONS = {
    ExperimentId.EXC_COV: "excursion measure: mu(occ_A occ_B) = 4 int_AxB G",
    ExperimentId.LOOP_COV: "loop measure: lambda(occ_A occ_B) = int_AxB G^2",
    ExperimentId.TAU_MASS: "excursion lifetime: mu(tau) = 2 area(D) = 2 pi",
    ExperimentId.DIRICHLET: "start-weighted occupation: mu(f(gamma_0) occ_A) = 2 int_A u",
    ExperimentId.MOMENTS_P: "ordered p-fold moments: 2 int G(x1,x2)...G(x_{p-1},x_p)",
    ExperimentId.INTERSECTION: "excursion pairs: mu x mu (T(A) T(B)) = 16 int_AxB G^2",
    ExperimentId.GFF_FLUCT: "cloud fluctuations: Var Y_f = 4 int G f f, GFF covariance",
    ExperimentId.LOOP_SOUP: "loop soup fluctuations: Var Y_f = int G^2 f f",
    ExperimentId.ORACLE_EXACT: "lattice DP vs Green matrix: 2 sum G, sum G^2, 4 sum G^2",
    ExperimentId.QUAD_SELFCHECK: "radial chain F(0,y0) = (log y0)^2/pi^2 and K(0,y) = 2/pi",
    ExperimentId.CALIBRATE: "lattice-to-continuum constants c_G and c_T",
}

# Default regions of the acceptance experiments: (center, radius)
EXC_COV_REGIONS = ((-0.4, 0.25), (0.4, 0.25))
LOOP_COV_REGIONS = ((0.0, 0.15), (0.45, 0.15))
INTERSECTION_REGIONS = ((-0.35, 0.25), (0.35, 0.25))
DIRICHLET_REGION = (0.3, 0.2)
MOMENT_REGIONS = ((-0.45, 0.12), (0.0, 0.12), (0.45, 0.12))
GFF_FUNCTIONS = ((-0.4, 0.2), (0.3, 0.25), (0.1 + 0.5j, 0.15), (-0.2 - 0.45j, 0.2))
LOOP_SOUP_SUPPORT = (0.0, 0.6)
LOOP_SOUP_FUNCTION = (0.1, 0.3)
QUAD_SELFCHECK_POINTS = (0.3, 0.5, 0.7, 0.9, 0.95, 0.98)
QUAD_SELFCHECK_DISCS = ((-0.4, 0.25), (0.4, 0.25))  # disjoint pair for the mean-value check
