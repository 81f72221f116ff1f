"""
Experiment models for the occupation-time verification toolkit.
Represents experiment configurations and the report rows they produce.
"""
import logging
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

from config import (
    CLOUD_DT,
    CLOUD_EPS,
    CLOUD_N,
    CLOUD_REPLICAS,
    CLOUD_TOLERANCE,
    DEFAULT_SAMPLES,
    DEFAULT_TASKS,
    DEFAULT_WORKERS,
    EXCURSION_DT,
    EXCURSION_EPS,
    EXCURSION_TOLERANCE,
    ExperimentId,
    INTERSECTION_TOLERANCE,
    LOOP_EPS,
    LOOP_TOLERANCE,
    MOMENT_TOLERANCE,
)
from utils.errors import ConfigurationError
from utils.helpers import format_float
from utils.validators import (
    validate_eps,
    validate_experiment_id,
    validate_float,
    validate_int,
    validate_sample_count,
    validate_seed,
    validate_tolerance,
)

logger = logging.getLogger(__name__)

# Per-experiment defaults that differ from the excursion-side defaults
EXPERIMENT_DEFAULTS: Dict[str, Dict[str, object]] = {
    ExperimentId.LOOP_COV: {"eps": LOOP_EPS, "tolerance": LOOP_TOLERANCE},
    ExperimentId.LOOP_SOUP: {"eps": LOOP_EPS, "tolerance": 0.20, "replicas": 200, "n_clouds": 16},
    ExperimentId.INTERSECTION: {"tolerance": INTERSECTION_TOLERANCE, "n": 200_000},
    ExperimentId.GFF_FLUCT: {"eps": CLOUD_EPS, "dt": CLOUD_DT, "tolerance": CLOUD_TOLERANCE,
                             "replicas": CLOUD_REPLICAS, "n_clouds": CLOUD_N},
    ExperimentId.MOMENTS_P: {"tolerance": MOMENT_TOLERANCE},
}


@dataclass
class ExperimentConfig:
    """
    Flat configuration of one verification run.

    Attributes:
        experiment: Experiment identifier
        seed: Master seed (mandatory)
        eps: Start offset ε of the path measure
        dt: Time step
        n: Monte Carlo sample count
        tolerance: Relative tolerance of the verdict
        workers: Worker processes
        tasks: Task decomposition size (part of the reproducibility contract)
        output: Report path
        regions: Optional region override "x1,y1,r1;x2,y2,r2;…" (disc centers and radii)
        p: Order of the ordered-moment experiment
        eps_moll: Mollifier radius for the intersection experiment
        replicas: CLT replicas for the cloud experiments
        n_clouds: Clouds per replica (N)
    """
    experiment: str
    seed: int
    eps: float = EXCURSION_EPS
    dt: float = EXCURSION_DT
    n: int = DEFAULT_SAMPLES
    tolerance: float = EXCURSION_TOLERANCE
    workers: int = DEFAULT_WORKERS
    tasks: int = DEFAULT_TASKS
    output: str = "report.csv"
    regions: str = ""
    p: int = 3
    eps_moll: float = 0.02
    replicas: int = 1000
    n_clouds: int = 64
    extras: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ok, error = validate_experiment_id(self.experiment)
        if not ok:
            raise ConfigurationError(error)
        self._check()

    def _check(self) -> None:
        checks = [
            ("seed", validate_seed(self.seed)),
            ("eps", validate_eps(self.eps)),
            ("dt", validate_float(self.dt, 0.0, None, "dt")),
            ("n", validate_sample_count(self.n)),
            ("tolerance", validate_tolerance(self.tolerance)),
            ("workers", validate_int(self.workers, 1, "workers")),
            ("tasks", validate_int(self.tasks, 1, "tasks")),
            ("p", validate_int(self.p, 2, "p")),
            ("eps_moll", validate_float(self.eps_moll, 0.0, 0.2, "eps_moll")),
            ("replicas", validate_int(self.replicas, 2, "replicas")),
            ("n_clouds", validate_int(self.n_clouds, 1, "n_clouds")),
        ]
        for name, (ok, _, error) in checks:
            if not ok:
                raise ConfigurationError(f"{name}: {error}")

    @classmethod
    def defaults_for(cls, experiment: str, seed: int, **overrides) -> "ExperimentConfig":
        """Config with the experiment's embedded defaults, then explicit overrides."""
        values = dict(EXPERIMENT_DEFAULTS.get(experiment, {}))
        values.update(overrides)
        return cls(experiment=experiment, seed=seed, **values)

    @classmethod
    def from_text(cls, text: str, experiment: Optional[str] = None,
                  seed: Optional[int] = None) -> "ExperimentConfig":
        """
        Parse flat key=value lines with # comments.

        Args:
            text: Config file contents
            experiment: Experiment id overriding the file
            seed: Seed overriding the file

        Returns:
            Parsed configuration

        Raises:
            ConfigurationError: With a "line N: field" diagnostic
        """
        known = {f.name: f for f in fields(cls) if f.name != "extras"}
        raw: Dict[str, str] = {}
        lines: Dict[str, int] = {}
        extras: Dict[str, str] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigurationError(f"line {number}: expected key=value")
            key, value = (part.strip() for part in stripped.split("=", 1))
            if not key:
                raise ConfigurationError(f"line {number}: empty key")
            if key in known:
                raw[key] = value
                lines[key] = number
            else:
                extras[key] = value

        if experiment is not None:
            raw["experiment"] = experiment
        if seed is not None:
            raw["seed"] = str(seed)
        if "experiment" not in raw:
            raise ConfigurationError("experiment: missing")
        ok, error = validate_experiment_id(raw["experiment"])
        if not ok:
            raise ConfigurationError(f"line {lines.get('experiment', 0)}: experiment: {error}")
        ok, parsed_seed, error = validate_seed(raw.get("seed"))
        if not ok:
            raise ConfigurationError(f"line {lines.get('seed', 0)}: seed: {error}")

        values: Dict[str, object] = dict(EXPERIMENT_DEFAULTS.get(raw["experiment"], {}))
        for key, value in raw.items():
            if key in ("experiment", "seed"):
                continue
            kind = known[key].type
            if kind in (int, "int"):
                ok, parsed, error = validate_int(value, None, key)
            elif kind in (float, "float"):
                ok, parsed, error = validate_float(value, None, None, key)
            else:
                ok, parsed, error = True, value, None
            if not ok:
                raise ConfigurationError(f"line {lines[key]}: {key}: {error}")
            values[key] = parsed
        try:
            return cls(experiment=raw["experiment"], seed=parsed_seed, extras=extras, **values)
        except ConfigurationError as e:
            field_name = str(e).split(":", 1)[0]
            raise ConfigurationError(f"line {lines.get(field_name, 0)}: {e}") from e

    def to_text(self) -> str:
        """Serialize as key=value lines; from_text(to_text(c)) == c."""
        lines = []
        for f in fields(self):
            if f.name == "extras":
                continue
            value = getattr(self, f.name)
            if isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name}={value}")
        lines += [f"{key}={value}" for key, value in sorted(self.extras.items())]
        return "\n".join(lines) + "\n"

    def disc_regions(self, default):
        """Parsed region override or the default ((center, radius), …)."""
        if not self.regions:
            return tuple(default)
        parsed = []
        for chunk in self.regions.split(";"):
            parts = [p.strip() for p in chunk.split(",")]
            if len(parts) != 3:
                raise ConfigurationError(f"regions: expected x,y,r triples, got '{chunk}'")
            try:
                x, y, r = (float(p) for p in parts)
            except ValueError:
                raise ConfigurationError(f"regions: expected numbers in '{chunk}'") from None
            if r <= 0:
                raise ConfigurationError(f"regions: radius must be positive in '{chunk}'")
            parsed.append((complex(x, y), r))
        return tuple(parsed)


@dataclass
class ReportRow:
    """
    One line of a verification report.

    Attributes mirror the report columns; `fields()` renders them in column order.
    """
    experiment: str
    quantity: str
    estimate: float
    verdict: str
    std_error: Optional[float] = None
    ci_lo: Optional[float] = None
    ci_hi: Optional[float] = None
    target: Optional[float] = None
    rel_err: Optional[float] = None
    n_samples: Optional[int] = None
    eps: Optional[float] = None
    dt: Optional[float] = None
    seed: Optional[int] = None
    wall_time_s: Optional[float] = None

    def formatted(self) -> List[str]:
        return [
            self.experiment,
            self.quantity,
            format_float(self.estimate),
            format_float(self.std_error),
            format_float(self.ci_lo),
            format_float(self.ci_hi),
            format_float(self.target),
            format_float(self.rel_err),
            self.verdict,
            "" if self.n_samples is None else str(self.n_samples),
            format_float(self.eps),
            format_float(self.dt),
            "" if self.seed is None else str(self.seed),
            format_float(self.wall_time_s),
        ]
