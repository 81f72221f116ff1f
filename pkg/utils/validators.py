"""
Validation utilities for the occupation-time verification toolkit.
Provides validation functions for experiment parameters and config values.
"""
import logging
import math
from typing import Optional, Tuple, Union

from config import (
    EXCURSION_EPS_RANGE,
    ExperimentId,
    MIN_SAMPLES,
)

logger = logging.getLogger(__name__)


def validate_float(value: Union[str, float], low: Optional[float] = None, high: Optional[float] = None,
                   name: str = "value") -> Tuple[bool, Optional[float], Optional[str]]:
    """
    Validate a real number, optionally inside the open interval (low, high).

    Args:
        value: Value to validate, can be string or float
        low: Exclusive lower bound
        high: Exclusive upper bound
        name: Field name used in the error message

    Returns:
        Tuple (is_valid, parsed_value, error_message)
    """
    try:
        if isinstance(value, str):
            value = float(value.strip())
        value = float(value)
    except (TypeError, ValueError):
        return False, None, f"{name} must be a number"

    if not math.isfinite(value):
        return False, None, f"{name} must be finite"
    if low is not None and value <= low:
        return False, None, f"{name} must be greater than {low}"
    if high is not None and value >= high:
        return False, None, f"{name} must be less than {high}"
    return True, value, None


def validate_int(value: Union[str, int], minimum: Optional[int] = None,
                 name: str = "value") -> Tuple[bool, Optional[int], Optional[str]]:
    """
    Validate an integer with an optional inclusive minimum.

    Returns:
        Tuple (is_valid, parsed_value, error_message)
    """
    try:
        if isinstance(value, str):
            text = value.strip().replace("_", "")
            parsed = int(float(text)) if ("e" in text.lower() or "." in text) else int(text)
            if float(text) != parsed:
                return False, None, f"{name} must be an integer"
            value = parsed
        value = int(value)
    except (TypeError, ValueError):
        return False, None, f"{name} must be an integer"

    if minimum is not None and value < minimum:
        return False, None, f"{name} must be at least {minimum}"
    return True, value, None


def validate_eps(value: Union[str, float]) -> Tuple[bool, Optional[float], Optional[str]]:
    """Validate a start offset ε against the excursion range."""
    low, high = EXCURSION_EPS_RANGE
    return validate_float(value, low, high, name="eps")


def validate_dt(dt: float, eps: float) -> Tuple[bool, Optional[str]]:
    """
    Validate a time step against the boundary layer of width ε.

    Returns:
        Tuple (is_valid, error_message)
    """
    if dt <= 0:
        return False, "dt must be positive"
    if dt > eps * eps / 4:
        return False, f"dt={dt} does not resolve the boundary layer (need dt <= eps^2/4 = {eps * eps / 4})"
    return True, None


def validate_sample_count(n: Union[str, int]) -> Tuple[bool, Optional[int], Optional[str]]:
    """Validate a Monte Carlo sample count."""
    return validate_int(n, minimum=MIN_SAMPLES, name="n")


def validate_tolerance(tol: Union[str, float]) -> Tuple[bool, Optional[float], Optional[str]]:
    """Validate a relative tolerance in (0, 1)."""
    return validate_float(tol, 0.0, 1.0, name="tolerance")


def validate_experiment_id(experiment: str) -> Tuple[bool, Optional[str]]:
    """
    Validate an experiment identifier.

    Returns:
        Tuple (is_valid, error_message)
    """
    if experiment in ExperimentId.ALL:
        return True, None
    return False, f"Unknown experiment '{experiment}'. Must be one of: {', '.join(ExperimentId.ALL)}"


def validate_seed(seed: Union[str, int, None]) -> Tuple[bool, Optional[int], Optional[str]]:
    """Validate a mandatory non-negative 64-bit seed."""
    if seed is None or (isinstance(seed, str) and not seed.strip()):
        return False, None, "seed is mandatory"
    ok, value, error = validate_int(seed, minimum=0, name="seed")
    if not ok:
        return ok, value, error
    if value >= 2 ** 64:
        return False, None, "seed must fit in 64 bits"
    return True, value, None


def validate_interior(point: complex, radius: float = 1.0) -> Tuple[bool, Optional[str]]:
    """Validate that a point lies strictly inside the disc of the given radius."""
    if not (abs(point) < radius):
        return False, f"point {point} is not inside the disc of radius {radius}"
    return True, None
