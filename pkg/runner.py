"""
Experiment runner for the occupation-time verification toolkit.
Maps experiment ids to handlers, runs them and emits the report.
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from config import ExitCode, ExperimentId, LEDGER_URL, REPORT_COLUMNS, Verdict
from handlers.experiment_handlers import (
    handle_calibrate,
    handle_dirichlet,
    handle_exc_cov,
    handle_gff_fluct,
    handle_intersection,
    handle_loop_cov,
    handle_loop_soup,
    handle_moments_p,
    handle_oracle_exact,
    handle_quad_selfcheck,
    handle_tau_mass,
)
from models.experiment import ExperimentConfig, ReportRow
from utils.errors import ConfigurationError, VerificationError
from utils.helpers import render_csv, write_text

logger = logging.getLogger(__name__)

Handler = Callable[[ExperimentConfig], List[ReportRow]]


def setup_runner() -> Dict[str, Handler]:
    """
    Register one handler per experiment id.

    Returns:
        Mapping from experiment id to handler
    """
    registry = {
        ExperimentId.EXC_COV: handle_exc_cov,
        ExperimentId.LOOP_COV: handle_loop_cov,
        ExperimentId.TAU_MASS: handle_tau_mass,
        ExperimentId.DIRICHLET: handle_dirichlet,
        ExperimentId.MOMENTS_P: handle_moments_p,
        ExperimentId.INTERSECTION: handle_intersection,
        ExperimentId.GFF_FLUCT: handle_gff_fluct,
        ExperimentId.LOOP_SOUP: handle_loop_soup,
        ExperimentId.ORACLE_EXACT: handle_oracle_exact,
        ExperimentId.QUAD_SELFCHECK: handle_quad_selfcheck,
        ExperimentId.CALIBRATE: handle_calibrate,
    }
    logger.debug(f"Runner set up with {len(registry)} experiments")
    return registry


def exit_code_for(rows: Sequence[ReportRow]) -> int:
    """0 all pass, 2 any fail, 3 any underpowered without a fail."""
    verdicts = {row.verdict for row in rows}
    if Verdict.FAIL in verdicts:
        return ExitCode.FAIL
    if Verdict.UNDERPOWERED in verdicts:
        return ExitCode.UNDERPOWERED
    return ExitCode.OK


def emit_report(rows: Sequence[ReportRow], path: Optional[str] = None) -> str:
    """
    Render rows as CSV (header first, 9 significant digits) and write them if a path is given.

    Raises:
        ValueError: No rows
        OSError: Unwritable path
    """
    if not rows:
        raise ValueError("a report needs at least one row")
    text = render_csv([row.formatted() for row in rows], REPORT_COLUMNS)
    if path:
        write_text(path, text)
    return text


def _error_row(config: ExperimentConfig, error: Exception) -> ReportRow:
    return ReportRow(experiment=config.experiment, quantity=f"error: {type(error).__name__}",
                     estimate=float("nan"), verdict=Verdict.FAIL, seed=config.seed)


def run_verification(config: ExperimentConfig, ledger_url: Optional[str] = None,
                     registry: Optional[Dict[str, Handler]] = None) -> Tuple[List[ReportRow], int]:
    """
    Run one experiment, write its report and optionally record it in the ledger.

    A VerificationError inside the pipeline becomes a failing row.

    Returns:
        (rows, exit code)

    Raises:
        ConfigurationError: Unknown experiment id
        OSError: Report path not writable
    """
    if registry is None:
        registry = setup_runner()
    handler = registry.get(config.experiment)
    if handler is None:
        raise ConfigurationError(f"unknown experiment '{config.experiment}'")

    logger.info(f"Running {config.experiment} (seed {config.seed}, workers {config.workers}, tasks {config.tasks})")
    logger.info("Configuration:\n" + config.to_text())
    try:
        rows = handler(config)
    except ConfigurationError:
        raise
    except VerificationError as e:
        logger.error(f"Experiment {config.experiment} failed: {e}")
        rows = [_error_row(config, e)]

    emit_report(rows, config.output)
    code = exit_code_for(rows)

    url = ledger_url if ledger_url is not None else LEDGER_URL
    if url:
        from services.ledger_service import LedgerService
        LedgerService(url).record_run(config, rows, code)
    logger.info(f"Experiment {config.experiment} finished with exit code {code}")
    return rows, code
