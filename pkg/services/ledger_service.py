"""
Ledger service for the occupation-time verification toolkit.
Stores verification runs and their report rows through SQLAlchemy.
"""
import logging
import math
from typing import List, Optional, Sequence

from sqlalchemy import select
from sqlalchemy.exc import SQLAlchemyError

from db_models import ReportRecord, VerificationRun, create_tables, make_engine, make_session_factory
from models.experiment import ExperimentConfig, ReportRow

logger = logging.getLogger(__name__)


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


class LedgerService:
    """Service for the optional results ledger."""

    def __init__(self, url: str):
        """
        Initialize the ledger and create its tables.

        Args:
            url: SQLAlchemy database URL, e.g. sqlite:///ledger.db
        """
        self.engine = make_engine(url)
        create_tables(self.engine)
        self.session_factory = make_session_factory(self.engine)

    def record_run(self, config: ExperimentConfig, rows: Sequence[ReportRow], exit_code: int) -> Optional[int]:
        """
        Store a run with its rows.

        Returns:
            The run id, or None if the database rejected the write
        """
        session = self.session_factory()
        try:
            run = VerificationRun(
                experiment=config.experiment,
                seed=str(config.seed),
                workers=config.workers,
                tasks=config.tasks,
                config_text=config.to_text(),
                exit_code=exit_code,
            )
            for row in rows:
                run.records.append(ReportRecord(
                    quantity=row.quantity,
                    estimate=_finite(row.estimate),
                    std_error=_finite(row.std_error),
                    target=_finite(row.target),
                    rel_err=_finite(row.rel_err),
                    verdict=row.verdict,
                    n_samples=row.n_samples,
                    wall_time_s=_finite(row.wall_time_s),
                ))
            session.add(run)
            session.commit()
            logger.info(f"Run {run.id} ({config.experiment}) recorded with {len(rows)} rows")
            return run.id
        except SQLAlchemyError as e:
            session.rollback()
            logger.error(f"Error recording run: {e}")
            return None
        finally:
            session.close()

    def history(self, experiment: str) -> List[dict]:
        """Past runs of an experiment, newest first, with their verdicts and estimates (None for error rows)."""
        session = self.session_factory()
        try:
            runs = session.scalars(
                select(VerificationRun)
                .where(VerificationRun.experiment == experiment)
                .order_by(VerificationRun.id.desc())
            ).all()
            return [
                {
                    "id": run.id,
                    "seed": run.seed,
                    "exit_code": run.exit_code,
                    "created_at": run.created_at,
                    "verdicts": {record.quantity: record.verdict for record in run.records},
                    "estimates": {record.quantity: record.estimate for record in run.records},
                }
                for run in runs
            ]
        finally:
            session.close()
