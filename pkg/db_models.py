"""
Database models for the occupation-time verification ledger.
Each verification run and its report rows can be stored in any SQLAlchemy database.
"""
from datetime import datetime

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text, create_engine
from sqlalchemy.orm import declarative_base, relationship, sessionmaker

Base = declarative_base()


class VerificationRun(Base):
    """
    Represents one invocation of `run` for one experiment.
    """
    __tablename__ = "verification_runs"

    id = Column(Integer, primary_key=True)
    experiment = Column(String(32), nullable=False, index=True)
    seed = Column(String(24), nullable=False)
    workers = Column(Integer, nullable=False)
    tasks = Column(Integer, nullable=False)
    config_text = Column(Text, nullable=False)
    exit_code = Column(Integer, nullable=False)
    created_at = Column(DateTime, default=datetime.now)

    # Relationships
    records = relationship("ReportRecord", back_populates="run", cascade="all, delete-orphan")

    def __repr__(self):
        return f"<VerificationRun(id={self.id}, experiment={self.experiment}, exit_code={self.exit_code})>"


class ReportRecord(Base):
    """
    Represents one report row of a run.
    """
    __tablename__ = "report_records"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("verification_runs.id"), nullable=False)
    quantity = Column(String(64), nullable=False)
    estimate = Column(Float, nullable=True)  # NULL when the row carries no finite estimate
    std_error = Column(Float, nullable=True)
    target = Column(Float, nullable=True)
    rel_err = Column(Float, nullable=True)
    verdict = Column(String(16), nullable=False)
    n_samples = Column(Integer, nullable=True)
    wall_time_s = Column(Float, nullable=True)

    # Relationships
    run = relationship("VerificationRun", back_populates="records")

    def __repr__(self):
        return f"<ReportRecord(quantity={self.quantity}, verdict={self.verdict})>"


def make_engine(url: str):
    """Engine for a ledger URL; postgres:// is rewritten to postgresql://."""
    if url.startswith("postgres://"):
        url = url.replace("postgres://", "postgresql://", 1)
    return create_engine(url, pool_pre_ping=True)


def create_tables(engine) -> None:
    Base.metadata.create_all(bind=engine)


def make_session_factory(engine):
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)
