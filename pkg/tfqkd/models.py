# tfqkd/models.py
# SQLAlchemy table for the run archive: one row per report the CLI produced.

from typing import List, Optional

from sqlalchemy import Column, DateTime, Float, Integer, String, Text, create_engine, func
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from .config import DATABASE_URL

# --- Database Connection ---
engine = create_engine(DATABASE_URL)
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

Base = declarative_base()


# --- Model Definitions ---

class RunRecord(Base):
    __tablename__ = "runs"
    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, nullable=False, index=True)
    source_path = Column(String)
    distance_km = Column(Float)
    seed = Column(Integer)
    r_per_pulse = Column(Float)
    total_secure_bits = Column(Integer)
    vacuous = Column(Integer, default=0)
    report_json = Column(Text, nullable=False)
    created_at = Column(DateTime(timezone=True), server_default=func.now())


def session_factory(url: Optional[str] = None) -> sessionmaker:
    """Session factory for ``url``, creating the tables on first use."""
    if url in (None, DATABASE_URL):
        Base.metadata.create_all(engine)
        return SessionLocal
    bind = create_engine(url)
    Base.metadata.create_all(bind)
    return sessionmaker(autocommit=False, autoflush=False, bind=bind)


def get_db(url: Optional[str] = None):
    """Yield a session and close it afterwards."""
    db = session_factory(url)()
    try:
        yield db
    finally:
        db.close()


def archive_report(db: Session, command: str, report_json: str, **fields) -> RunRecord:
    record = RunRecord(command=command, report_json=report_json, **fields)
    db.add(record)
    db.commit()
    db.refresh(record)
    return record


def list_runs(db: Session, limit: int = 20) -> List[RunRecord]:
    return db.query(RunRecord).order_by(RunRecord.id.desc()).limit(limit).all()
