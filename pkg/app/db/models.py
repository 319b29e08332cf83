"""SQLAlchemy modellen voor de planforge run-registry."""
import datetime

from sqlalchemy import Column, DateTime, ForeignKey, Integer, JSON, String, Text
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


class TrainingRun(Base):
    """Audit trail: elke start of hervatting van een training-run."""
    __tablename__ = "training_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_dir = Column(String(512), nullable=False, index=True)
    config_hash = Column(String(16), nullable=False)
    manifest_hash = Column(String(16), nullable=False)
    tool_version = Column(String(20), default="")
    stage = Column(Integer, default=1)
    resumed = Column(Integer, default=0)
    status = Column(String(20), default="gestart")  # gestart, voltooid, mislukt
    started_at = Column(DateTime, default=datetime.datetime.utcnow)
    completed_at = Column(DateTime, nullable=True)
    steps = Column(Integer, default=0)
    summary = Column(JSON, nullable=True)
    error_message = Column(Text, nullable=True)

    checkpoints = relationship("CheckpointRecord", back_populates="run",
                               cascade="all, delete-orphan",
                               order_by="CheckpointRecord.step")
    alerts = relationship("AlertRecord", back_populates="run",
                          cascade="all, delete-orphan")

    def to_dict(self):
        return {
            "id": self.id,
            "run_dir": self.run_dir,
            "config_hash": self.config_hash,
            "manifest_hash": self.manifest_hash,
            "tool_version": self.tool_version,
            "stage": self.stage,
            "resumed": bool(self.resumed),
            "status": self.status,
            "started_at": self.started_at.isoformat() if self.started_at else "",
            "completed_at": self.completed_at.isoformat() if self.completed_at else "",
            "steps": self.steps,
            "error_message": self.error_message or "",
        }


class CheckpointRecord(Base):
    """Geschreven checkpoint binnen een run."""
    __tablename__ = "checkpoint_records"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("training_runs.id"), nullable=False, index=True)
    step = Column(Integer, nullable=False)
    kind = Column(String(20), default="periodic")  # periodic of emergency
    path = Column(String(512), default="")
    created_at = Column(DateTime, default=datetime.datetime.utcnow)

    run = relationship("TrainingRun", back_populates="checkpoints")


class AlertRecord(Base):
    """Alert uit de monitor (UTILIZATION_DROP of LOSS_DRIFT)."""
    __tablename__ = "alert_records"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("training_runs.id"), nullable=False, index=True)
    kind = Column(String(30), nullable=False)
    task = Column(String(40), nullable=True)
    start_step = Column(Integer, nullable=False)
    end_step = Column(Integer, nullable=False)
    evidence = Column(JSON, default=dict)

    run = relationship("TrainingRun", back_populates="alerts")


class EvalRecord(Base):
    """Eval-rapport zoals door `planforge eval` geschreven."""
    __tablename__ = "eval_records"

    id = Column(Integer, primary_key=True, autoincrement=True)
    name = Column(String(255), nullable=False)
    protocol = Column(String(100), nullable=False, index=True)
    report = Column(JSON, nullable=False)
    created_at = Column(DateTime, default=datetime.datetime.utcnow)
