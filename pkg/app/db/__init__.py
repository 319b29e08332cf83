"""Database package voor de planforge registry."""
from db.models import AlertRecord, CheckpointRecord, EvalRecord, TrainingRun
from db.session import close_db, db_available, get_session, init_db

__all__ = [
    "TrainingRun", "CheckpointRecord", "AlertRecord", "EvalRecord",
    "init_db", "close_db", "db_available", "get_session",
]
