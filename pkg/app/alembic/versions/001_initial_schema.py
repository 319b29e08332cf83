"""Initial schema - registry tabellen voor planforge.

Revision ID: 001
Revises:
Create Date: 2026-10-18
"""
from typing import Sequence, Union

from alembic import op
import sqlalchemy as sa

revision: str = "001"
down_revision: Union[str, None] = None
branch_labels: Union[str, Sequence[str], None] = None
depends_on: Union[str, Sequence[str], None] = None


def upgrade() -> None:
    # Training runs (één record per start of hervatting)
    op.create_table(
        "training_runs",
        sa.Column("id", sa.Integer, primary_key=True, autoincrement=True),
        sa.Column("run_dir", sa.String(512), nullable=False),
        sa.Column("config_hash", sa.String(16), nullable=False),
        sa.Column("manifest_hash", sa.String(16), nullable=False),
        sa.Column("tool_version", sa.String(20), server_default=""),
        sa.Column("stage", sa.Integer, server_default="1"),
        sa.Column("resumed", sa.Integer, server_default="0"),
        sa.Column("status", sa.String(20), server_default="gestart"),
        sa.Column("started_at", sa.DateTime, server_default=sa.func.now()),
        sa.Column("completed_at", sa.DateTime, nullable=True),
        sa.Column("steps", sa.Integer, server_default="0"),
        sa.Column("summary", sa.JSON, nullable=True),
        sa.Column("error_message", sa.Text, nullable=True),
    )
    op.create_index("ix_training_runs_run_dir", "training_runs", ["run_dir"])

    # Checkpoints
    op.create_table(
        "checkpoint_records",
        sa.Column("id", sa.Integer, primary_key=True, autoincrement=True),
        sa.Column("run_id", sa.Integer,
                  sa.ForeignKey("training_runs.id"), nullable=False),
        sa.Column("step", sa.Integer, nullable=False),
        sa.Column("kind", sa.String(20), server_default="periodic"),
        sa.Column("path", sa.String(512), server_default=""),
        sa.Column("created_at", sa.DateTime, server_default=sa.func.now()),
    )
    op.create_index("ix_checkpoint_records_run_id", "checkpoint_records", ["run_id"])

    # Alerts
    op.create_table(
        "alert_records",
        sa.Column("id", sa.Integer, primary_key=True, autoincrement=True),
        sa.Column("run_id", sa.Integer,
                  sa.ForeignKey("training_runs.id"), nullable=False),
        sa.Column("kind", sa.String(30), nullable=False),
        sa.Column("task", sa.String(40), nullable=True),
        sa.Column("start_step", sa.Integer, nullable=False),
        sa.Column("end_step", sa.Integer, nullable=False),
        sa.Column("evidence", sa.JSON),
    )
    op.create_index("ix_alert_records_run_id", "alert_records", ["run_id"])

    # Eval rapporten
    op.create_table(
        "eval_records",
        sa.Column("id", sa.Integer, primary_key=True, autoincrement=True),
        sa.Column("name", sa.String(255), nullable=False),
        sa.Column("protocol", sa.String(100), nullable=False),
        sa.Column("report", sa.JSON, nullable=False),
        sa.Column("created_at", sa.DateTime, server_default=sa.func.now()),
    )
    op.create_index("ix_eval_records_protocol", "eval_records", ["protocol"])


def downgrade() -> None:
    op.drop_table("eval_records")
    op.drop_table("alert_records")
    op.drop_table("checkpoint_records")
    op.drop_table("training_runs")
