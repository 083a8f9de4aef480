"""
Database schema for the run cache

Tables:
1. run_summaries: one row per finished run, keyed by its config hash
"""

from datetime import datetime, timezone

import sqlalchemy
from sqlalchemy.pool import StaticPool

# ----- Schema Definition -----
metadata = sqlalchemy.MetaData()

# TABLE -> Finished runs
run_summaries = sqlalchemy.Table(
    "run_summaries",
    metadata,
    sqlalchemy.Column("config_hash", sqlalchemy.String(64), primary_key=True),
    sqlalchemy.Column("method", sqlalchemy.String, nullable=False, index=True),
    sqlalchemy.Column("seed", sqlalchemy.Integer, nullable=False),
    sqlalchemy.Column("labeled_fraction", sqlalchemy.Float, nullable=False),
    sqlalchemy.Column("steps", sqlalchemy.Integer, nullable=False),
    sqlalchemy.Column("final_loss_val", sqlalchemy.Float, nullable=False),
    sqlalchemy.Column("final_metric_val", sqlalchemy.Float, nullable=False),
    sqlalchemy.Column("probe_metric_val", sqlalchemy.Float, default=0.0),
    sqlalchemy.Column("median_weights", sqlalchemy.JSON, nullable=False),
    sqlalchemy.Column("degenerate_events", sqlalchemy.Integer, default=0),
    sqlalchemy.Column("mean_step_us", sqlalchemy.Float, default=0.0),
    sqlalchemy.Column(
        "created_at", sqlalchemy.DateTime, default=lambda: datetime.now(timezone.utc)
    ),
)


# ----- Engine & Connection Setup -----


def create_db_engine(url: str) -> sqlalchemy.Engine:
    """Engine for ``url`` with the schema created; in-memory SQLite shares one connection."""
    kwargs = {}
    if url.startswith("sqlite"):
        kwargs["connect_args"] = {"check_same_thread": False}  # Only for SQLite
        if ":memory:" in url or url.rstrip("/") == "sqlite:":
            kwargs["poolclass"] = StaticPool
    engine = sqlalchemy.create_engine(url, **kwargs)
    metadata.create_all(engine)
    return engine
