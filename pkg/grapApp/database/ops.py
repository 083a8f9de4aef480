"""
DATABASE OPERATIONS MODULE
Lookup and storage of run summaries so repeated sweeps skip finished runs
"""

import logging
import threading
from functools import lru_cache
from typing import List, Optional

import sqlalchemy
from sqlalchemy.dialects.sqlite import insert as sqlite_upsert

from grapApp.config import config
from grapApp.harness.utils.state import RunSummary

from .schema import create_db_engine, run_summaries

logger = logging.getLogger(__name__)

_SUMMARY_FIELDS = [name for name in RunSummary.model_fields]


class RunRepository:
    """
    Handles data access using SQLAlchemy Core expressions.
    """

    def __init__(self, engine: sqlalchemy.Engine):
        self.engine = engine
        # SQLite serialises writers anyway; the lock keeps sweep threads polite
        self._lock = threading.Lock()

    def get(self, config_hash: str) -> Optional[RunSummary]:
        query = run_summaries.select().where(run_summaries.c.config_hash == config_hash)
        with self._lock, self.engine.connect() as conn:
            row = conn.execute(query).mappings().first()
        if row is None:
            return None
        return RunSummary(**{k: row[k] for k in _SUMMARY_FIELDS})

    def save(self, summary: RunSummary) -> None:
        """
        Idempotent insert; a second save of the same hash replaces the row.
        """
        values = summary.model_dump()
        stmt = sqlite_upsert(run_summaries).values(**values)
        stmt = stmt.on_conflict_do_update(
            index_elements=["config_hash"],
            set_={k: stmt.excluded[k] for k in values if k != "config_hash"},
        )
        with self._lock, self.engine.begin() as conn:
            conn.execute(stmt)
        logger.debug("cached run %s", summary.config_hash[:12])

    def list_method(self, method: str) -> List[RunSummary]:
        query = (
            run_summaries.select()
            .where(run_summaries.c.method == method)
            .order_by(run_summaries.c.seed.asc())
        )
        with self._lock, self.engine.connect() as conn:
            rows = conn.execute(query).mappings().all()
        return [RunSummary(**{k: row[k] for k in _SUMMARY_FIELDS}) for row in rows]


# Factory function
@lru_cache()  # Cache the repository instance
def get_repository(url: Optional[str] = None) -> RunRepository:
    return RunRepository(create_db_engine(url or config.DATABASE_URL))
