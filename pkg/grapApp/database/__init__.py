from .ops import RunRepository, get_repository
from .schema import create_db_engine, metadata, run_summaries

__all__ = [
    "RunRepository",
    "create_db_engine",
    "get_repository",
    "metadata",
    "run_summaries",
]
