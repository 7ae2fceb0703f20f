# Built-in
from typing import Any

# Internal
from cmn.base_repo import BaseRepository


class ReportRepository(BaseRepository[str]):
    """Rendered reports; the entity is the report text itself."""

    CACHE_NAMESPACE = "reports"

    def decode(self, text: str, **context: Any) -> str:
        return text

    def encode(self, entity: str) -> str:
        return entity
