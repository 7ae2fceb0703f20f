from __future__ import annotations

# Internal
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, ClassVar, Generic, Optional, TypeVar
import logging
import os
import tempfile

from .base_cache import CacheManager
from .errors import RelscaleError, RepositoryError

logger = logging.getLogger(__name__)

T = TypeVar("T")


class Repository(ABC, Generic[T]):
    """Abstract class that defines the contract for file-backed repositories."""


    @abstractmethod
    def decode(self, text: str, **context: Any) -> T:
        """Build an entity from its canonical text."""
        pass


    @abstractmethod
    def encode(self, entity: T) -> str:
        """Render an entity as canonical text."""
        pass


    @abstractmethod
    def load_entity(self, path: str | Path, **context: Any) -> T:
        """Read and decode the entity stored at `path`."""
        pass


    @abstractmethod
    def save_entity(self, path: str | Path, entity: T) -> Path:
        """Encode and write an entity to `path`."""
        pass


class BaseRepository(Repository[T]):
    """Base repository implementation with caching.

    Subclasses implement `decode`/`encode`; reading, writing, path
    validation and caching of decoded entities live here. The cache key
    includes the file's size and modification time, so an edited file is
    decoded again.
    """

    CACHE_NAMESPACE: ClassVar[str] = "repository"
    ENCODING: ClassVar[str] = "utf-8"

    _cache_enabled: bool = False
    _cache_manager: CacheManager


    def __init__(self, cache_enabled: bool = False) -> None:
        """Initialize repository with a caching option."""

        self._cache_enabled = cache_enabled
        self._cache_manager = CacheManager(namespace=f"{self.CACHE_NAMESPACE}.{self.__class__.__name__.lower()}")


    @property
    def cache_enabled(self) -> bool:
        return self._cache_enabled


    def _get_cache_key(self, path: Path, context: dict[str, Any]) -> str:
        """Generate a cache key from the file identity and the decode context."""

        stat = path.stat()
        rendered_context = ";".join(f"{k}={context[k]!r}" for k in sorted(context))
        return self._cache_manager.make_key(path.resolve(), stat.st_size, stat.st_mtime_ns, rendered_context)


    @staticmethod
    def _validate_path(path: Any, must_exist: bool = True) -> Path:
        """Validate and convert a path argument."""

        if path is None:
            raise RepositoryError("Path cannot be None")

        if isinstance(path, str):
            if not path.strip():
                raise RepositoryError("Path cannot be empty string")
            path = Path(path)

        if not isinstance(path, Path):
            raise RepositoryError(f"Path must be a string or Path, got {type(path).__name__}")

        if must_exist and not path.is_file():
            raise RepositoryError(f"No such file: '{path}'")

        return path


    def _safe_cache_operation(self, operation: str, key: str, value: Any = None) -> Any:
        """Safely perform cache operations with error handling."""

        if not self._cache_enabled:
            return None
        try:
            if operation == "get":
                return self._cache_manager.get(key)
            elif operation == "set":
                self._cache_manager.set(key, value)
                return True
            elif operation == "delete":
                self._cache_manager.delete(key)
                return True
        except Exception as e:
            logger.warning(f"Cache {operation} operation failed for key '{key}': {e}")
        return None


    def read_text(self, path: str | Path) -> str:
        validated = self._validate_path(path)
        try:
            return validated.read_text(encoding=self.ENCODING)
        except (OSError, UnicodeDecodeError) as e:
            logger.exception(f"Failed to read '{validated}'")
            raise RepositoryError(f"Failed to read '{validated}': {e}") from e


    def load_entity(self, path: str | Path, **context: Any) -> T:
        """Read and decode the entity stored at `path`, with caching.

        Args:
            path: File to read
            **context: Extra decode inputs (for example a signature); part of the cache key

        Returns:
            The decoded entity

        Raises:
            RepositoryError: If the file cannot be read
            RelscaleError: If the content does not decode
        """
        validated = self._validate_path(path)
        cache_key = self._get_cache_key(validated, context) if self._cache_enabled else ""

        cached = self._safe_cache_operation("get", cache_key)
        if cached is not None:
            logger.debug(f"Cache hit for {validated}")
            return cached

        text = self.read_text(validated)
        try:
            entity = self.decode(text, **context)
        except RelscaleError:
            raise
        except Exception as e:
            logger.exception(f"Unexpected error decoding '{validated}'")
            raise RepositoryError(f"Failed to decode '{validated}': {e}") from e

        self._safe_cache_operation("set", cache_key, entity)
        logger.info(f"Loaded {self.__class__.__name__} entity from {validated}")
        return entity


    def save_entity(self, path: str | Path, entity: T) -> Path:
        """Encode `entity` and replace the file at `path` atomically.

        Returns:
            The written path

        Raises:
            RepositoryError: If the file cannot be written
        """
        target = self._validate_path(path, must_exist=False)
        text = self.encode(entity)
        return self.write_text(target, text)


    def write_text(self, target: Path, text: str) -> Path:
        tmp_name: Optional[str] = None
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
            with os.fdopen(fd, "w", encoding=self.ENCODING, newline="\n") as handle:
                handle.write(text)
            os.replace(tmp_name, target)
        except OSError as e:
            if tmp_name is not None:
                Path(tmp_name).unlink(missing_ok=True)
            logger.exception(f"Failed to write '{target}'")
            raise RepositoryError(f"Failed to write '{target}': {e}") from e

        logger.info(f"Wrote {len(text)} characters to {target}")
        return target

