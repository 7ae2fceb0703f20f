from __future__ import annotations

# Internal
from dataclasses import fields, replace
from typing import Any, TypeVar
import logging

logger = logging.getLogger(__name__)

M = TypeVar("M", bound="BaseModel")


class BaseModel:
    """Base for the immutable value types of the engines.

    Subclasses are frozen dataclasses. Construction runs `validate()`, so an
    instance that exists is well-formed; `update()` returns a modified copy
    that is validated the same way.
    """


    def __post_init__(self) -> None:
        self.validate()


    def validate(self) -> None:
        """Hook to run custom checks after construction."""

        try:
            self._validate_hook()
        except ValueError as e:
            logger.error(f"Invalid {self.__class__.__name__}: {e}")
            raise
        except Exception as e:
            logger.exception(f"Unexpected error validating {self.__class__.__name__}: {e}")
            raise


    def _validate_hook(self) -> None:
        pass


    def update(self: M, **kwargs: Any) -> M:
        """Return a copy with the given fields replaced."""

        if not kwargs:
            return self

        known = {f.name for f in fields(self)}  # type: ignore[arg-type]
        unknown = set(kwargs) - known
        if unknown:
            raise ValueError(f"Unexpected fields for {self.__class__.__name__}: {', '.join(sorted(unknown))}")

        updated = replace(self, **kwargs)  # type: ignore[type-var]
        logger.debug(f"Updated {self.__class__.__name__} fields: {', '.join(sorted(kwargs))}")
        return updated


    def to_dict(self) -> dict[str, Any]:
        """Shallow field mapping, used by report serializers."""
        return {f.name: getattr(self, f.name) for f in fields(self)}  # type: ignore[arg-type]
