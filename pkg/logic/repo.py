# Built-in
from __future__ import annotations
from typing import Any, Union

# Internal
from cmn.base_repo import BaseRepository
from mln.models import MlnModel
from rlr.models import RlrModel
from .models import Signature
from .parser import parse_model, pretty_print

ParsedModel = tuple[Signature, Union[MlnModel, RlrModel]]


class ModelRepository(BaseRepository[ParsedModel]):
    """Model files in the DSL, decoded to `(signature, model)` pairs."""

    CACHE_NAMESPACE = "models"

    def decode(self, text: str, **context: Any) -> ParsedModel:
        return parse_model(text)

    def encode(self, entity: ParsedModel) -> str:
        signature, model = entity
        return pretty_print(signature, model)
