"""
Line-delimited sample files.

    # seed=7 sizes=person=20
    R(e1);Q(e1);Q(e3)
    <empty line: a world where nothing holds>
    ...

One world per line, true ground atoms in canonical order. The header is
required and fixes the domain sizes; the signature comes from the model
the samples belong to.
"""

# Built-in
from __future__ import annotations
from typing import Any, Optional

# External
import pyparsing as pp

# Internal
from cmn.base_repo import BaseRepository
from cmn.errors import RepositoryError
from logic.models import DomainAssignment, Signature, World
from .models import SampleBatch

_IDENT = pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*")
_ATOM = pp.Group(_IDENT + pp.Group(pp.Opt(pp.Suppress("(") + pp.DelimitedList(_IDENT) + pp.Suppress(")"))))
_RECORD = pp.Opt(pp.DelimitedList(_ATOM, delim=";")) + pp.StringEnd()

_SIZE = pp.Group(_IDENT + pp.Suppress("=") + pp.common.integer)
_HEADER = (
    pp.Suppress("#") + pp.Suppress("seed=") + (pp.common.integer | pp.Literal("none"))("seed")
    + pp.Suppress("sizes=") + pp.Group(pp.Opt(pp.DelimitedList(_SIZE)))("sizes") + pp.StringEnd()
)


class SampleRepository(BaseRepository[SampleBatch]):

    CACHE_NAMESPACE = "samples"


    @staticmethod
    def header(seed: Optional[int], domains: DomainAssignment) -> str:
        return f"# seed={'none' if seed is None else seed} sizes={domains}"


    def decode(self, text: str, **context: Any) -> SampleBatch:
        """
        Parse a sample file.

        :param text: File content.
        :param context: Must hold `signature`, the model signature the worlds are over.
        :return: The batch with the header's seed and sizes.
        :raises RepositoryError: On a missing or malformed header or record.
        """
        signature: Optional[Signature] = context.get("signature")
        if signature is None:
            raise RepositoryError("decoding samples needs the model signature")

        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise RepositoryError("sample file is empty; expected a '# seed=... sizes=...' header")
        try:
            header = _HEADER.parse_string(lines[0], parse_all=True)
        except pp.ParseException as e:
            raise RepositoryError(f"line 1: malformed sample header: {e.msg}") from e
        seed = None if header.seed == "none" else int(header.seed)
        domains = DomainAssignment.from_sizes((sort, size) for sort, size in header.sizes)

        worlds = []
        for number, line in enumerate(lines[1:], start=2):
            try:
                atoms = _RECORD.parse_string(line.strip(), parse_all=True)
            except pp.ParseException as e:
                raise RepositoryError(f"line {number}: malformed world record: {e.msg}") from e
            try:
                worlds.append(World.from_atoms(signature, domains, [(name, tuple(args)) for name, args in atoms]))
            except ValueError as e:
                raise RepositoryError(f"line {number}: {e}") from e
        return SampleBatch(signature, domains, tuple(worlds), seed)


    def encode(self, entity: SampleBatch) -> str:
        lines = [self.header(entity.seed, entity.domains)]
        lines.extend(str(world) for world in entity.worlds)
        return "\n".join(lines) + "\n"
