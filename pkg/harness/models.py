from __future__ import annotations

# Internal
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Iterable, Optional

from cmn.base_model import BaseModel
from cmn.errors import ConfigurationError
from logic.models import DomainAssignment


@dataclass(frozen=True)
class RunConfig(BaseModel):
    """Validated options of one command run.

    `fixed` holds the `--size` values, `ranges` the expanded `--sizes`
    values per swept sort.
    """

    model: Path
    fixed: tuple[tuple[str, int], ...] = ()
    ranges: tuple[tuple[str, tuple[int, ...]], ...] = ()
    query: Optional[str] = None
    evidence: Optional[str] = None
    engine: str = "enumerate"
    seed: Optional[int] = None
    samples: Optional[int] = None
    out: Optional[Path] = None
    format: str = "table"
    target: Optional[str] = None
    samples_path: Optional[Path] = None
    substructure: tuple[tuple[str, int], ...] = ()


    def _validate_hook(self) -> None:
        fixed = [sort for sort, _ in self.fixed]
        swept = [sort for sort, _ in self.ranges]
        if len(set(fixed)) != len(fixed) or len(set(swept)) != len(swept):
            raise ConfigurationError("a sort is sized twice")
        both = set(fixed) & set(swept)
        if both:
            raise ConfigurationError(f"sorts {', '.join(sorted(both))} have both a size and a size range")
        for sort, values in self.ranges:
            if not values:
                raise ConfigurationError(f"size range of sort '{sort}' is empty")


    @property
    def is_sweep(self) -> bool:
        return bool(self.ranges)


    def domain_assignments(self, sorts: Iterable[str]) -> list[DomainAssignment]:
        """
        One assignment per combination of swept sizes, over the given sorts.

        Sorts without a size follow the first swept sort, so a single
        `--sizes` moves every sort together.

        Raises:
            ConfigurationError: If a sort has no size and nothing is swept, or a size names
                an undeclared sort
        """
        sorts = list(sorts)
        fixed = dict(self.fixed)
        swept = [sort for sort, _ in self.ranges]
        unknown = [sort for sort in (*fixed, *swept) if sort not in sorts]
        if unknown:
            raise ConfigurationError(f"the model declares no sort {', '.join(unknown)}; it has {', '.join(sorts) or 'none'}")
        assignments = []
        for values in product(*(values for _, values in self.ranges)):
            current = dict(zip(swept, values))
            sizes = []
            for sort in sorts:
                if sort in fixed:
                    sizes.append((sort, fixed[sort]))
                elif sort in current:
                    sizes.append((sort, current[sort]))
                elif values:
                    sizes.append((sort, values[0]))
                else:
                    raise ConfigurationError(f"missing domain size for sort '{sort}'; pass --size {sort}=N")
            assignments.append(DomainAssignment.from_sizes(sizes))
        return assignments


    def domain_assignment(self, sorts: Iterable[str]) -> DomainAssignment:
        if self.is_sweep:
            raise ConfigurationError("this command takes fixed sizes (--size), not ranges (--sizes)")
        return self.domain_assignments(sorts)[0]
