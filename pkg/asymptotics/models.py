from __future__ import annotations

# Internal
from dataclasses import dataclass, field
from typing import Mapping, Optional

from cmn.base_model import BaseModel
from cmn.errors import ModelDefinitionError
from logic.models import Atom, DomainAssignment


@dataclass(frozen=True)
class PropositionValuation(BaseModel):
    """Truth values of propositions, in evaluation order.

    `bound` is the index up to which the valuation is complete; -1 when
    nothing is assigned.
    """

    values: tuple[tuple[str, bool], ...] = ()
    bound: int = -1


    def _validate_hook(self) -> None:
        names = [name for name, _ in self.values]
        if len(set(names)) != len(names):
            raise ModelDefinitionError("a proposition is assigned twice")


    @classmethod
    def from_mapping(cls, values: Mapping[str, bool], bound: int = -1) -> PropositionValuation:
        return cls(tuple((name, bool(value)) for name, value in values.items()), bound)


    def as_atoms(self) -> dict[Atom, bool]:
        return {Atom(name, ()): value for name, value in self.values}


    def __str__(self) -> str:
        if not self.values:
            return "-"
        return " ".join(name if value else f"!{name}" for name, value in self.values)


@dataclass(frozen=True)
class ProportionRow:
    formula: str
    valuation: PropositionValuation
    proportion: Optional[float]


@dataclass(frozen=True)
class AsymptoticResult:
    """Limit of a query plus everything the computation went through."""

    query: str
    evidence: Optional[str]
    value: float
    distribution: tuple[tuple[PropositionValuation, float], ...]
    proportions: tuple[ProportionRow, ...] = ()
    provenance: Mapping[str, object] = field(default_factory=dict)
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class LimitCheckRow:
    """Sampled estimate of a query at one domain size next to its limit."""

    domains: DomainAssignment
    empirical: float
    asymptotic: float
    tolerance: float
    samples: int

    @property
    def n(self) -> int:
        return max(size for _, size in self.domains.sizes)

    @property
    def gap(self) -> float:
        return abs(self.empirical - self.asymptotic)
