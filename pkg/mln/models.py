from __future__ import annotations

# External
import numpy as np
from scipy.special import logsumexp

# Internal
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Sequence
import math

from cmn.base_model import BaseModel
from cmn.errors import ConditioningError, ModelDefinitionError
from logic.models import And, Atom, Constant, DomainAssignment, Element, Formula, GroundAtomIndex, Signature, World
from logic.service import LogicService


class Scaling(str, Enum):
    NONE = "none"
    DOMAIN_AWARE = "da"


class Aggregator(str, Enum):
    """How a connection vector is reduced to one scaling factor."""

    MAX = "max"
    SUM = "sum"
    GEOMEAN = "geomean"
    MEAN = "mean"


@dataclass(frozen=True)
class WeightedFormula(BaseModel):
    formula: Formula
    weight: float


    def _validate_hook(self) -> None:
        if not math.isfinite(self.weight):
            raise ModelDefinitionError(f"weight of '{self.formula}' must be finite, got {self.weight}")


@dataclass(frozen=True)
class MlnModel(BaseModel):
    """Weighted formulas over a signature, optionally with domain-aware scaling."""

    signature: Signature
    formulas: tuple[WeightedFormula, ...] = ()
    scaling: Scaling = Scaling.NONE
    aggregator: Aggregator = Aggregator.MAX


    def _validate_hook(self) -> None:
        for weighted in self.formulas:
            LogicService.check_well_sorted(weighted.formula, self.signature)
            for atom in weighted.formula.atoms():
                if any(isinstance(term, (Constant, Element)) for term in atom.terms):
                    raise ModelDefinitionError(f"model formulas may only contain variables, found {atom}")


    @property
    def is_domain_aware(self) -> bool:
        return self.scaling is Scaling.DOMAIN_AWARE


    def permuted(self, order: Sequence[int]) -> MlnModel:
        return self.update(formulas=tuple(self.formulas[i] for i in order))


@dataclass(frozen=True)
class ConnectionVector:
    """Per literal (atom occurrence, left to right), how many groundings it can touch."""

    literals: tuple[Atom, ...]
    entries: tuple[int, ...]


class LogWeightedDistribution:
    """Log-weights of every world, indexed by world number, plus the log-partition value."""

    def __init__(self, index: GroundAtomIndex, log_weights: np.ndarray, log_partition: float) -> None:
        weights = np.asarray(log_weights, dtype=float).copy()
        weights.flags.writeable = False
        self.index = index
        self.log_weights = weights
        self.log_partition = float(log_partition)


    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_partition)


    def log_weight(self, world: World) -> float:
        return float(self.log_weights[self.index.number(world)])


    def probability(self, world: World) -> float:
        return float(np.exp(self.log_weight(world) - self.log_partition))


    def log_mass(self, formula: Formula) -> float:
        """Log of the summed weights of the worlds where the ground `formula` holds."""

        partials = []
        for numbers in LogicService.iter_world_batches(self.index):
            tables = self.index.tables_for(numbers)
            holds = LogicService.evaluate_tensor(formula, tables, self.index.domains, batch=len(numbers))
            if holds.any():
                partials.append(logsumexp(self.log_weights[numbers][holds]))
        return float(logsumexp(partials)) if partials else -math.inf


    def conditional(self, query: Formula, evidence: Optional[Formula] = None) -> float:
        """
        P(query | evidence) for ground formulas.

        Raises:
            ConditioningError: If the evidence has probability zero
        """
        if evidence is None:
            log_evidence = self.log_partition
            joint = query
        else:
            log_evidence = self.log_mass(evidence)
            joint = And(query, evidence)
        if log_evidence == -math.inf:
            raise ConditioningError(f"evidence '{evidence}' has probability zero")
        return min(1.0, math.exp(self.log_mass(joint) - log_evidence))


    def marginal(self, formula: Formula) -> float:
        return self.conditional(formula)


    def items(self) -> Iterator[tuple[World, float]]:
        """(world, log-weight) pairs in enumeration order."""
        for number, log_weight in enumerate(self.log_weights):
            yield self.index.world(number), float(log_weight)


    def __len__(self) -> int:
        return len(self.log_weights)


@dataclass(frozen=True)
class SweepRow:
    domains: DomainAssignment
    probability: float

    @property
    def n(self) -> int:
        """Largest domain size of the row; the swept size when all sorts move together."""
        return max(size for _, size in self.domains.sizes)
