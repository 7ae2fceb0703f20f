from __future__ import annotations

# External
import networkx as nx
import numpy as np

# Internal
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional
import math

from cmn.base_model import BaseModel
from cmn.errors import ModelDefinitionError
from logic.models import Atom, DomainAssignment, Formula, Signature, Variable, World
from logic.service import LogicService


class Semantics(str, Enum):
    UNSCALED = "unscaled"
    DOMAIN_AWARE = "da"
    MIXED = "mixed"


@dataclass(frozen=True)
class Condition(BaseModel):
    """One weighted formula of a node label.

    `variables` are summed over; a proportional condition divides its
    count by the number of assignments of `variables`, a raw one does not.
    """

    formula: Formula
    weight: float
    variables: tuple[Variable, ...] = ()
    proportional: bool = True


    def _validate_hook(self) -> None:
        if not math.isfinite(self.weight):
            raise ModelDefinitionError(f"weight of '{self.formula}' must be finite, got {self.weight}")
        if len(set(self.variables)) != len(self.variables):
            raise ModelDefinitionError(f"repeated variable in the variable set of '{self.formula}'")


    def assignments(self, domains: DomainAssignment) -> int:
        """|D|_V: number of assignments of the summed variables."""
        return math.prod(domains.size(variable.sort) for variable in self.variables)


    def divisor(self, domains: DomainAssignment) -> float:
        return float(self.assignments(domains)) if self.proportional else 1.0


    @property
    def is_scaled(self) -> bool:
        """Whether the proportional flag changes anything (it does not when V is empty)."""
        return self.proportional and bool(self.variables)


@dataclass(frozen=True)
class NodeLabel(BaseModel):
    head: Atom
    conditions: tuple[Condition, ...] = ()
    declared_parents: Optional[tuple[str, ...]] = None


    def _validate_hook(self) -> None:
        if not all(isinstance(term, Variable) for term in self.head.terms):
            raise ModelDefinitionError(f"node head {self.head} must list variables only")
        if len(set(self.head.terms)) != len(self.head.terms):
            raise ModelDefinitionError(f"node head {self.head} repeats a variable")


    @property
    def relation(self) -> str:
        return self.head.relation


    @property
    def head_variables(self) -> tuple[Variable, ...]:
        return self.head.terms  # type: ignore[return-value]


    @property
    def parents(self) -> list[str]:
        """Relation symbols occurring in the conditions, first occurrence first."""
        seen: dict[str, None] = {}
        for condition in self.conditions:
            for name in condition.formula.relations():
                seen.setdefault(name, None)
        return list(seen)


    @property
    def is_root(self) -> bool:
        return not self.parents


@dataclass(frozen=True)
class RlrModel(BaseModel):
    """Labelled DAG over the relation symbols of a signature."""

    signature: Signature
    labels: tuple[NodeLabel, ...] = ()


    def _validate_hook(self) -> None:
        for label in self.labels:
            relation = self.signature.relation(label.relation)
            if len(label.head.terms) != relation.arity:
                raise ModelDefinitionError(f"node head {label.head} does not match arity {relation.arity}")
            LogicService.check_well_sorted(label.head, self.signature)
            for condition in label.conditions:
                LogicService.check_well_sorted(condition.formula, self.signature)


    @cached_property
    def _by_relation(self) -> dict[str, NodeLabel]:
        labels: dict[str, NodeLabel] = {}
        for label in self.labels:
            labels.setdefault(label.relation, label)
        return labels


    def label(self, relation: str) -> NodeLabel:
        try:
            return self._by_relation[relation]
        except KeyError:
            raise ModelDefinitionError(f"no node for relation '{relation}'") from None


    @cached_property
    def graph(self) -> nx.DiGraph:
        """Edge parent -> child for every symbol occurring in a child's conditions."""
        graph = nx.DiGraph()
        graph.add_nodes_from(relation.name for relation in self.signature.relations)
        for label in self.labels:
            for parent in label.parents:
                graph.add_edge(parent, label.relation)
        return graph


    @property
    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self.graph)


    @cached_property
    def indices(self) -> dict[str, int]:
        """Length of the longest path from a root to each symbol."""
        if not self.is_acyclic:
            raise ModelDefinitionError(f"dependency graph has a cycle: {nx.find_cycle(self.graph)}")
        indices: dict[str, int] = {}
        for node in nx.topological_sort(self.graph):
            indices[node] = max((indices[parent] + 1 for parent in self.graph.predecessors(node)), default=0)
        return indices


    def index(self, relation: str) -> int:
        return self.indices[relation]


    def formula_index(self, formula: Formula) -> int:
        """Largest index of a symbol in `formula`; 0 for formulas without symbols."""
        return max((self.indices[name] for name in formula.relations()), default=0)


    @cached_property
    def order(self) -> tuple[NodeLabel, ...]:
        """Labels by index, ties broken by declaration order of the symbol."""
        return tuple(sorted(
            self.labels,
            key=lambda label: (self.indices[label.relation], self.signature.position(label.relation)),
        ))


    @property
    def semantics(self) -> Semantics:
        scaled = [condition.proportional for label in self.labels for condition in label.conditions
                  if condition.variables]
        if all(scaled):
            return Semantics.DOMAIN_AWARE
        if not any(scaled):
            return Semantics.UNSCALED
        return Semantics.MIXED


    @property
    def propositions(self) -> list[str]:
        """Proposition symbols in evaluation order."""
        return [label.relation for label in self.order if not label.head.terms]


    def with_labels(self, labels: tuple[NodeLabel, ...], signature: Optional[Signature] = None) -> RlrModel:
        return RlrModel(signature or self.signature, labels)


@dataclass(frozen=True)
class Violation:
    """One broken well-formedness rule, located by node and 1-based condition number."""

    kind: str
    node: str
    message: str
    condition: Optional[int] = None

    def __str__(self) -> str:
        where = f"node {self.node}" + (f", condition {self.condition}" if self.condition is not None else "")
        return f"{self.kind}: {where}: {self.message}"


@dataclass(frozen=True)
class SampleBatch(BaseModel):
    """Worlds drawn from one model, with the seed and domain sizes that produced them."""

    signature: Signature
    domains: DomainAssignment
    worlds: tuple[World, ...] = ()
    seed: Optional[int] = None


    def _validate_hook(self) -> None:
        for position, world in enumerate(self.worlds):
            if world.signature != self.signature or world.domains != self.domains:
                raise ModelDefinitionError(f"world {position} does not share the batch signature and domains")


    def __len__(self) -> int:
        return len(self.worlds)


    def stacked(self, start: int = 0, stop: Optional[int] = None) -> dict[str, np.ndarray]:
        """Tables of worlds `start:stop` with a leading batch axis."""
        worlds = self.worlds[start:stop]
        return {
            relation.name: np.stack([world.tables[relation.name] for world in worlds])
            for relation in self.signature.relations
        }


@dataclass(frozen=True)
class NodeFit:
    """Outcome of fitting the weights of one node."""

    relation: str
    weights: tuple[float, ...]
    iterations: int
    gradient_norm: float
    converged: bool
    clamped: bool
    rows: int
