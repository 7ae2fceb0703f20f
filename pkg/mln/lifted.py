"""
Lifted evaluation for MLNs whose groundings nest along one chain of variables.

The evaluator accepts models where, after renaming, every formula mentions
variables x1..xD of a global chain and every atom's argument list is a
prefix x1..xd of it. Fixing the propositions, the ground atoms then form a
tree: level d holds one atom per relation of arity d for every tuple
(a1..ad), and each grounding of a formula lives on one root-to-leaf path.
The partition function is a product of per-block sums that only depend on
the atom values along the path above, so it is computed level by level in
log-space, independent of the domain sizes. Both {P -> R(x)} and
{P & Q(x) & R(x,y)} have this shape.
"""

# Built-in
from __future__ import annotations
from functools import cached_property
from itertools import product
from typing import Optional
import logging
import math

# External
from scipy.special import logsumexp

# Internal
from cmn.errors import NotFactorizableError
from logic.models import Atom, Bottom, DomainAssignment, Formula, Top, Variable
from logic.service import LogicService
from .models import MlnModel
from .service import MlnService

logger = logging.getLogger(__name__)


class FactorizedEvaluator:
    """Exact marginals of single ground atoms for chain-shaped models."""

    def __init__(self, model: MlnModel) -> None:
        self.model = model
        self.chain_sorts: list[str] = []
        self.formulas: list[tuple[Formula, int]] = []
        self._layout()


    def _layout(self) -> None:
        """Rename every formula onto the global chain, or raise NotFactorizableError."""

        for weighted in self.model.formulas:
            atoms = list(weighted.formula.atoms())
            longest: tuple = max((atom.terms for atom in atoms), key=len, default=())
            for atom in atoms:
                if len(set(atom.terms)) != len(atom.terms):
                    raise NotFactorizableError(f"model is not block-factorizable: {atom} repeats a variable")
                if atom.terms != longest[:len(atom.terms)]:
                    raise NotFactorizableError(
                        f"model is not block-factorizable: arguments of {atom} are not a prefix of "
                        f"({', '.join(map(str, longest))}) in '{weighted.formula}'"
                    )
            for depth, variable in enumerate(longest):
                if depth < len(self.chain_sorts):
                    if self.chain_sorts[depth] != variable.sort:
                        raise NotFactorizableError(
                            f"model is not block-factorizable: level {depth + 1} mixes sorts "
                            f"'{self.chain_sorts[depth]}' and '{variable.sort}'"
                        )
                else:
                    self.chain_sorts.append(variable.sort)
            mapping = {variable: self.chain_variable(depth) for depth, variable in enumerate(longest)}
            self.formulas.append((weighted.formula.substitute(mapping), len(longest)))


    def chain_variable(self, depth: int) -> Variable:
        return Variable(f"_{depth + 1}", self.chain_sorts[depth])


    @cached_property
    def levels(self) -> list[list[Atom]]:
        """Chain atoms per level; level 0 holds the propositions."""

        levels: list[list[Atom]] = [[] for _ in range(len(self.chain_sorts) + 1)]
        used = {name for formula, _ in self.formulas for name in formula.relations()}
        for relation in self.model.signature.relations:
            if relation.name in used:
                terms = tuple(self.chain_variable(depth) for depth in range(relation.arity))
                levels[relation.arity].append(Atom(relation.name, terms))
        return levels


    def probability(self, domains: DomainAssignment, query: Formula) -> float:
        """
        Marginal probability of one ground atom or proposition.

        Args:
            domains: Domain sizes per sort
            query: A ground atom, or true / false

        Returns:
            The exact probability; 0.5 for symbols no formula mentions

        Raises:
            NotFactorizableError: If the query is not a single ground atom
        """
        if isinstance(query, Top):
            return 1.0
        if isinstance(query, Bottom):
            return 0.0
        if not isinstance(query, Atom) or not query.is_ground:
            raise NotFactorizableError(f"the factorized engine answers single ground atoms, got '{query}'")
        relation = self.model.signature.relation(query.relation)
        for term in query.terms:
            domains.index(term)  # type: ignore[arg-type]
        if relation.name not in {atom.relation for level in self.levels for atom in level}:
            return 0.5

        weights = MlnService.effective_weights(self.model, domains)
        run = _Run(self, domains, weights)
        log_partition = run.top()
        log_marked = run.top(marked=relation.name, marked_depth=relation.arity)
        value = float(min(1.0, max(0.0, math.exp(log_marked - log_partition))))
        logger.debug(f"Factorized P({query}) over {domains} = {value!r}")
        return value


class _Run:
    """One evaluation at fixed domain sizes, memoizing per-level sums."""

    def __init__(self, evaluator: FactorizedEvaluator, domains: DomainAssignment, weights: list[float]) -> None:
        self.evaluator = evaluator
        self.levels = evaluator.levels
        self.depth = len(self.levels) - 1
        self.sizes = [domains.size(sort) for sort in evaluator.chain_sorts]
        self.by_depth: list[list[tuple[Formula, float]]] = [[] for _ in range(self.depth + 1)]
        for (formula, depth), weight in zip(evaluator.formulas, weights):
            if weight:
                self.by_depth[depth].append((formula, weight))
        self._memo: dict[tuple, float] = {}


    def configurations(self, depth: int, valuation: dict[Atom, bool], marked: Optional[str] = None):
        atoms = self.levels[depth]
        for values in product((False, True), repeat=len(atoms)):
            extended = dict(valuation)
            extended.update(zip(atoms, values))
            if marked is not None and not any(a.relation == marked and v for a, v in zip(atoms, values)):
                continue
            score = sum(
                weight for formula, weight in self.by_depth[depth] if LogicService.truth_value(formula, extended)
            )
            yield extended, score


    def level(self, depth: int, valuation: dict[Atom, bool]) -> float:
        """Log of the sum over one block at `depth`, given the atom values above it."""

        key = (depth, frozenset(valuation.items()))
        if key not in self._memo:
            terms = []
            for extended, score in self.configurations(depth, valuation):
                if depth < self.depth:
                    score += self.sizes[depth] * self.level(depth + 1, extended)
                terms.append(score)
            self._memo[key] = float(logsumexp(terms))
        return self._memo[key]


    def marked_level(self, depth: int, valuation: dict[Atom, bool], marked: str, marked_depth: int) -> float:
        """Like `level`, for the one block on the path of the queried atom."""

        terms = []
        restrict = marked if depth == marked_depth else None
        for extended, score in self.configurations(depth, valuation, restrict):
            if depth < marked_depth:
                score += (self.sizes[depth] - 1) * self.level(depth + 1, extended)
                score += self.marked_level(depth + 1, extended, marked, marked_depth)
            elif depth < self.depth:
                score += self.sizes[depth] * self.level(depth + 1, extended)
            terms.append(score)
        return float(logsumexp(terms)) if terms else float("-inf")


    def top(self, marked: Optional[str] = None, marked_depth: int = 0) -> float:
        """Log-partition over all worlds, or over those where the marked atom holds."""

        if marked is None or marked_depth == 0:
            terms = []
            for extended, score in self.configurations(0, {}, marked):
                if self.depth > 0:
                    score += self.sizes[0] * self.level(1, extended)
                terms.append(score)
            return float(logsumexp(terms)) if terms else float("-inf")
        terms = []
        for extended, score in self.configurations(0, {}):
            score += (self.sizes[0] - 1) * self.level(1, extended)
            score += self.marked_level(1, extended, marked, marked_depth)
            terms.append(score)
        return float(logsumexp(terms))
