# Built-in
from __future__ import annotations
from itertools import product
from typing import Mapping, Optional, Sequence
import logging
import math

# External
import networkx as nx
import numpy as np
from scipy.special import expit, log_expit, logsumexp

# Internal
from cmn.conf import get_setting
from cmn.errors import ModelDefinitionError
from logic.models import (
    Atom,
    Constant,
    DomainAssignment,
    Element,
    Formula,
    RelationSymbol,
    Signature,
    Top,
    World,
)
from logic.service import LogicService
from mln.models import LogWeightedDistribution
from .models import NodeLabel, RlrModel, Semantics, Violation

logger = logging.getLogger(__name__)


class RlrService:
    """
    Directed semantics of relational logistic regression models.

    A model assigns each ground atom of a node the probability
    sigmoid(sum_i w_i / d_i * c_i) where c_i counts the assignments of the
    summed variables V_i satisfying psi_i and d_i is |D|_{V_i} for
    proportional conditions and 1 for raw ones. Everything below is
    computed on batches of worlds at once.
    """

    @staticmethod
    def validate(model: RlrModel) -> list[Violation]:
        """
        Check every well-formedness rule and report each broken one.

        :param model: Model to check; it may be cyclic or otherwise invalid.
        :return: Violations in node declaration order; empty when the model is valid.
        """
        violations: list[Violation] = []
        declared = {label.relation for label in model.labels}
        for relation in model.signature.relations:
            if relation.name not in declared:
                violations.append(Violation("missing-node", relation.name, "relation symbol has no node"))

        if not model.is_acyclic:
            cycle = nx.find_cycle(model.graph)
            path = " -> ".join([edge[0] for edge in cycle] + [cycle[-1][1]])
            violations.append(Violation("cycle", cycle[0][0], f"dependency cycle {path}"))

        for label in model.labels:
            head = set(label.head_variables)
            for number, condition in enumerate(label.conditions, start=1):
                clash = [v.name for v in condition.variables if v in head]
                if clash:
                    violations.append(Violation(
                        "condition-1", label.relation,
                        f"summed variables {', '.join(clash)} also occur in the head {label.head}", number,
                    ))
                loose = [v.name for v in LogicService.free_variables(condition.formula)
                         if v not in head and v not in condition.variables]
                if loose:
                    violations.append(Violation(
                        "condition-2", label.relation,
                        f"variables {', '.join(loose)} of '{condition.formula}' are neither in the head "
                        f"nor summed over", number,
                    ))

            if label.is_root and not (
                len(label.conditions) <= 1
                and all(isinstance(c.formula, Top) and not c.variables for c in label.conditions)
            ):
                violations.append(Violation(
                    "root", label.relation, "a root node takes a single condition 'w : true' without summed variables",
                ))

            if label.declared_parents is not None and set(label.declared_parents) != set(label.parents):
                violations.append(Violation(
                    "parents", label.relation,
                    f"declared parents {{{', '.join(label.declared_parents)}}} differ from the symbols "
                    f"{{{', '.join(label.parents)}}} used by its conditions",
                ))
        return violations


    @staticmethod
    def ensure_valid(model: RlrModel) -> None:
        violations = RlrService.validate(model)
        if violations:
            raise ModelDefinitionError("; ".join(str(violation) for violation in violations))


    @staticmethod
    def normalize_variable_sets(model: RlrModel, domains: Optional[DomainAssignment] = None) -> RlrModel:
        """
        Drop summed variables that do not occur in their condition's formula.

        Proportional conditions keep their weight. Raw conditions absorb the
        dropped factor, so they need the domain sizes.

        Raises:
            ModelDefinitionError: If a raw condition must be adjusted and `domains` is missing
        """
        labels = []
        for label in model.labels:
            conditions = []
            for condition in label.conditions:
                occurring = set(LogicService.free_variables(condition.formula))
                kept = tuple(v for v in condition.variables if v in occurring)
                dropped = [v for v in condition.variables if v not in occurring]
                weight = condition.weight
                if dropped and not condition.proportional:
                    if domains is None:
                        raise ModelDefinitionError(
                            f"normalizing the raw condition '{condition.formula}' of node {label.relation} "
                            f"needs domain sizes"
                        )
                    weight *= math.prod(domains.size(v.sort) for v in dropped)
                conditions.append(condition.update(variables=kept, weight=weight))
            labels.append(label.update(conditions=tuple(conditions)))
        return model.with_labels(tuple(labels))


    @staticmethod
    def node_features(
        label: NodeLabel,
        tables: Mapping[str, np.ndarray],
        domains: DomainAssignment,
        batch: int,
    ) -> np.ndarray:
        """Scaled condition counts for every head grounding of a batch of worlds.

        Returns:
            Array of shape (batch, *head_shape, len(conditions)); entry i is
            c_i / d_i times the size of the summed variables absent from psi_i
        """
        head = label.head_variables
        head_shape = tuple(domains.size(v.sort) for v in head)
        features = np.zeros((batch,) + head_shape + (len(label.conditions),), dtype=float)
        for position, condition in enumerate(label.conditions):
            occurring = set(LogicService.free_variables(condition.formula))
            head_axes = [v for v in head if v in occurring]
            summed_axes = [v for v in condition.variables if v in occurring]
            absent = math.prod(domains.size(v.sort) for v in condition.variables if v not in occurring)

            values = LogicService.evaluate_tensor(
                condition.formula, tables, domains, head_axes + summed_axes, batch=batch
            )
            counts = values.sum(axis=tuple(range(1 + len(head_axes), values.ndim)), dtype=float)
            counts = counts.reshape((batch,) + tuple(
                domains.size(v.sort) if v in occurring else 1 for v in head
            ))
            features[..., position] = counts * (absent / condition.divisor(domains))
        return features


    @staticmethod
    def node_logits(
        label: NodeLabel,
        tables: Mapping[str, np.ndarray],
        domains: DomainAssignment,
        batch: int,
    ) -> np.ndarray:
        weights = np.array([condition.weight for condition in label.conditions], dtype=float)
        return RlrService.node_features(label, tables, domains, batch) @ weights


    @staticmethod
    def log_probabilities(
        model: RlrModel,
        tables: Mapping[str, np.ndarray],
        domains: DomainAssignment,
        batch: int,
    ) -> np.ndarray:
        """Log-probability of each world in a batch, summed node by node in evaluation order."""

        total = np.zeros(batch, dtype=float)
        for label in model.order:
            logits = RlrService.node_logits(label, tables, domains, batch)
            truth = tables[label.relation]
            contribution = np.where(truth, log_expit(logits), log_expit(-logits))
            total += contribution.reshape(batch, -1).sum(axis=1)
        return total


    @staticmethod
    def conditional_probability(
        model: RlrModel,
        relation: str,
        elements: Sequence[Element],
        world: World,
    ) -> float:
        """
        P(relation(elements) | parents) in `world`.

        :param model: Model holding the node's label.
        :param relation: Head relation symbol.
        :param elements: Head grounding, one element per argument.
        :param world: Interprets at least the node's parents.
        :return: Probability strictly between 0 and 1.
        """
        label = model.label(relation)
        if len(elements) != len(label.head_variables):
            raise ModelDefinitionError(f"node {label.head} takes {len(label.head_variables)} elements")
        for parent in label.parents:
            if parent not in world.tables:
                raise ModelDefinitionError(f"world does not interpret parent '{parent}' of node {relation}")
        logits = RlrService.node_logits(label, world.batched(), world.domains, batch=1)[0]
        index = tuple(world.domains.index(element) for element in elements)
        return float(expit(logits[index]))


    @staticmethod
    def world_log_probability(model: RlrModel, world: World) -> float:
        return float(RlrService.log_probabilities(model, world.batched(), world.domains, batch=1)[0])


    @staticmethod
    def world_probability(model: RlrModel, world: World) -> float:
        """Product over all ground head atoms of the probability of their value in `world`."""
        return math.exp(RlrService.world_log_probability(model, world))


    @staticmethod
    def distribution(
        model: RlrModel,
        domains: DomainAssignment,
        cap: Optional[int] = None,
    ) -> LogWeightedDistribution:
        """Log-probabilities of all worlds, by exhaustive enumeration."""

        RlrService.ensure_valid(model)
        index = LogicService.ground_atom_index(model.signature, domains, cap)
        log_weights = np.empty(index.world_count, dtype=float)
        for numbers in LogicService.iter_world_batches(index):
            tables = index.tables_for(numbers)
            log_weights[numbers] = RlrService.log_probabilities(model, tables, domains, len(numbers))
        log_partition = float(logsumexp(log_weights))
        logger.info(f"Enumerated {index.world_count} worlds of the RLR model over {domains}")
        return LogWeightedDistribution(index, log_weights, log_partition)


    @staticmethod
    def query_probability(
        model: RlrModel,
        domains: DomainAssignment,
        query: Formula,
        evidence: Optional[Formula] = None,
    ) -> float:
        """
        Exact P(query | evidence) by summing world probabilities.

        Raises:
            StateSpaceError: If enumeration exceeds the ground-atom cap
            ConditioningError: If the evidence has probability zero
        """
        return RlrService.distribution(model, domains).conditional(query, evidence)


    @staticmethod
    def convert(model: RlrModel, domains: DomainAssignment, target: Semantics) -> RlrModel:
        """
        Rewrite the model into unscaled or domain-aware form for fixed domains.

        Going to domain-aware multiplies the weight of each raw condition by
        |D|_V; going to unscaled divides the weight of each proportional
        condition by it. Both forms define the same distribution on `domains`.
        """
        if target is Semantics.MIXED:
            raise ModelDefinitionError("conversion targets are 'da' and 'unscaled'")
        proportional = target is Semantics.DOMAIN_AWARE
        labels = []
        for label in model.labels:
            conditions = []
            for condition in label.conditions:
                size = condition.assignments(domains)
                weight = condition.weight
                if condition.proportional and not proportional:
                    weight /= size
                elif not condition.proportional and proportional:
                    weight *= size
                conditions.append(condition.update(weight=weight, proportional=proportional))
            labels.append(label.update(conditions=tuple(conditions)))
        logger.info(f"Converted RLR model to {target.value} semantics over {domains}")
        return model.with_labels(tuple(labels))


    @staticmethod
    def fresh_constants(sorts: Sequence[str], taken: Sequence[str] = ()) -> tuple[Constant, ...]:
        """Constants a1, a2, ... from the reserved pool, skipping names in `taken`."""

        prefix = get_setting("CONSTANT_POOL_PREFIX")
        used = set(taken)
        constants = []
        counter = 1
        for sort in sorts:
            while f"{prefix}{counter}" in used:
                counter += 1
            name = f"{prefix}{counter}"
            used.add(name)
            constants.append(Constant(name, sort))
        return tuple(constants)


    @staticmethod
    def generic_extension(model: RlrModel, sorts: Sequence[str]) -> RlrModel:
        """Extension by one fresh constant per entry of `sorts`."""

        taken = [relation.name for relation in model.signature.relations]
        return RlrService.extend_by_constants(model, RlrService.fresh_constants(sorts, taken))


    @staticmethod
    def instantiate_atom(atom: Atom) -> Atom:
        """R(c, x) -> R_c_(x); atoms without constants are returned unchanged."""

        if not any(isinstance(term, Constant) for term in atom.terms):
            return atom
        slots = [term.name if isinstance(term, Constant) else None for term in atom.terms]
        kept = tuple(term for term in atom.terms if not isinstance(term, Constant))
        return Atom(LogicService.instantiated_symbol(atom.relation, slots), kept)


    @staticmethod
    def extend_by_constants(model: RlrModel, constants: Sequence[Constant]) -> RlrModel:
        """
        Generic extension: one new symbol per relation and sort-matching
        placement of constants into its argument slots.

        Labels of new symbols are the original labels with the constants
        substituted for head variables; every atom over constants is then
        replaced by its instantiated symbol. Constants never enter a domain.

        Raises:
            ModelDefinitionError: If a constant's sort is undeclared or a generated name clashes
        """
        if not constants:
            return model
        signature = model.signature
        for constant in constants:
            if constant.sort not in signature.sorts:
                raise ModelDefinitionError(f"constant '{constant.name}' has undeclared sort '{constant.sort}'")

        rewrite = lambda formula: formula.map_atoms(RlrService.instantiate_atom)  # noqa: E731
        labels_by_relation = {label.relation: label for label in model.labels}
        new_relations: list[RelationSymbol] = []
        new_labels: list[NodeLabel] = []
        names = set(relation.name for relation in signature.relations)

        for relation in signature.relations:
            options = [[None] + [c for c in constants if c.sort == sort] for sort in relation.sorts]
            for placement in product(*options):
                if all(slot is None for slot in placement):
                    continue
                name = LogicService.instantiated_symbol(relation.name, [c.name if c else None for c in placement])
                if name in names:
                    raise ModelDefinitionError(f"generated symbol '{name}' clashes with an existing symbol")
                names.add(name)
                new_relations.append(RelationSymbol(
                    name, tuple(sort for sort, slot in zip(relation.sorts, placement) if slot is None)
                ))
                label = labels_by_relation.get(relation.name)
                if label is None:
                    continue
                mapping = {v: c for v, c in zip(label.head_variables, placement) if c is not None}
                head = Atom(name, tuple(v for v, c in zip(label.head_variables, placement) if c is None))
                conditions = tuple(
                    condition.update(formula=rewrite(condition.formula.substitute(mapping)))
                    for condition in label.conditions
                )
                new_labels.append(NodeLabel(head, conditions))

        labels = []
        for label in model.labels:
            conditions = tuple(condition.update(formula=rewrite(condition.formula)) for condition in label.conditions)
            rewritten = label.update(conditions=conditions)
            if rewritten.parents != label.parents:
                rewritten = rewritten.update(declared_parents=None)
            labels.append(rewritten)

        extended = Signature(signature.sorts, signature.relations + tuple(new_relations), ())
        logger.debug(
            f"Extended by constants {', '.join(c.name for c in constants)}: {len(new_relations)} new symbols"
        )
        return RlrModel(extended, tuple(labels + new_labels))


    @staticmethod
    def projectivity_gap(model: RlrModel, small: DomainAssignment, large: DomainAssignment) -> float:
        """
        Largest difference between P_small(X) and the marginal of P_large on
        the embedded sub-domain, over every world X of the small domains.

        Elements e1..e_m of each sort form the embedded sub-domain.
        """
        for sort, size in small.sizes:
            if size > large.size(sort):
                raise ModelDefinitionError(f"sub-domain of sort '{sort}' is larger than the domain it embeds in")

        small_distribution = RlrService.distribution(model, small)
        large_distribution = RlrService.distribution(model, large)
        small_index, large_index = small_distribution.index, large_distribution.index

        marginal = np.zeros(small_index.world_count, dtype=float)
        for numbers in LogicService.iter_world_batches(large_index):
            tables = large_index.tables_for(numbers)
            restricted = {}
            for relation in model.signature.relations:
                window = tuple(slice(0, small.size(sort)) for sort in relation.sorts)
                restricted[relation.name] = tables[relation.name][(slice(None),) + window]
            probabilities = np.exp(large_distribution.log_weights[numbers] - large_distribution.log_partition)
            marginal += np.bincount(
                small_index.numbers_for(restricted), weights=probabilities, minlength=small_index.world_count
            )

        gap = float(np.max(np.abs(marginal - small_distribution.probabilities())))
        logger.info(f"Projectivity gap between {small} and {large}: {gap:.3g}")
        return gap
