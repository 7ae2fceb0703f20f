# Built-in
from __future__ import annotations
from typing import TYPE_CHECKING, Iterator, Mapping, Optional, Sequence
import logging

# External
import numpy as np

# Internal
from cmn.conf import get_setting
from cmn.errors import (
    MissingInterpretationError,
    ModelDefinitionError,
    StateSpaceError,
    UnboundVariableError,
)
from .models import (
    And,
    Atom,
    Bottom,
    Constant,
    DomainAssignment,
    Element,
    Formula,
    GroundAtomIndex,
    Implies,
    Not,
    Or,
    Signature,
    Top,
    Variable,
    World,
)

if TYPE_CHECKING:
    from .models import GroundingMap, Term

logger = logging.getLogger(__name__)


class LogicService:
    """
    Grounding, evaluation, counting and enumeration over finite structures.

    Evaluation is vectorized: a formula is evaluated on a batch of worlds
    (tables carrying a leading batch axis) for every assignment of a chosen
    list of variables at once, giving a boolean array of shape
    (batch, |D_v1|, ..., |D_vk|).
    """

    @staticmethod
    def free_variables(formula: Formula) -> list[Variable]:
        """
        Free variables in first-occurrence order, left to right.

        :param formula: Any formula.
        :return: Distinct variables; each carries its sort.
        """
        seen: dict[Variable, None] = {}
        for atom in formula.atoms():
            for term in atom.terms:
                if isinstance(term, Variable):
                    seen.setdefault(term, None)
        return list(seen)


    @staticmethod
    def constants(formula: Formula) -> list[Constant]:
        seen: dict[Constant, None] = {}
        for atom in formula.atoms():
            for term in atom.terms:
                if isinstance(term, Constant):
                    seen.setdefault(term, None)
        return list(seen)


    @staticmethod
    def check_well_sorted(formula: Formula, signature: Signature) -> None:
        """Raise unless every atom matches its relation's arity and sorts."""

        for atom in formula.atoms():
            relation = signature.relation(atom.relation)
            if len(atom.terms) != relation.arity:
                raise ModelDefinitionError(
                    f"'{atom.relation}' expects {relation.arity} arguments, got {len(atom.terms)} in {atom}"
                )
            for position, (term, sort) in enumerate(zip(atom.terms, relation.sorts)):
                if term.sort != sort:
                    raise ModelDefinitionError(
                        f"sort mismatch in {atom}: argument {position + 1} is '{term}' of sort "
                        f"'{term.sort}', expected '{sort}'"
                    )


    @staticmethod
    def evaluate_tensor(
        formula: Formula,
        tables: Mapping[str, np.ndarray],
        domains: DomainAssignment,
        axes: Sequence[Variable] = (),
        grounding: Optional[GroundingMap] = None,
        batch: Optional[int] = None,
    ) -> np.ndarray:
        """Evaluate `formula` on a batch of worlds for all assignments of `axes`.

        Args:
            formula: Formula whose variables are either in `axes` or bound by `grounding`
            tables: Relation name -> boolean array with a leading batch axis
            domains: Domain sizes used for the variable axes
            axes: Variables spanned by the result, in order
            grounding: Fixed elements for the remaining variables
            batch: Batch length, needed only when `tables` is empty

        Returns:
            Boolean array of shape (batch, |D_axis1|, ..., |D_axisk|)

        Raises:
            UnboundVariableError: If a variable is neither an axis nor grounded
            MissingInterpretationError: If a relation has no table
        """
        if batch is None:
            batch = next(iter(tables.values())).shape[0] if tables else 1
        shape = (batch,) + tuple(domains.size(variable.sort) for variable in axes)
        axis_of = {variable: position + 1 for position, variable in enumerate(axes)}
        bound = grounding or {}
        batch_index = np.arange(batch).reshape((batch,) + (1,) * len(axes))

        def index_for(term: Term) -> np.ndarray | int:
            if isinstance(term, Variable):
                if term in axis_of:
                    axis = axis_of[term]
                    reshape = [1] * len(shape)
                    reshape[axis] = shape[axis]
                    return np.arange(shape[axis]).reshape(reshape)
                if term in bound:
                    return domains.index(bound[term])
                raise UnboundVariableError(f"variable '{term}' is not bound")
            if isinstance(term, Element):
                return domains.index(term)
            raise ModelDefinitionError(f"constant '{term}' must be compiled away before evaluation")

        def walk(node: Formula) -> np.ndarray:
            match node:
                case Top():
                    return np.ones(shape, dtype=bool)
                case Bottom():
                    return np.zeros(shape, dtype=bool)
                case Atom(relation=relation, terms=terms):
                    if relation not in tables:
                        raise MissingInterpretationError(f"no interpretation for '{relation}'")
                    table = tables[relation]
                    value = table[(batch_index, *(index_for(term) for term in terms))]
                    return np.broadcast_to(value, shape)
                case Not(operand=operand):
                    return ~walk(operand)
                case And(left=left, right=right):
                    return walk(left) & walk(right)
                case Or(left=left, right=right):
                    return walk(left) | walk(right)
                case Implies(left=left, right=right):
                    return ~walk(left) | walk(right)
            raise TypeError(f"not a formula: {node!r}")

        return walk(formula)


    @staticmethod
    def holds(world: World, formula: Formula, grounding: Optional[GroundingMap] = None) -> bool:
        """
        Truth of `formula` in `world` under `grounding`.

        :param world: Structure to evaluate in.
        :param formula: Formula whose free variables are all bound by `grounding`.
        :param grounding: Variable -> element map.
        :return: Truth value.
        """
        values = LogicService.evaluate_tensor(formula, world.batched(), world.domains, (), grounding, batch=1)
        return bool(values[0])


    @staticmethod
    def count_true_groundings(world: World, formula: Formula, variables: Optional[Sequence[Variable]] = None) -> int:
        """Number of sort-respecting groundings under which `formula` holds.

        `variables` defaults to the free variables of the formula; passing a
        superset counts groundings of variables the formula does not mention.
        """
        counts = LogicService.count_batch(formula, world.batched(), world.domains, batch=1, variables=variables)
        return int(counts[0])


    @staticmethod
    def count_batch(
        formula: Formula,
        tables: Mapping[str, np.ndarray],
        domains: DomainAssignment,
        batch: Optional[int] = None,
        variables: Optional[Sequence[Variable]] = None,
    ) -> np.ndarray:
        """True-grounding counts for every world of a batch."""

        if variables is None:
            variables = LogicService.free_variables(formula)
        values = LogicService.evaluate_tensor(formula, tables, domains, variables, batch=batch)
        return values.reshape(values.shape[0], -1).sum(axis=1, dtype=np.int64)


    @staticmethod
    def ground_atom_index(
        signature: Signature,
        domains: DomainAssignment,
        cap: Optional[int] = None,
    ) -> GroundAtomIndex:
        """Fixed ground-atom ordering, refusing state spaces above the cap."""

        index = GroundAtomIndex(signature, domains)
        limit = get_setting("WORLD_ATOM_CAP") if cap is None else cap
        if index.count > limit:
            raise StateSpaceError(
                f"state space too large: {index.count} ground atoms (2^{index.count} worlds) "
                f"exceed the cap of {limit}"
            )
        return index


    @staticmethod
    def enumerate_worlds(
        signature: Signature,
        domains: DomainAssignment,
        cap: Optional[int] = None,
    ) -> Iterator[World]:
        """
        Every world over `signature` and `domains`, once each.

        World number k makes true exactly the atoms whose bits are set in k,
        so the order is lexicographic over the ground-atom ordering.
        """
        index = LogicService.ground_atom_index(signature, domains, cap)
        logger.debug(f"Enumerating {index.world_count} worlds over {domains}")
        for number in range(index.world_count):
            yield index.world(number)


    @staticmethod
    def iter_world_batches(index: GroundAtomIndex, batch_size: Optional[int] = None) -> Iterator[np.ndarray]:
        """World numbers in consecutive blocks, for vectorized evaluation."""

        size = batch_size or get_setting("BATCH_SIZE")
        total = index.world_count
        for start in range(0, total, size):
            yield np.arange(start, min(total, start + size), dtype=np.int64)


    @staticmethod
    def reduct(world: World, subsignature: Signature) -> World:
        """Drop the interpretations of symbols outside `subsignature`."""

        for relation in subsignature.relations:
            if relation.name not in world.signature or world.signature.relation(relation.name) != relation:
                raise ModelDefinitionError(f"symbol '{relation.name}' is not in the world's signature")
        tables = {relation.name: world.tables[relation.name] for relation in subsignature.relations}
        return World(subsignature, world.domains, tables)


    @staticmethod
    def instantiated_symbol(relation: str, slots: Sequence[Optional[str]]) -> str:
        """Name of the symbol replacing `relation` with constants in some argument slots.

        R(c, x) -> R_c_, R(x, c) -> R__c, R(c, c) -> R_c_c, P(c) -> P_c.
        """
        return "_".join([relation] + [slot or "" for slot in slots])


    @staticmethod
    def ground_query(formula: Formula, domains: DomainAssignment) -> Formula:
        """Substitute distinct canonical elements for the free variables of a query.

        Elements already named in the query are skipped, so `R(x) & Q(e1)`
        grounds x to e2.
        """
        variables = LogicService.free_variables(formula)
        if not variables:
            return formula
        taken = {term for atom in formula.atoms() for term in atom.terms if isinstance(term, Element)}
        mapping: dict[Variable, Element] = {}
        for variable in variables:
            candidates = (e for e in domains.elements(variable.sort) if e not in taken)
            element = next(candidates, None)
            if element is None:
                raise ModelDefinitionError(
                    f"query needs more distinct elements of sort '{variable.sort}' than the domain "
                    f"size {domains.size(variable.sort)} provides"
                )
            taken.add(element)
            mapping[variable] = element
        return formula.substitute(mapping)


    @staticmethod
    def truth_value(formula: Formula, valuation: Mapping[Atom, bool]) -> bool:
        """Truth of a variable-free formula under an assignment of its ground atoms."""

        match formula:
            case Top():
                return True
            case Bottom():
                return False
            case Atom():
                try:
                    return valuation[formula]
                except KeyError:
                    raise MissingInterpretationError(f"no value for {formula}") from None
            case Not(operand=operand):
                return not LogicService.truth_value(operand, valuation)
            case And(left=left, right=right):
                return LogicService.truth_value(left, valuation) and LogicService.truth_value(right, valuation)
            case Or(left=left, right=right):
                return LogicService.truth_value(left, valuation) or LogicService.truth_value(right, valuation)
            case Implies(left=left, right=right):
                return (not LogicService.truth_value(left, valuation)) or LogicService.truth_value(right, valuation)
        raise TypeError(f"not a formula: {formula!r}")
