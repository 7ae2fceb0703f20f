"""
Limits of domain-aware RLR probabilities as every domain grows.

A proposition's conditional probability tends to the sigmoid of the
weighted limit proportions of its conditions. The limit proportion of a
condition psi given the propositions C below it is the limit probability of
psi(b), with fresh constants b for its summed variables, in the generic
extension by b conditioned on C. Recursing on these proposition formulas
reaches the roots, where no condition has free variables.
"""

# Built-in
from __future__ import annotations
from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterable, Optional, Sequence
import hashlib
import logging
import math

# External
import networkx as nx
import numpy as np
from scipy.special import expit

# Internal
from cmn.base_cache import CacheManager
from cmn.conf import get_setting
from cmn.errors import ConditioningError, ModelDefinitionError, StateSpaceError, UndefinedAsymptoticsError
from logic.models import Atom, Constant, DomainAssignment, Element, Formula, Term, Top, Variable
from logic.parser import pretty_print
from logic.service import LogicService
from rlr.models import RlrModel, SampleBatch
from rlr.sampling import SamplingService
from rlr.service import RlrService
from .models import AsymptoticResult, LimitCheckRow, PropositionValuation, ProportionRow

logger = logging.getLogger(__name__)

Valuation = dict[Atom, bool]


@dataclass(frozen=True)
class _Extension:
    model: RlrModel
    propositions: tuple[str, ...]


    def relevant(self, symbols: set[str]) -> list[str]:
        """Propositions among `symbols` and their ancestors, in evaluation order."""
        closure = set(symbols)
        for symbol in symbols:
            closure |= nx.ancestors(self.model.graph, symbol)
        return [name for name in self.propositions if name in closure]


class AsymptoticSolver:
    """
    Exact limit probabilities of one domain-aware RLR model.

    Propositions are ground atoms over generic constants, named by their
    symbol in the generic extension (R(a1) is R_a1). Results of
    `probability` are memoized in the `memo` cache under the model's
    fingerprint; the proportions computed along the way are collected in
    `proportions` for reports.
    """

    def __init__(self, model: RlrModel, cache: Optional[CacheManager] = None) -> None:
        RlrService.ensure_valid(model)
        for label in model.labels:
            for number, condition in enumerate(label.conditions, start=1):
                if not condition.proportional and condition.variables:
                    raise UndefinedAsymptoticsError(
                        f"mixed/unscaled models have no defined asymptotics: condition {number} of node "
                        f"{label.relation} sums over {', '.join(v.name for v in condition.variables)} without scaling"
                    )
        self.model = RlrService.normalize_variable_sets(model)
        self.fingerprint = hashlib.sha256(pretty_print(model.signature, self.model).encode("utf-8")).hexdigest()[:16]
        self.cache = cache or CacheManager(namespace=f"asymptotics.{self.fingerprint}")
        self.proportions: dict[tuple[str, PropositionValuation], float] = {}
        self.constants_used: set[str] = set()
        self._collectors: list[tuple[dict[tuple[str, PropositionValuation], float], set[str]]] = []
        self._extensions: dict[tuple[str, ...], _Extension] = {}
        self._origins: dict[str, tuple[str, tuple[Constant, ...]]] = {
            relation.name: (relation.name, ()) for relation in model.signature.propositions
        }


    def extension(self, constants: Sequence[Constant]) -> _Extension:
        """Generic extension by `constants`, built once per constant set."""

        key = tuple(sorted(constant.name for constant in constants))
        if key in self._extensions:
            return self._extensions[key]

        extended = RlrService.extend_by_constants(self.model, constants)
        for relation in self.model.signature.relations:
            if relation.is_proposition:
                continue
            options = [[c for c in constants if c.sort == sort] for sort in relation.sorts]
            for placement in product(*options):
                name = LogicService.instantiated_symbol(relation.name, [c.name for c in placement])
                self._origins[name] = (relation.name, tuple(placement))

        propositions = tuple(extended.propositions)
        for name in propositions:
            for condition in extended.label(name).conditions:
                if condition.formula.relations() and extended.formula_index(condition.formula) >= extended.index(name):
                    raise UndefinedAsymptoticsError(
                        f"condition '{condition.formula}' of {name} does not lower the index; the recursion would not end"
                    )
        self._extensions[key] = _Extension(extended, propositions)
        logger.debug(f"Built generic extension by {', '.join(key) or 'no constants'}: {len(propositions)} propositions")
        return self._extensions[key]


    @staticmethod
    def constants_of(*formulas: Optional[Formula]) -> list[Constant]:
        found: dict[Constant, None] = {}
        for formula in formulas:
            if formula is None:
                continue
            for atom in formula.atoms():
                for term in atom.terms:
                    if isinstance(term, Constant):
                        found.setdefault(term, None)
        return list(found)


    @staticmethod
    def propositional(formula: Formula) -> Formula:
        mapped = formula.map_atoms(RlrService.instantiate_atom)
        for atom in mapped.atoms():
            if atom.terms:
                raise ModelDefinitionError(f"'{formula}' still has free variables after grounding to constants")
        return mapped


    def conditional(self, name: str, valuation: Valuation) -> float:
        """Limit probability of proposition `name` given values for all its ancestors."""

        relation, constants = self._origins[name]
        label = self.model.label(relation)
        mapping = dict(zip(label.head_variables, constants))
        total = 0.0
        for condition in label.conditions:
            if condition.weight:
                total += condition.weight * self.proportion(condition.formula.substitute(mapping), valuation)
        return float(expit(total))


    def proportion(self, formula: Formula, valuation: Valuation) -> float:
        """
        Limit proportion of the groundings of `formula` that hold, given `valuation`.

        :param formula: Formula over the base symbols; constants name generic individuals.
        :param valuation: Values of every proposition below the formula's index.
        :return: The truth value when `formula` is closed, a limit probability otherwise.
        """
        free = LogicService.free_variables(formula)
        if not free:
            return 1.0 if LogicService.truth_value(self.propositional(formula), valuation) else 0.0

        taken = {constant.name for constant in self.constants_of(formula)}
        for atom in valuation:
            taken.update(constant.name for constant in self._origins[atom.relation][1])
        fresh = RlrService.fresh_constants([variable.sort for variable in free], sorted(taken))
        self._use(constant.name for constant in fresh)
        value = self.probability(formula.substitute(dict(zip(free, fresh))), valuation)

        self._record((str(formula), PropositionValuation(tuple(sorted((a.relation, v) for a, v in valuation.items())))), value)
        return value


    def _record(self, key: tuple[str, PropositionValuation], value: float) -> None:
        self.proportions.setdefault(key, value)
        for collected, _ in self._collectors:
            collected.setdefault(key, value)


    def _use(self, names: Iterable[str]) -> None:
        names = set(names)
        self.constants_used |= names
        for _, used in self._collectors:
            used |= names


    def probability(self, target: Formula, fixed: Optional[Valuation] = None, evidence: Optional[Formula] = None) -> float:
        """
        Limit of P(target | fixed, evidence) for closed formulas over generic constants.

        Raises:
            ConditioningError: If the conditioning event has limit probability zero
            StateSpaceError: If more propositions than the cap must be enumerated
        """
        extension = self.extension(self.constants_of(target, evidence))
        goal = self.propositional(target)
        condition = self.propositional(evidence) if evidence is not None else None
        symbols = set(goal.relations()) | (set(condition.relations()) if condition is not None else set())
        relevant = extension.relevant(symbols)
        kept = {atom: value for atom, value in (fixed or {}).items() if atom.relation in set(relevant)}

        pending = [name for name in relevant if Atom(name, ()) not in kept]
        cap = get_setting("PROPOSITION_CAP")
        if len(pending) > cap:
            raise StateSpaceError(f"asymptotic query needs {len(pending)} propositions, above the cap of {cap}")

        key = self.cache.make_key(
            self.fingerprint, goal, condition, sorted((a.relation, v) for a, v in kept.items())
        )
        def compute() -> tuple[float, tuple, tuple]:
            collected: dict[tuple[str, PropositionValuation], float] = {}
            used: set[str] = set()
            self._collectors.append((collected, used))
            try:
                value = self._enumerate(relevant, kept, goal, condition)
            finally:
                self._collectors.pop()
            return value, tuple(collected.items()), tuple(sorted(used))

        # Cached together with the proportions and constants met on the way.
        value, rows, used = self.cache.get_or_set(key, compute)
        for row_key, row_value in rows:
            self._record(row_key, row_value)
        self._use(used)
        return value


    def _enumerate(self, order: list[str], fixed: Valuation, goal: Formula, condition: Optional[Formula]) -> float:
        joint = 0.0
        marginal = 0.0

        def visit(position: int, valuation: Valuation, mass: float) -> None:
            nonlocal joint, marginal
            if mass == 0.0:
                return
            if position == len(order):
                if condition is None or LogicService.truth_value(condition, valuation):
                    marginal += mass
                    if LogicService.truth_value(goal, valuation):
                        joint += mass
                return
            atom = Atom(order[position], ())
            p = self.conditional(atom.relation, valuation)
            values = (fixed[atom],) if atom in fixed else (True, False)
            for value in values:
                visit(position + 1, {**valuation, atom: value}, mass * (p if value else 1.0 - p))

        visit(0, {}, 1.0)
        if marginal == 0.0:
            given = [str(condition)] if condition is not None else []
            given += [a.relation if v else f"!{a.relation}" for a, v in fixed.items()]
            raise ConditioningError(f"conditioning on {' & '.join(given)} has limit probability zero")
        return min(1.0, joint / marginal)


    def distribution(self, on_valuation: Optional[Callable[[PropositionValuation, float], None]] = None) -> list[tuple[PropositionValuation, float]]:
        """Joint limit law of the model's own propositions, by the chain rule in evaluation order."""

        names = self.model.propositions
        cap = get_setting("PROPOSITION_CAP")
        if len(names) > cap:
            raise StateSpaceError(f"{len(names)} propositions exceed the cap of {cap}")
        bound = max((self.model.index(name) for name in names), default=-1)

        rows: list[tuple[PropositionValuation, float]] = []

        def visit(position: int, valuation: Valuation, mass: float) -> None:
            if position == len(names):
                row = PropositionValuation(tuple((a.relation, v) for a, v in valuation.items()), bound)
                rows.append((row, mass))
                if on_valuation is not None:
                    on_valuation(row, mass)
                return
            atom = Atom(names[position], ())
            p = self.conditional(atom.relation, valuation) if mass > 0.0 else 0.5
            for value in (True, False):
                visit(position + 1, {**valuation, atom: value}, mass * (p if value else 1.0 - p))

        visit(0, {}, 1.0)
        return rows


class AsymptoticService:

    @staticmethod
    def generic_target(
        query: Formula,
        evidence: Optional[Formula] = None,
        taken: Sequence[str] = (),
    ) -> tuple[Formula, Optional[Formula], dict[Term, Constant]]:
        """Replace variables and domain elements by fresh generic constants, one per distinct term."""

        terms: dict[Term, None] = {}
        for formula in (query, evidence):
            if formula is None:
                continue
            for atom in formula.atoms():
                for term in atom.terms:
                    if isinstance(term, (Variable, Element)):
                        terms.setdefault(term, None)
        constants = RlrService.fresh_constants([term.sort for term in terms], taken)
        mapping: dict[Term, Constant] = dict(zip(terms, constants))
        return (
            query.substitute(mapping),
            evidence.substitute(mapping) if evidence is not None else None,
            mapping,
        )


    @staticmethod
    def asymptotic_proportion(model: RlrModel, formula: Formula, valuation: PropositionValuation) -> float:
        """
        Limit proportion of `formula` given values of the model's propositions.

        Raises:
            UndefinedAsymptoticsError: If the model has raw conditions
            ConditioningError: If the valuation has limit probability zero
        """
        if isinstance(formula, Top):
            return 1.0
        solver = AsymptoticSolver(model)
        target, _, _ = AsymptoticService.generic_target(formula)
        return solver.probability(target, valuation.as_atoms())


    @staticmethod
    def asymptotic_proposition_distribution(model: RlrModel) -> list[tuple[PropositionValuation, float]]:
        return AsymptoticSolver(model).distribution()


    @staticmethod
    def asymptotic_query(model: RlrModel, query: Formula, evidence: Optional[Formula] = None) -> float:
        """Limit of P(query | evidence); free variables and elements denote distinct generic individuals."""

        target, condition, _ = AsymptoticService.generic_target(query, evidence)
        value = AsymptoticSolver(model).probability(target, None, condition)
        logger.info(f"Asymptotic P({query}{f' | {evidence}' if evidence is not None else ''}) = {value!r}")
        return value


    @staticmethod
    def asymptotic_report(model: RlrModel, query: Formula, evidence: Optional[Formula] = None) -> AsymptoticResult:
        """The limit value with the proposition law, the proportion table and any caveats."""

        solver = AsymptoticSolver(model)
        target, condition, mapping = AsymptoticService.generic_target(query, evidence)
        value = solver.probability(target, None, condition)

        flags: list[str] = []
        undefined: list[PropositionValuation] = []

        def check(row: PropositionValuation, mass: float) -> None:
            if mass == 0.0:
                undefined.append(row)

        distribution = solver.distribution(check)
        for row in undefined:
            flags.append(f"valuation {row} has limit probability zero; its proportions are undefined")
            logger.warning(f"Valuation {row} has limit probability zero")

        extension = solver.extension(solver.constants_of(target, condition))
        goal = solver.propositional(target)
        determined = set(solver.propositional(condition).relations()) if condition is not None else set()
        marginalized = [
            name for name in extension.relevant(set(goal.relations()))
            if name in set(model.propositions) and name not in determined and name not in goal.relations()
        ]
        if marginalized:
            flags.append(f"marginalized over propositions {', '.join(marginalized)} not fixed by the evidence")

        rows = [ProportionRow(formula, valuation, proportion) for (formula, valuation), proportion in solver.proportions.items()]
        for row in undefined:
            rows.append(ProportionRow("*", row, None))
        provenance = {
            "model": solver.fingerprint,
            "constants": sorted(set(c.name for c in mapping.values()) | solver.constants_used),
        }
        return AsymptoticResult(
            query=str(query),
            evidence=str(evidence) if evidence is not None else None,
            value=value,
            distribution=tuple(distribution),
            proportions=tuple(rows),
            provenance=provenance,
            flags=tuple(flags),
        )


    @staticmethod
    def empirical_value(batch: SampleBatch, query: Formula) -> float:
        """
        Mean over the batch of the fraction of true groundings of `query`.

        Groundings assign distinct elements to distinct variables of the same
        sort; a closed query gives its frequency.
        """
        if not len(batch):
            raise ModelDefinitionError("empirical values need at least one sample")
        variables = LogicService.free_variables(query)
        shape = batch.domains.shape(variable.sort for variable in variables)
        mask = np.ones(shape, dtype=bool)
        for i, first in enumerate(variables):
            for j in range(i + 1, len(variables)):
                if variables[j].sort != first.sort:
                    continue
                left = np.arange(shape[i]).reshape([-1 if axis == i else 1 for axis in range(len(shape))])
                right = np.arange(shape[j]).reshape([-1 if axis == j else 1 for axis in range(len(shape))])
                mask &= left != right
        selected = mask.reshape(-1)
        if not selected.any():
            raise ModelDefinitionError(f"domains {batch.domains} are too small for distinct groundings of '{query}'")

        fractions = []
        for start, stop in SamplingService.chunks(len(batch), mask.size):
            values = LogicService.evaluate_tensor(
                query, batch.stacked(start, stop), batch.domains, variables, batch=stop - start
            )
            fractions.append(values.reshape(stop - start, -1)[:, selected].mean(axis=1))
        return float(np.mean(np.concatenate(fractions)))


    @staticmethod
    def empirical_limit_check(
        model: RlrModel,
        query: Formula,
        sizes: Sequence[DomainAssignment],
        samples: int,
        seed: int,
    ) -> list[LimitCheckRow]:
        """
        Sampled estimates of `query` at growing domain sizes next to its limit.

        Each row's tolerance is three binomial standard deviations,
        3 * sqrt(0.25 / (samples * m)), with m the smallest domain among
        the query's variables (1 for closed queries).
        """
        asymptotic = AsymptoticService.asymptotic_query(model, query)
        sorts = [variable.sort for variable in LogicService.free_variables(query)]
        rows = []
        for domains in sizes:
            batch = SamplingService.forward_sample(model, domains, seed, samples)
            empirical = AsymptoticService.empirical_value(batch, query)
            smallest = min((domains.size(sort) for sort in sorts), default=1)
            tolerance = 3.0 * math.sqrt(0.25 / (samples * smallest))
            rows.append(LimitCheckRow(domains, empirical, asymptotic, tolerance, samples))
            logger.info(f"Limit check at {domains}: empirical {empirical:.6f} vs limit {asymptotic:.6f}")
        return rows
