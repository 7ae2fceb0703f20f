# Built-in
from __future__ import annotations
from typing import Optional, Sequence
import logging
import math

# External
import numpy as np
from scipy.special import expit, logsumexp

# Internal
from logic.models import Atom, DomainAssignment, Formula, World
from logic.service import LogicService
from .models import (
    Aggregator,
    ConnectionVector,
    LogWeightedDistribution,
    MlnModel,
    SweepRow,
)

logger = logging.getLogger(__name__)


class MlnService:
    """
    Exact semantics of (domain-aware) Markov logic networks.

    A world's log-weight is sum_i w_i / C_i * n_i where n_i counts the true
    groundings of formula i and C_i is 1 without scaling or the aggregated
    connection vector of formula i with domain-aware scaling.
    """

    @staticmethod
    def connection_vector(formula: Formula, domains: DomainAssignment) -> ConnectionVector:
        """
        For each literal, the number of groundings it can connect to.

        :param formula: Well-sorted formula.
        :param domains: Domain sizes.
        :return: One entry per atom occurrence: the product of |D_x| over the
                 formula's free variables x that the literal does not mention.
        """
        variables = LogicService.free_variables(formula)
        literals = tuple(formula.atoms())
        entries = []
        for literal in literals:
            mentioned = set(literal.terms)
            entries.append(math.prod(domains.size(v.sort) for v in variables if v not in mentioned))
        return ConnectionVector(literals, tuple(entries))


    @staticmethod
    def scaling_factor(formula: Formula, domains: DomainAssignment, aggregator: Aggregator = Aggregator.MAX) -> float:
        """Aggregate of the connection vector; 1 for formulas without literals."""

        entries = np.array(MlnService.connection_vector(formula, domains).entries, dtype=float)
        if entries.size == 0:
            return 1.0
        match aggregator:
            case Aggregator.MAX:
                return float(entries.max())
            case Aggregator.SUM:
                return float(entries.sum())
            case Aggregator.GEOMEAN:
                return float(np.exp(np.log(entries).mean()))
            case Aggregator.MEAN:
                return float(entries.mean())
        raise ValueError(f"unknown aggregator {aggregator!r}")


    @staticmethod
    def effective_weights(model: MlnModel, domains: DomainAssignment) -> list[float]:
        """w_i / C_i for every formula, in model order."""

        if not model.is_domain_aware:
            return [weighted.weight for weighted in model.formulas]
        return [
            weighted.weight / MlnService.scaling_factor(weighted.formula, domains, model.aggregator)
            for weighted in model.formulas
        ]


    @staticmethod
    def world_log_weight(model: MlnModel, world: World) -> float:
        weights = MlnService.effective_weights(model, world.domains)
        return math.fsum(
            weight * LogicService.count_true_groundings(world, weighted.formula)
            for weight, weighted in zip(weights, model.formulas)
        )


    @staticmethod
    def distribution(model: MlnModel, domains: DomainAssignment, cap: Optional[int] = None) -> LogWeightedDistribution:
        """
        Log-weights of all worlds and the log-partition value.

        Args:
            model: Model to enumerate
            domains: Domain sizes per sort
            cap: Ground-atom cap; the configured one when omitted

        Returns:
            The distribution, normalized through log-sum-exp

        Raises:
            StateSpaceError: If the ground atoms exceed the cap
        """
        index = LogicService.ground_atom_index(model.signature, domains, cap)
        weights = MlnService.effective_weights(model, domains)
        log_weights = np.zeros(index.world_count, dtype=float)
        for numbers in LogicService.iter_world_batches(index):
            tables = index.tables_for(numbers)
            batch = np.zeros(len(numbers), dtype=float)
            for weight, weighted in zip(weights, model.formulas):
                if weight:
                    batch += weight * LogicService.count_batch(weighted.formula, tables, domains, batch=len(numbers))
            log_weights[numbers] = batch
        log_partition = float(logsumexp(log_weights))
        logger.info(f"Enumerated {index.world_count} worlds over {domains}, log Z = {log_partition:.6g}")
        return LogWeightedDistribution(index, log_weights, log_partition)


    @staticmethod
    def query_probability(
        model: MlnModel,
        domains: DomainAssignment,
        query: Formula,
        evidence: Optional[Formula] = None,
    ) -> float:
        """
        P(query | evidence) for ground formulas, by enumeration.

        Raises:
            ConditioningError: If the evidence has probability zero
        """
        return MlnService.distribution(model, domains).conditional(query, evidence)


    @staticmethod
    def delta(model: MlnModel, world: World, atom: Atom) -> float:
        """Weight of the companion world with `atom` true minus the one with `atom` false."""

        return (MlnService.world_log_weight(model, world.with_value(atom, True))
                - MlnService.world_log_weight(model, world.with_value(atom, False)))


    @staticmethod
    def verify_sigmoid_identity(model: MlnModel, domains: DomainAssignment, atom: Atom) -> tuple[float, float]:
        """
        Both sides of P(atom) = E[sigmoid(delta_atom)].

        The delta of every world is read off the distribution: the two
        companions of world k are k with the atom's bit set and cleared.
        """
        distribution = MlnService.distribution(model, domains)
        bit = np.int64(1) << np.int64(distribution.index.position(atom))
        numbers = np.arange(distribution.index.world_count, dtype=np.int64)
        deltas = distribution.log_weights[numbers | bit] - distribution.log_weights[numbers & ~bit]
        lhs = distribution.marginal(atom)
        rhs = float(np.sum(distribution.probabilities() * expit(deltas)))
        logger.debug(f"Sigmoid identity for {atom} over {domains}: {lhs!r} vs {rhs!r}")
        return lhs, rhs


    @staticmethod
    def domain_sweep(
        model: MlnModel,
        sizes: Sequence[DomainAssignment],
        query: Formula,
        engine: str = "enumerate",
    ) -> list[SweepRow]:
        """
        Probability of `query` at each domain assignment, in the given order.

        Free variables of the query are grounded to distinct elements per row.
        """
        from .lifted import FactorizedEvaluator

        evaluator = FactorizedEvaluator(model) if engine == "factorized" else None
        rows = []
        for domains in sizes:
            grounded = LogicService.ground_query(query, domains)
            if evaluator is not None:
                value = evaluator.probability(domains, grounded)
            else:
                value = MlnService.query_probability(model, domains, grounded)
            rows.append(SweepRow(domains, value))
            logger.debug(f"Sweep row {domains}: {value!r}")
        return rows


    @staticmethod
    def factorized_probability(model: MlnModel, domains: DomainAssignment, query: Formula) -> float:
        """
        Exact marginal of one ground atom without enumerating worlds.

        Raises:
            NotFactorizableError: If the model or the query does not fit the block layout
        """
        from .lifted import FactorizedEvaluator

        return FactorizedEvaluator(model).probability(domains, query)
