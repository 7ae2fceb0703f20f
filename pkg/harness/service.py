# Built-in
from __future__ import annotations
from typing import Optional, Union
import logging

# Internal
from asymptotics.models import AsymptoticResult, LimitCheckRow
from asymptotics.service import AsymptoticService
from cmn.errors import ConfigurationError, ModelDefinitionError, NotFactorizableError
from logic.models import And, DomainAssignment, Formula, Signature
from logic.parser import parse_formula, pretty_print
from logic.repo import ModelRepository
from logic.service import LogicService
from mln.models import MlnModel, SweepRow
from mln.service import MlnService
from rlr.learning import LearningService
from rlr.models import NodeFit, RlrModel, SampleBatch, Semantics
from rlr.repo import SampleRepository
from rlr.sampling import SamplingService
from rlr.service import RlrService
from .models import RunConfig

logger = logging.getLogger(__name__)

Model = Union[MlnModel, RlrModel]


class ExperimentService:
    """
    The operations behind the management commands.

    Every method takes a validated RunConfig and returns plain domain
    objects; rendering and writing are left to the commands.
    """

    @staticmethod
    def load_model(config: RunConfig) -> tuple[Signature, Model]:
        return ModelRepository(cache_enabled=True).load_entity(config.model)


    @staticmethod
    def _rlr(model: Model, command: str) -> RlrModel:
        if not isinstance(model, RlrModel):
            raise ModelDefinitionError(f"'{command}' needs an RLR model")
        return model


    @staticmethod
    def _formula(signature: Signature, text: Optional[str], name: str = "query") -> Formula:
        if text is None:
            raise ConfigurationError(f"this command needs --{name}")
        return parse_formula(text, signature)


    @staticmethod
    def _grounded(
        signature: Signature,
        config: RunConfig,
        domains: DomainAssignment,
    ) -> tuple[Formula, Optional[Formula]]:
        """Query and evidence with their free variables grounded jointly, so shared variables agree."""

        query = ExperimentService._formula(signature, config.query)
        if config.evidence is None:
            return LogicService.ground_query(query, domains), None
        evidence = ExperimentService._formula(signature, config.evidence, "evidence")
        grounded = LogicService.ground_query(And(query, evidence), domains)
        return grounded.left, grounded.right


    @staticmethod
    def validate(config: RunConfig) -> list[str]:
        """
        Parse the model file and check its well-formedness.

        :return: One line per violation; empty for a valid model.
        :raises ModelSyntaxError: When the file does not parse, with line and column.
        """
        signature, model = ExperimentService.load_model(config)
        if isinstance(model, MlnModel):
            return []
        return [str(violation) for violation in RlrService.validate(model)]


    @staticmethod
    def infer(config: RunConfig) -> dict:
        """P(query | evidence) on the fixed domain sizes of `config`."""

        signature, model = ExperimentService.load_model(config)
        domains = config.domain_assignment(signature.sorts)
        query, evidence = ExperimentService._grounded(signature, config, domains)

        if config.engine == "factorized":
            if not isinstance(model, MlnModel):
                raise NotFactorizableError("the factorized engine evaluates MLN models only")
            if evidence is not None:
                raise NotFactorizableError("the factorized engine does not take evidence")
            value = MlnService.factorized_probability(model, domains, query)
        elif isinstance(model, MlnModel):
            value = MlnService.query_probability(model, domains, query, evidence)
        else:
            value = RlrService.query_probability(model, domains, query, evidence)

        logger.info(f"Inferred P({query}) = {value!r} over {domains}")
        return {
            "query": str(query),
            "evidence": str(evidence) if evidence is not None else None,
            "engine": config.engine,
            "sizes": str(domains),
            "value": value,
        }


    @staticmethod
    def sweep(config: RunConfig) -> list[SweepRow]:
        """Query probability at every swept domain assignment, in sweep order."""

        signature, model = ExperimentService.load_model(config)
        query = ExperimentService._formula(signature, config.query)
        sizes = config.domain_assignments(signature.sorts)
        if isinstance(model, MlnModel):
            return MlnService.domain_sweep(model, sizes, query, config.engine)
        if config.engine == "factorized":
            raise NotFactorizableError("the factorized engine evaluates MLN models only")
        return [
            SweepRow(domains, RlrService.query_probability(model, domains, LogicService.ground_query(query, domains)))
            for domains in sizes
        ]


    @staticmethod
    def asymptotic(config: RunConfig) -> Union[AsymptoticResult, list[LimitCheckRow]]:
        """
        The limit report of the query, or with `--sizes` the sampled limit
        check at each swept size.
        """
        signature, model = ExperimentService.load_model(config)
        model = ExperimentService._rlr(model, "asymptotic")
        query = ExperimentService._formula(signature, config.query)
        evidence = ExperimentService._formula(signature, config.evidence, "evidence") if config.evidence else None

        if not config.is_sweep:
            return AsymptoticService.asymptotic_report(model, query, evidence)
        if evidence is not None:
            raise ConfigurationError("the sampled limit check does not take --evidence")
        if config.seed is None or config.samples is None:
            raise ConfigurationError("the sampled limit check needs --seed and --samples")
        sizes = config.domain_assignments(signature.sorts)
        return AsymptoticService.empirical_limit_check(model, query, sizes, config.samples, config.seed)


    @staticmethod
    def sample(config: RunConfig) -> SampleBatch:
        signature, model = ExperimentService.load_model(config)
        model = ExperimentService._rlr(model, "sample")
        domains = config.domain_assignment(signature.sorts)
        batch = SamplingService.forward_sample(model, domains, config.seed, config.samples)
        if config.substructure:
            batch = SamplingService.sample_substructures(
                batch, DomainAssignment.from_sizes(config.substructure), config.seed
            )
        return batch


    @staticmethod
    def encode_samples(batch: SampleBatch) -> str:
        return SampleRepository().encode(batch)


    @staticmethod
    def learn(config: RunConfig) -> tuple[str, list[NodeFit]]:
        """Fit the weights of the model structure to a sample file; returns the learned model text."""

        signature, model = ExperimentService.load_model(config)
        structure = ExperimentService._rlr(model, "learn")
        if config.samples_path is None:
            raise ConfigurationError("learning needs a sample file")
        batch = SampleRepository().load_entity(config.samples_path, signature=signature)
        learned, fits = LearningService.fit_model(structure, batch)
        return pretty_print(learned.signature, learned), fits


    @staticmethod
    def convert(config: RunConfig) -> str:
        """The model rewritten for `--to` semantics on the fixed domain sizes."""

        signature, model = ExperimentService.load_model(config)
        model = ExperimentService._rlr(model, "convert")
        if config.target is None:
            raise ConfigurationError("conversion needs --to da|unscaled")
        domains = config.domain_assignment(signature.sorts)
        converted = RlrService.convert(model, domains, Semantics(config.target))
        return pretty_print(converted.signature, converted)
