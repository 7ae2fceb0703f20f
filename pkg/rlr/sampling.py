# Built-in
from __future__ import annotations
from typing import Iterator
import logging
import math

# External
import numpy as np
from scipy.special import expit

# Internal
from cmn.conf import get_setting
from cmn.errors import ModelDefinitionError
from logic.models import DomainAssignment, World
from logic.service import LogicService
from .models import RlrModel, SampleBatch
from .service import RlrService

logger = logging.getLogger(__name__)


class SamplingService:
    """
    Ancestral sampling of RLR models.

    Sample k always draws its uniforms from the stream seeded by
    (seed, k), one uniform per ground atom in evaluation order, so a batch
    is reproducible and any sample can be regenerated on its own. Samples
    are then evaluated in vectorized chunks.
    """

    @staticmethod
    def grounding_cells(model: RlrModel, domains: DomainAssignment) -> int:
        """Largest number of groundings one condition evaluates per world."""

        cells = 1
        for label in model.labels:
            for condition in label.conditions:
                occurring = LogicService.free_variables(condition.formula)
                head = [v for v in label.head_variables if v not in occurring]
                cells = max(cells, math.prod(domains.size(v.sort) for v in occurring + head))
        return cells


    @staticmethod
    def chunks(count: int, cells: int) -> Iterator[tuple[int, int]]:
        """Consecutive `(start, stop)` ranges keeping `stop - start` worlds within the cell budget."""

        size = max(1, get_setting("SAMPLING_CELL_BUDGET") // max(1, cells))
        for start in range(0, count, size):
            yield start, min(count, start + size)


    @staticmethod
    def forward_sample(model: RlrModel, domains: DomainAssignment, seed: int, count: int) -> SampleBatch:
        """
        Draw `count` worlds by sampling ground atoms node by node.

        Args:
            model: Valid RLR model
            domains: Domain sizes per sort
            seed: Non-negative seed of the per-sample streams
            count: Number of worlds

        Returns:
            The batch, carrying the seed and the domains

        Raises:
            ModelDefinitionError: If the model is invalid or the arguments are out of range
        """
        RlrService.ensure_valid(model)
        domains.covers(model.signature)
        if count < 0 or seed < 0:
            raise ModelDefinitionError(f"sample count and seed must be non-negative, got {count} and {seed}")

        layout = []
        offset = 0
        for label in model.order:
            shape = domains.shape(model.signature.relation(label.relation).sorts)
            layout.append((label, shape, offset))
            offset += math.prod(shape)

        worlds: list[World] = []
        for start, stop in SamplingService.chunks(count, SamplingService.grounding_cells(model, domains)):
            batch = stop - start
            uniforms = np.stack([np.random.default_rng([seed, k]).random(offset) for k in range(start, stop)])
            tables = {
                relation.name: np.zeros((batch,) + domains.shape(relation.sorts), dtype=bool)
                for relation in model.signature.relations
            }
            for label, shape, position in layout:
                logits = RlrService.node_logits(label, tables, domains, batch)
                draws = uniforms[:, position:position + math.prod(shape)].reshape((batch,) + shape)
                tables[label.relation] = draws < expit(logits)
            worlds.extend(
                World(model.signature, domains, {name: table[i] for name, table in tables.items()})
                for i in range(batch)
            )

        logger.info(f"Sampled {count} worlds over {domains} with seed {seed}")
        return SampleBatch(model.signature, domains, tuple(worlds), seed)


    @staticmethod
    def sample_substructures(batch: SampleBatch, sizes: DomainAssignment, seed: int) -> SampleBatch:
        """
        One random induced substructure per world of `batch`.

        Each sort keeps a uniformly chosen subset of the requested size,
        relabeled e1..em in increasing order of the original elements.
        Propositions are copied unchanged.

        Raises:
            ModelDefinitionError: If a requested size exceeds the batch's domain
        """
        for sort, size in sizes.sizes:
            if size > batch.domains.size(sort):
                raise ModelDefinitionError(
                    f"substructures of size {size} for sort '{sort}' exceed the domain size {batch.domains.size(sort)}"
                )
        target = DomainAssignment.from_sizes(
            (sort, sizes.size(sort) if sort in dict(sizes.sizes) else size) for sort, size in batch.domains.sizes
        )

        worlds = []
        for k, world in enumerate(batch.worlds):
            rng = np.random.default_rng([seed, k])
            chosen = {
                sort: np.sort(rng.choice(batch.domains.size(sort), target.size(sort), replace=False))
                for sort, _ in target.sizes
            }
            tables = {}
            for relation in batch.signature.relations:
                table = world.tables[relation.name]
                if relation.sorts:
                    table = table[np.ix_(*(chosen[sort] for sort in relation.sorts))]
                tables[relation.name] = table
            worlds.append(World(batch.signature, target, tables))

        logger.info(f"Cut {len(worlds)} substructures of size {target} from worlds over {batch.domains}")
        return SampleBatch(batch.signature, target, tuple(worlds), seed)
