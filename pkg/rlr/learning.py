# Built-in
from __future__ import annotations
import logging

# External
import numpy as np
from scipy.special import expit, log_expit

# Internal
from cmn.conf import get_setting
from cmn.errors import ModelDefinitionError, NumericalError
from .models import NodeFit, NodeLabel, RlrModel, SampleBatch
from .service import RlrService

logger = logging.getLogger(__name__)


class LearningService:
    """
    Maximum-likelihood weights for a fixed RLR structure and fully observed worlds.

    The log-likelihood splits into one logistic regression per node: every
    ground head atom of every world is a row, its truth value the label and
    the scaled condition counts of `RlrService.node_features` the features.
    Each problem is concave and solved by damped Newton steps.
    """

    @staticmethod
    def log_likelihood(model: RlrModel, batch: SampleBatch) -> float:
        """Sum over the batch of the log world probabilities."""

        if not len(batch):
            return 0.0
        total = RlrService.log_probabilities(model, batch.stacked(), batch.domains, len(batch))
        return float(np.sum(total))


    @staticmethod
    def _design(label: NodeLabel, batch: SampleBatch) -> tuple[np.ndarray, np.ndarray]:
        tables = batch.stacked()
        features = RlrService.node_features(label, tables, batch.domains, len(batch))
        targets = tables[label.relation].reshape(-1).astype(float)
        design = features.reshape(targets.size, len(label.conditions))
        return design, targets


    @staticmethod
    def _objective(design: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> float:
        logits = design @ weights
        return float(np.sum(targets * log_expit(logits) + (1.0 - targets) * log_expit(-logits)))


    @staticmethod
    def fit_node(label: NodeLabel, batch: SampleBatch) -> NodeFit:
        """
        Newton's method on one node's conditional log-likelihood.

        Starts from zero weights. Stops when the gradient norm divided by
        the number of rows falls below the configured tolerance. Weights
        that leave the clamp range are clipped and reported: the data is
        then (nearly) separable and the maximum is at infinity.

        :param label: Node whose conditions define the features.
        :param batch: Non-empty batch of fully observed worlds.
        :return: Fitted weights with convergence details.
        :raises NumericalError: If a Newton step is not finite.
        """
        if not len(batch):
            raise ModelDefinitionError(f"cannot fit node {label.relation} on an empty batch")
        design, targets = LearningService._design(label, batch)
        rows, width = design.shape
        weights = np.zeros(width, dtype=float)
        if width == 0:
            return NodeFit(label.relation, (), 0, 0.0, True, False, rows)

        tolerance = get_setting("LEARNING_TOLERANCE")
        max_iterations = get_setting("LEARNING_MAX_ITERATIONS")
        clamp = get_setting("WEIGHT_CLAMP")
        converged = clamped = False
        gradient_norm = np.inf
        iterations = 0

        for iterations in range(1, max_iterations + 1):
            probabilities = expit(design @ weights)
            gradient = design.T @ (targets - probabilities)
            gradient_norm = float(np.linalg.norm(gradient)) / rows
            if gradient_norm < tolerance:
                converged = True
                break

            curvature = probabilities * (1.0 - probabilities)
            hessian = design.T @ (design * curvature[:, np.newaxis])
            try:
                step = np.linalg.solve(hessian, gradient)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(hessian, gradient, rcond=None)[0]
            if not np.all(np.isfinite(step)):
                raise NumericalError(f"Newton step for node {label.relation} is not finite at iteration {iterations}")

            current = LearningService._objective(design, targets, weights)
            scale = 1.0
            for _ in range(30):
                if LearningService._objective(design, targets, weights + scale * step) >= current:
                    break
                scale /= 2.0
            weights = weights + scale * step

            if np.any(np.abs(weights) > clamp):
                weights = np.clip(weights, -clamp, clamp)
                clamped = True
                logger.warning(
                    f"Weights of node {label.relation} are unbounded on this data; clamped to +/-{clamp}"
                )
                break

        if not converged and not clamped:
            logger.warning(
                f"Node {label.relation} did not converge in {max_iterations} iterations "
                f"(gradient norm {gradient_norm:.3g})"
            )
        logger.info(f"Fitted node {label.relation} in {iterations} iterations: {np.round(weights, 6).tolist()}")
        return NodeFit(label.relation, tuple(float(w) for w in weights), iterations, gradient_norm, converged, clamped, rows)


    @staticmethod
    def fit_model(structure: RlrModel, batch: SampleBatch) -> tuple[RlrModel, list[NodeFit]]:
        """Fit every node independently; the structure's own weights are ignored."""

        RlrService.ensure_valid(structure)
        if batch.signature.relations != structure.signature.relations:
            raise ModelDefinitionError("sample batch and model structure have different signatures")

        fits = [LearningService.fit_node(label, batch) for label in structure.labels]
        labels = tuple(
            label.update(conditions=tuple(
                condition.update(weight=weight) for condition, weight in zip(label.conditions, fit.weights)
            ))
            for label, fit in zip(structure.labels, fits)
        )
        return structure.with_labels(labels), fits


    @staticmethod
    def learn_weights(structure: RlrModel, batch: SampleBatch) -> RlrModel:
        return LearningService.fit_model(structure, batch)[0]
