# Built-in
import math

# External
from scipy.special import expit
import numpy as np
import pytest

# Internal
from cmn.base_test import TestClassBase
from cmn.errors import ModelDefinitionError, NumericalError, RepositoryError
from logic.models import And, Atom, Constant, DomainAssignment, Element, Variable, World
from logic.parser import parse_model, pretty_print
from rlr.learning import LearningService
from rlr.models import Condition, NodeLabel, SampleBatch, Semantics
from rlr.repo import SampleRepository
from rlr.sampling import SamplingService
from rlr.service import RlrService

PERSON = "person"
x, y = Variable("x", PERSON), Variable("y", PERSON)

ROOT_ONLY = "sort person; pred R(person); rlr { node R(x) { 0.5 : true; } }"
UNSCALED = "sort person; pred R(person); prop P; rlr { semantics: unscaled; node R(x) { 0.0 : true; } node P { 1.0 : R(y); } }"


def e(i: int) -> Element:
    return Element(f"e{i}", PERSON)


def sizes(n: int) -> DomainAssignment:
    return DomainAssignment.from_sizes({PERSON: n})


class ValidateTests(TestClassBase):

############
# POSITIVE #
############

    def test_shipped_models_are_valid(self) -> None:
        for name in ("projectivity.rlr", "testbed.rlr", "lessons.rlr", "pollution-mixed.rlr"):
            with self.subTest(model=name):
                _, model = self.load_model(name)
                self.assertEqual(RlrService.validate(model), [])


    def test_normalize_absorbs_absent_raw_variable(self) -> None:
        """
        GIVEN a raw condition of weight 0.5 summing over z, which its formula does not mention
        WHEN variable sets are normalized with |D_z| = 4
        THEN z is dropped and the weight becomes 2.0.
        """
        _, model = parse_model(
            "sort person; pred R(person); pred Q(person);"
            "rlr { node R(x) { 0.0 : true; } node Q(x) { 0.5 raw : R(x) over {z: person}; } }"
        )

        normalized = RlrService.normalize_variable_sets(model, sizes(4))

        condition = normalized.label("Q").conditions[0]
        self.assertEqual(condition.variables, ())
        assert condition.weight == pytest.approx(2.0)


    def test_normalize_keeps_proportional_weight(self) -> None:
        _, model = parse_model(
            "sort person; pred R(person); pred Q(person);"
            "rlr { node R(x) { 0.0 : true; } node Q(x) { 0.5 : R(x) over {z}; } }"
        )

        condition = RlrService.normalize_variable_sets(model).label("Q").conditions[0]

        assert condition.variables == () and condition.weight == 0.5


    def test_normalize_preserves_distribution(self) -> None:
        _, model = parse_model(
            "sort person; pred R(person); pred Q(person);"
            "rlr { node R(x) { 0.3 : true; } node Q(x) { 0.5 raw : R(x) over {z}; -0.2 : R(y) over {z}; } }"
        )
        normalized = RlrService.normalize_variable_sets(model, sizes(2))

        np.testing.assert_allclose(
            RlrService.distribution(model, sizes(2)).probabilities(),
            RlrService.distribution(normalized, sizes(2)).probabilities(),
            atol=1e-12,
        )

############
# NEGATIVE #
############

    def test_cycle(self) -> None:
        _, model = parse_model(
            "sort person; pred R(person); pred Q(person);"
            "rlr { node R(x) { 1.0 : Q(x); } node Q(x) { 1.0 : R(x); } }"
        )

        violations = RlrService.validate(model)

        self.assertEqual([v.kind for v in violations], ["cycle"])
        assert "R -> Q -> R" in str(violations[0]) or "Q -> R -> Q" in str(violations[0])
        with pytest.raises(ModelDefinitionError, match="cycle"):
            RlrService.ensure_valid(model)


    def test_summed_variable_in_head(self) -> None:
        _, model = parse_model(
            "sort person; pred R(person); pred Q(person);"
            "rlr { node R(x) { 0.0 : true; } node Q(x) { 1.0 : R(x) over {x}; } }"
        )

        violations = RlrService.validate(model)

        self.assertEqual([(v.kind, v.node, v.condition) for v in violations], [("condition-1", "Q", 1)])


    def test_loose_variable(self) -> None:
        _, model = self.load_model("projectivity.rlr")
        label = model.label("Q")
        loose = label.update(conditions=(Condition(Atom("R", (y,)), 1.0, ()),))

        violations = RlrService.validate(model.with_labels((model.label("R"), loose)))

        self.assertEqual([v.kind for v in violations], ["condition-2"])
        assert "y" in violations[0].message


    def test_root_with_several_conditions(self) -> None:
        _, model = parse_model("sort person; pred R(person); rlr { node R(x) { 0.5 : true; 0.3 : true; } }")

        self.assertEqual([v.kind for v in RlrService.validate(model)], ["root"])


    def test_declared_parents_must_match(self) -> None:
        _, model = parse_model(
            "sort person; pred R(person); pred S(person); pred Q(person);"
            "rlr { node R(x) { 0.0 : true; } node S(x) { 0.0 : true; } node Q(x) { parents S; 1.0 : R(y); } }"
        )

        self.assertEqual([v.kind for v in RlrService.validate(model)], ["parents"])


    def test_missing_node(self) -> None:
        _, model = parse_model("sort person; pred R(person); pred Q(person); rlr { node R(x) { 0.0 : true; } }")

        self.assertEqual([(v.kind, v.node) for v in RlrService.validate(model)], [("missing-node", "Q")])


    def test_raw_normalization_needs_domains(self) -> None:
        _, model = parse_model(
            "sort person; pred R(person); pred Q(person);"
            "rlr { node R(x) { 0.0 : true; } node Q(x) { 0.5 raw : R(x) over {z}; } }"
        )

        with pytest.raises(ModelDefinitionError, match="needs domain sizes"):
            RlrService.normalize_variable_sets(model)


class ConditionalProbabilityTests(TestClassBase):

    def test_proportion_of_parent(self) -> None:
        signature, model = self.load_model("projectivity.rlr")
        world = World.from_atoms(signature, sizes(2), [("R", ("e1",))])

        for element in (e(1), e(2)):
            assert RlrService.conditional_probability(model, "Q", [element], world) == pytest.approx(expit(0.5))


    def test_proposition_and_pair_condition(self) -> None:
        """S(x) { -0.5 : true; 0.5 : P; 1.0 : R(x) & R(y) } with R(e1) the only true R and P true."""

        signature, model = self.load_model("testbed.rlr")
        world = World.from_atoms(signature, sizes(2), [("R", ("e1",)), ("P", ())])

        assert RlrService.conditional_probability(model, "S", [e(1)], world) == pytest.approx(expit(0.5))
        assert RlrService.conditional_probability(model, "S", [e(2)], world) == pytest.approx(0.5)


    def test_root_ignores_world(self) -> None:
        signature, model = self.load_model("testbed.rlr")
        world = World.from_atoms(signature, sizes(3), [])

        assert RlrService.conditional_probability(model, "R", [e(3)], world) == pytest.approx(expit(0.5))


    def test_wrong_arity(self) -> None:
        signature, model = self.load_model("projectivity.rlr")

        with pytest.raises(ModelDefinitionError, match="takes 1 elements"):
            RlrService.conditional_probability(model, "Q", [], World.from_atoms(signature, sizes(1), []))


class DistributionTests(TestClassBase):

    logger_target = "rlr.service.logger"

    def setUp(self) -> None:
        super().setUp()
        self.signature, self.model = self.load_model("projectivity.rlr")

    def test_world_probability(self) -> None:
        world = World.from_atoms(self.signature, sizes(1), [("R", ("e1",)), ("Q", ("e1",))])

        assert RlrService.world_probability(self.model, world) == pytest.approx(0.5 * expit(1.0), abs=1e-12)


    def test_normalized(self) -> None:
        for n in (1, 2, 3):
            distribution = RlrService.distribution(self.model, sizes(n))
            self.assertAlmostEqual(float(distribution.probabilities().sum()), 1.0, places=12)
            self.assertAlmostEqual(distribution.log_partition, 0.0, places=12)
        self.assert_logs_info("Enumerated 64 worlds of the RLR model over person=3", call_count=3)


    def test_query_is_not_projective(self) -> None:
        """
        GIVEN R(x) ~ Bernoulli(1/2) and Q(x) with the proportion of R as its only condition
        WHEN P(Q(e1) & R(e1)) is computed on one and two elements
        THEN it drops from 0.5 sigmoid(1) to the mixture with sigmoid(1/2).
        """
        query = And(Atom("Q", (e(1),)), Atom("R", (e(1),)))

        at_one = RlrService.query_probability(self.model, sizes(1), query)
        at_two = RlrService.query_probability(self.model, sizes(2), query)

        assert at_one == pytest.approx(0.5 * expit(1.0), abs=1e-12)
        assert at_two == pytest.approx(0.5 * (0.5 * expit(1.0) + 0.5 * expit(0.5)), abs=1e-12)
        assert at_one == pytest.approx(0.36553, abs=1e-5)
        assert at_two == pytest.approx(0.33838, abs=1e-5)


    def test_evidence(self) -> None:
        value = RlrService.query_probability(self.model, sizes(2), Atom("Q", (e(1),)), And(Atom("R", (e(1),)), Atom("R", (e(2),))))

        assert value == pytest.approx(expit(1.0), abs=1e-12)


    def test_invalid_model_is_not_enumerated(self) -> None:
        _, model = parse_model("sort person; pred R(person); rlr { node R(x) { 1.0 : R(y); } }")

        with pytest.raises(ModelDefinitionError, match="cycle"):
            RlrService.distribution(model, sizes(1))


class ProjectivityGapTests(TestClassBase):

    def test_root_only_model_is_projective(self) -> None:
        _, model = parse_model(ROOT_ONLY)

        assert RlrService.projectivity_gap(model, sizes(1), sizes(3)) < 1e-12


    def test_proportion_child_is_not(self) -> None:
        _, model = self.load_model("projectivity.rlr")

        gap = RlrService.projectivity_gap(model, sizes(1), sizes(2))

        assert gap >= 0.5 * expit(1.0) - 0.5 * (0.5 * expit(1.0) + 0.5 * expit(0.5)) - 1e-12


    def test_sub_domain_must_embed(self) -> None:
        _, model = parse_model(ROOT_ONLY)

        with pytest.raises(ModelDefinitionError, match="larger than the domain"):
            RlrService.projectivity_gap(model, sizes(3), sizes(2))


class ConvertTests(TestClassBase):

    def test_unscaled_to_domain_aware(self) -> None:
        signature, model = parse_model(UNSCALED)

        converted = RlrService.convert(model, sizes(4), Semantics.DOMAIN_AWARE)

        condition = converted.label("P").conditions[0]
        assert condition.proportional and condition.weight == pytest.approx(4.0)
        self.assertEqual(converted.semantics, Semantics.DOMAIN_AWARE)
        assert "4.0 prop : R(y);" in pretty_print(signature, converted)


    def test_domain_aware_to_unscaled(self) -> None:
        _, model = self.load_model("projectivity.rlr")

        converted = RlrService.convert(model, sizes(4), Semantics.UNSCALED)

        condition = converted.label("Q").conditions[0]
        assert not condition.proportional and condition.weight == pytest.approx(0.25)
        # Conditions without summed variables keep their weight
        assert converted.label("R").conditions[0].weight == 0.0


    def test_round_trip_preserves_distribution(self) -> None:
        _, model = self.load_model("pollution-mixed.rlr")
        domains = DomainAssignment.from_sizes({"tributary": 2, "human": 2})
        self.assertEqual(model.semantics, Semantics.MIXED)

        scaled = RlrService.convert(model, domains, Semantics.DOMAIN_AWARE)
        unscaled = RlrService.convert(scaled, domains, Semantics.UNSCALED)

        expected = RlrService.distribution(model, domains).probabilities()
        for converted in (scaled, unscaled):
            np.testing.assert_allclose(RlrService.distribution(converted, domains).probabilities(), expected, atol=1e-12)


    def test_mixed_target(self) -> None:
        _, model = self.load_model("projectivity.rlr")

        with pytest.raises(ModelDefinitionError, match="conversion targets"):
            RlrService.convert(model, sizes(2), Semantics.MIXED)


class GenericExtensionTests(TestClassBase):

    def test_fresh_constants_skip_taken_names(self) -> None:
        constants = RlrService.fresh_constants([PERSON, "course"], taken=["a1", "a3"])

        self.assertEqual(constants, (Constant("a2", PERSON), Constant("a4", "course")))


    def test_one_constant(self) -> None:
        """
        GIVEN the two-node model R(x), Q(x) with the proportion of R as Q's condition
        WHEN it is extended by one person constant
        THEN propositions R_a1 and Q_a1 appear with the labels of R and Q.
        """
        _, model = self.load_model("projectivity.rlr")

        extended = RlrService.generic_extension(model, [PERSON])

        self.assertEqual([r.name for r in extended.signature.relations], ["R", "Q", "R_a1", "Q_a1"])
        self.assertEqual(extended.label("Q_a1").conditions[0].formula, Atom("R", (y,)))
        self.assertEqual(extended.propositions, ["R_a1", "Q_a1"])
        self.assertEqual(RlrService.validate(extended), [])


    def test_constant_substituted_into_conditions(self) -> None:
        _, model = self.load_model("testbed.rlr")

        extended = RlrService.generic_extension(model, [PERSON])

        self.assertEqual(extended.label("S_a1").conditions[2].formula, And(Atom("R_a1", ()), Atom("R", (y,))))
        self.assertEqual(extended.label("S").conditions[2].formula, And(Atom("R", (x,)), Atom("R", (y,))))


    def test_binary_relation_placements(self) -> None:
        _, model = self.load_model("lessons.rlr")

        extended = RlrService.generic_extension(model, ["student", "course"])

        names = {r.name: r.sorts for r in extended.signature.relations}
        assert names["Takes_a1_"] == ("course",)
        assert names["Takes__a2"] == ("student",)
        assert names["Takes_a1_a2"] == ()
        self.assertEqual(RlrService.validate(extended), [])


    def test_undeclared_sort(self) -> None:
        _, model = self.load_model("projectivity.rlr")

        with pytest.raises(ModelDefinitionError, match="undeclared sort"):
            RlrService.extend_by_constants(model, [Constant("a1", "river")])


class SamplingTests(TestClassBase):

    logger_target = "rlr.sampling.logger"

    def setUp(self) -> None:
        super().setUp()
        self.signature, self.model = self.load_model("testbed.rlr")

    def test_same_seed_same_batch(self) -> None:
        first = SamplingService.forward_sample(self.model, sizes(5), seed=11, count=20)
        second = SamplingService.forward_sample(self.model, sizes(5), seed=11, count=20)
        other = SamplingService.forward_sample(self.model, sizes(5), seed=12, count=20)

        self.assertEqual(first.worlds, second.worlds)
        self.assertNotEqual(first.worlds, other.worlds)
        self.assertEqual(first.seed, 11)
        self.assert_logs_info("Sampled 20 worlds over person=5 with seed 12")


    def test_samples_regenerate_individually(self) -> None:
        longer = SamplingService.forward_sample(self.model, sizes(4), seed=5, count=8)
        shorter = SamplingService.forward_sample(self.model, sizes(4), seed=5, count=3)

        self.assertEqual(longer.worlds[:3], shorter.worlds)


    def test_chunking_does_not_change_samples(self) -> None:
        expected = SamplingService.forward_sample(self.model, sizes(4), seed=2, count=10)

        with self.settings(RELSCALE={"SAMPLING_CELL_BUDGET": 40}):
            self.assertEqual(len(list(SamplingService.chunks(10, 16))), 5)
            chunked = SamplingService.forward_sample(self.model, sizes(4), seed=2, count=10)

        self.assertEqual(chunked.worlds, expected.worlds)


    def test_root_frequency(self) -> None:
        batch = SamplingService.forward_sample(self.model, sizes(5), seed=1, count=2000)

        assert float(batch.stacked()["R"].mean()) == pytest.approx(expit(0.5), abs=0.02)


    def test_frequency_matches_exact_query(self) -> None:
        _, model = self.load_model("projectivity.rlr")

        tables = SamplingService.forward_sample(model, sizes(1), seed=3, count=10_000).stacked()

        frequency = float((tables["Q"] & tables["R"]).mean())
        assert frequency == pytest.approx(0.5 * expit(1.0), abs=0.02)


    def test_substructures(self) -> None:
        batch = SamplingService.forward_sample(self.model, sizes(5), seed=3, count=50)

        cut = SamplingService.sample_substructures(batch, sizes(2), seed=3)

        self.assertEqual(str(cut.domains), "person=2")
        self.assertEqual(len(cut), 50)
        for original, sub in zip(batch.worlds, cut.worlds):
            self.assertEqual(bool(sub.tables["P"]), bool(original.tables["P"]))
        chosen = np.sort(np.random.default_rng([3, 0]).choice(5, 2, replace=False))
        np.testing.assert_array_equal(cut.worlds[0].tables["R"], batch.worlds[0].tables["R"][chosen])


    def test_substructure_larger_than_domain(self) -> None:
        batch = SamplingService.forward_sample(self.model, sizes(2), seed=3, count=2)

        with pytest.raises(ModelDefinitionError, match="exceed the domain size 2"):
            SamplingService.sample_substructures(batch, sizes(3), seed=3)


    def test_negative_seed(self) -> None:
        with pytest.raises(ModelDefinitionError, match="non-negative"):
            SamplingService.forward_sample(self.model, sizes(2), seed=-1, count=2)


class SampleRepositoryTests(TestClassBase):

    def setUp(self) -> None:
        super().setUp()
        self.signature, self.model = self.load_model("projectivity.rlr")
        self.repo = SampleRepository()

    def test_decode(self) -> None:
        batch = self.repo.decode("# seed=7 sizes=person=2\nR(e1);Q(e2)\n\n", signature=self.signature)

        self.assertEqual(batch.seed, 7)
        self.assertEqual(str(batch.domains), "person=2")
        self.assertEqual([str(world) for world in batch.worlds], ["R(e1);Q(e2)", ""])


    def test_encode_writes_header(self) -> None:
        batch = SamplingService.forward_sample(self.model, sizes(3), seed=9, count=4)

        text = self.repo.encode(batch)

        assert text.startswith("# seed=9 sizes=person=3\n")
        self.assertEqual(self.repo.decode(text, signature=self.signature).worlds, batch.worlds)


    def test_unseeded_header(self) -> None:
        batch = self.repo.decode("# seed=none sizes=person=1\n", signature=self.signature)

        assert batch.seed is None and len(batch) == 0


    def test_errors(self) -> None:
        cases = [
            ("", "sample file is empty"),
            ("seed=7 sizes=person=2\n", "line 1: malformed sample header"),
            ("# seed=7 sizes=person=2\nR(e1\n", "line 2: malformed world record"),
            ("# seed=7 sizes=person=2\n\nR(e5)\n", "line 3: element 'e5' is outside"),
            ("# seed=7 sizes=person=2\nZ(e1)\n", "line 2: undeclared relation symbol 'Z'"),
        ]
        for text, message in cases:
            with self.subTest(text=text):
                with pytest.raises(RepositoryError, match=message):
                    self.repo.decode(text, signature=self.signature)


    def test_signature_required(self) -> None:
        with pytest.raises(RepositoryError, match="needs the model signature"):
            self.repo.decode("# seed=7 sizes=person=2\n")


class LearningTests(TestClassBase):

    logger_target = "rlr.learning.logger"

    def setUp(self) -> None:
        super().setUp()
        self.signature, self.model = self.load_model("projectivity.rlr")

    def test_recovers_generating_weights(self) -> None:
        """
        GIVEN 500 worlds on 20 elements sampled with seed 7 from R ~ 0 and Q ~ 1.0 * proportion of R
        WHEN every node is fitted
        THEN both weights are within 0.2 and the fit is at least as likely as the truth.
        """
        batch = SamplingService.forward_sample(self.model, sizes(20), seed=7, count=500)

        learned, fits = LearningService.fit_model(self.model, batch)

        assert learned.label("R").conditions[0].weight == pytest.approx(0.0, abs=0.2)
        assert learned.label("Q").conditions[0].weight == pytest.approx(1.0, abs=0.2)
        assert all(fit.converged and not fit.clamped for fit in fits)
        self.assertEqual([fit.rows for fit in fits], [10_000, 10_000])
        assert LearningService.log_likelihood(learned, batch) >= LearningService.log_likelihood(self.model, batch) - 1e-6
        self.assert_no_warnings_logged()


    def test_zero_model(self) -> None:
        zero = self.model.with_labels(tuple(
            label.update(conditions=tuple(c.update(weight=0.0) for c in label.conditions)) for label in self.model.labels
        ))
        batch = SamplingService.forward_sample(zero, sizes(20), seed=13, count=2000)

        learned = LearningService.learn_weights(self.model, batch)

        for label in learned.labels:
            assert label.conditions[0].weight == pytest.approx(0.0, abs=0.1)


    def test_separable_data_is_clamped(self) -> None:
        signature, model = parse_model(ROOT_ONLY)
        everything = [("R", (f"e{i}",)) for i in (1, 2, 3)]
        batch = SampleBatch(signature, sizes(3), tuple(World.from_atoms(signature, sizes(3), everything) for _ in range(10)))

        with self.settings(RELSCALE={"LEARNING_TOLERANCE": 0.0}):
            fit = LearningService.fit_node(model.label("R"), batch)

        assert fit.clamped and not fit.converged
        self.assertEqual(fit.weights, (30.0,))
        self.assert_logs_warning("unbounded on this data", call_count=1)


    def test_iteration_limit_is_reported(self) -> None:
        batch = SamplingService.forward_sample(self.model, sizes(5), seed=1, count=20)

        with self.settings(RELSCALE={"LEARNING_MAX_ITERATIONS": 1}):
            fit = LearningService.fit_node(self.model.label("Q"), batch)

        assert not fit.converged
        self.assertEqual(fit.iterations, 1)
        self.assert_logs_warning("did not converge in 1 iterations")


    def test_tolerance_applies_to_mean_gradient(self) -> None:
        """
        GIVEN 10,000 rows for Q, whose single feature lies in [0, 1]
        WHEN the tolerance is 0.6, above the largest possible per-row gradient at zero weights
        THEN the fit stops before any Newton step and reports the per-row gradient norm.
        """
        batch = SamplingService.forward_sample(self.model, sizes(20), seed=7, count=500)
        design, targets = LearningService._design(self.model.label("Q"), batch)

        with self.settings(RELSCALE={"LEARNING_TOLERANCE": 0.6}):
            fit = LearningService.fit_node(self.model.label("Q"), batch)

        assert fit.converged and not fit.clamped
        self.assertEqual((fit.iterations, fit.weights), (1, (0.0,)))
        expected = float(np.linalg.norm(design.T @ (targets - 0.5))) / fit.rows
        assert fit.gradient_norm == pytest.approx(expected)
        assert fit.gradient_norm * fit.rows > 0.6


    def test_node_without_conditions(self) -> None:
        batch = SamplingService.forward_sample(self.model, sizes(2), seed=1, count=3)

        fit = LearningService.fit_node(NodeLabel(Atom("R", (x,))), batch)

        assert fit.converged and fit.weights == ()


    def test_empty_batch(self) -> None:
        empty = SampleBatch(self.signature, sizes(2))

        assert LearningService.log_likelihood(self.model, empty) == 0.0
        with pytest.raises(ModelDefinitionError, match="empty batch"):
            LearningService.fit_node(self.model.label("Q"), empty)


    def test_non_finite_step(self) -> None:
        batch = SamplingService.forward_sample(self.model, sizes(3), seed=2, count=10)
        self._start_patch_with_cleanup("numpy.linalg.solve", return_value=np.array([np.nan]))

        with pytest.raises(NumericalError, match="not finite at iteration 1") as raised:
            LearningService.fit_node(self.model.label("Q"), batch)

        self.assertEqual(raised.value.exit_code, 3)


    def test_signature_mismatch(self) -> None:
        _, other = self.load_model("testbed.rlr")
        batch = SamplingService.forward_sample(other, sizes(2), seed=1, count=2)

        with pytest.raises(ModelDefinitionError, match="different signatures"):
            LearningService.fit_model(self.model, batch)


    def test_log_likelihood_matches_world_probabilities(self) -> None:
        batch = SamplingService.forward_sample(self.model, sizes(3), seed=4, count=6)

        expected = math.fsum(RlrService.world_log_probability(self.model, world) for world in batch.worlds)

        assert LearningService.log_likelihood(self.model, batch) == pytest.approx(expected, abs=1e-10)
