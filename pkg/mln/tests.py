# Built-in
import math

# External
from hypothesis import given, settings, strategies as st
from scipy.special import expit
import numpy as np
import pytest

# Internal
from cmn.base_test import TestClassBase
from cmn.errors import ConditioningError, ModelDefinitionError, NotFactorizableError, StateSpaceError
from logic.models import (
    And,
    Atom,
    Bottom,
    DomainAssignment,
    Element,
    Implies,
    Not,
    Or,
    RelationSymbol,
    Signature,
    Top,
    Variable,
    World,
)
from logic.parser import parse_model
from mln.lifted import FactorizedEvaluator
from mln.models import Aggregator, MlnModel, Scaling, WeightedFormula
from mln.service import MlnService

PERSON = "person"
x, y, z = (Variable(name, PERSON) for name in "xyz")
P = Atom("P", ())


def e(i: int) -> Element:
    return Element(f"e{i}", PERSON)


def sizes(n: int) -> DomainAssignment:
    return DomainAssignment.from_sizes({PERSON: n})


def ex1_closed_form(w: float, n: int) -> float:
    """P(P) for {P -> R(x) : w} on n elements."""
    numerator = (1 + math.exp(w)) ** n
    return numerator / (numerator + 2 ** n * math.exp(w * n))


class ConnectionVectorTests(TestClassBase):

    def test_shared_variable_gives_ones(self) -> None:
        vector = MlnService.connection_vector(And(Atom("R", (x,)), Atom("Q", (x,))), sizes(6))

        self.assertEqual(vector.entries, (1, 1))


    def test_independent_variables(self) -> None:
        vector = MlnService.connection_vector(And(Atom("R", (x,)), Atom("Q", (y,))), sizes(4))

        self.assertEqual(vector.entries, (4, 4))


    def test_three_literals_over_two_sorts(self) -> None:
        """
        GIVEN P(x) & Q(x, y) & R(z) with |D_x| = 2, |D_y| = 3, |D_z| = 5
        WHEN the connection vector is computed
        THEN the entries are |D_y||D_z|, |D_z| and |D_x||D_y|.
        """
        px, qy, rz = Variable("x", "a"), Variable("y", "b"), Variable("z", "c")
        formula = And(And(Atom("P", (px,)), Atom("Q", (px, qy))), Atom("R", (rz,)))

        vector = MlnService.connection_vector(formula, DomainAssignment.from_sizes({"a": 2, "b": 3, "c": 5}))

        self.assertEqual(vector.entries, (15, 5, 6))


class ScalingFactorTests(TestClassBase):

    def test_max_examples(self) -> None:
        assert MlnService.scaling_factor(And(Atom("R", (x,)), Atom("Q", (y,))), sizes(5)) == 5
        assert MlnService.scaling_factor(Implies(P, Atom("R", (x,))), sizes(7)) == 7
        assert MlnService.scaling_factor(And(And(P, Atom("Q", (x,))), Atom("R", (x, y))), sizes(4)) == 16


    def test_other_aggregators(self) -> None:
        formula = Implies(P, Atom("R", (x,)))  # entries (n, 1)

        assert MlnService.scaling_factor(formula, sizes(4), Aggregator.SUM) == 5
        assert MlnService.scaling_factor(formula, sizes(4), Aggregator.GEOMEAN) == pytest.approx(2.0)
        assert MlnService.scaling_factor(formula, sizes(4), Aggregator.MEAN) == pytest.approx(2.5)


    def test_no_literals(self) -> None:
        assert MlnService.scaling_factor(Top(), sizes(9)) == 1.0


    @settings(max_examples=50, derandomize=True, deadline=None)
    @given(n=st.integers(1, 6), m=st.integers(1, 6))
    def test_aggregator_ordering(self, n: int, m: int) -> None:
        formula = And(Atom("R", (Variable("x", "a"),)), Atom("Q", (Variable("x", "a"), Variable("y", "b"))))
        domains = DomainAssignment.from_sizes({"a": n, "b": m})
        entries = MlnService.connection_vector(formula, domains).entries

        total = MlnService.scaling_factor(formula, domains, Aggregator.SUM)
        largest = MlnService.scaling_factor(formula, domains, Aggregator.MAX)
        geomean = MlnService.scaling_factor(formula, domains, Aggregator.GEOMEAN)
        assert total >= largest >= geomean - 1e-12 >= min(entries) - 1e-12


class WorldLogWeightTests(TestClassBase):

    def setUp(self) -> None:
        super().setUp()
        self.signature, self.ex1 = self.load_model("ex1.mln")
        _, self.ex1_da = self.load_model("ex1-da.mln")

    def test_zero_weights(self) -> None:
        model = self.ex1.update(formulas=(WeightedFormula(Implies(P, Atom("R", (x,))), 0.0),))
        world = World.from_atoms(self.signature, sizes(2), [("P", ())])

        assert MlnService.world_log_weight(model, world) == 0.0


    def test_shared_variable_count(self) -> None:
        signature = Signature((PERSON,), (RelationSymbol("R", (PERSON,)), RelationSymbol("Q", (PERSON,))))
        model = MlnModel(signature, (WeightedFormula(And(Atom("R", (x,)), Atom("Q", (x,))), 0.7),))
        world = World.from_atoms(signature, sizes(3), [("R", ("e1",)), ("Q", ("e1",)), ("R", ("e2",)), ("Q", ("e2",))])

        self.assertAlmostEqual(MlnService.world_log_weight(model, world), 1.4)


    def test_domain_aware_scaling(self) -> None:
        """P true, two of three R's true: two of the three groundings of P -> R(x) hold."""

        world = World.from_atoms(self.signature, sizes(3), [("P", ()), ("R", ("e1",)), ("R", ("e3",))])

        self.assertAlmostEqual(MlnService.world_log_weight(self.ex1_da, world), 2 / 3)
        self.assertAlmostEqual(MlnService.world_log_weight(self.ex1, world), 2.0)


class DistributionTests(TestClassBase):

    logger_target = "mln.service.logger"

    def setUp(self) -> None:
        super().setUp()
        self.signature, self.ex1 = self.load_model("ex1.mln")

    def test_four_world_oracle(self) -> None:
        """
        GIVEN {P -> R(x) : 1} on one element
        WHEN all four worlds are enumerated
        THEN Z = 3e + 1 and the marginals follow from it.
        """
        distribution = MlnService.distribution(self.ex1, sizes(1))

        self.assertAlmostEqual(math.exp(distribution.log_partition), 3 * math.e + 1, places=12)
        assert distribution.marginal(P) == pytest.approx((math.e + 1) / (3 * math.e + 1), abs=1e-12)
        assert distribution.marginal(Atom("R", (e(1),))) == pytest.approx(2 * math.e / (3 * math.e + 1), abs=1e-12)
        self.mock_info_logger.assert_called_once()


    def test_zero_weights_give_uniform_distribution(self) -> None:
        model = self.ex1.update(formulas=(WeightedFormula(Implies(P, Atom("R", (x,))), 0.0),))

        probabilities = MlnService.distribution(model, sizes(3)).probabilities()

        np.testing.assert_allclose(probabilities, np.full(16, 1 / 16), atol=1e-15)


    def test_cap(self) -> None:
        with pytest.raises(StateSpaceError, match="state space too large"):
            MlnService.distribution(self.ex1, sizes(30))


    def test_items_follow_enumeration_order(self) -> None:
        worlds = [str(world) for world, _ in MlnService.distribution(self.ex1, sizes(1)).items()]

        self.assertEqual(worlds, ["", "P", "R(e1)", "P;R(e1)"])


class QueryProbabilityTests(TestClassBase):

    def setUp(self) -> None:
        super().setUp()
        _, self.ex1 = self.load_model("ex1.mln")

    def test_top_and_bottom(self) -> None:
        assert MlnService.query_probability(self.ex1, sizes(2), Top()) == pytest.approx(1.0)
        assert MlnService.query_probability(self.ex1, sizes(2), Bottom()) == 0.0


    def test_conditional_on_proposition(self) -> None:
        value = MlnService.query_probability(self.ex1, sizes(1), Atom("R", (e(1),)), P)

        assert value == pytest.approx(expit(1.0), abs=1e-12)


    def test_zero_probability_evidence(self) -> None:
        with pytest.raises(ConditioningError, match="probability zero"):
            MlnService.query_probability(self.ex1, sizes(1), P, And(P, Not(P)))


    def test_formula_order_is_irrelevant(self) -> None:
        _, model = parse_model("prop P; pred R(person); mln { 1.0 : P -> R(x); -0.4 : R(x) & P; 0.3 : P; }")
        query = Or(Atom("R", (e(1),)), P)

        original = MlnService.query_probability(model, sizes(2), query)
        permuted = MlnService.query_probability(model.permuted([2, 0, 1]), sizes(2), query)

        assert original == pytest.approx(permuted, abs=1e-12)


    def test_scaling_with_unit_connection_vector_changes_nothing(self) -> None:
        _, unscaled = parse_model("pred R(person); pred Q(person); mln { 1.3 : R(x) & Q(x); }")
        scaled = unscaled.update(scaling=Scaling.DOMAIN_AWARE)

        np.testing.assert_allclose(
            MlnService.distribution(unscaled, sizes(3)).probabilities(),
            MlnService.distribution(scaled, sizes(3)).probabilities(),
            atol=1e-12,
        )


class DeltaTests(TestClassBase):

    def setUp(self) -> None:
        super().setUp()
        self.signature, self.ex1 = self.load_model("ex1.mln")
        self.world = World.from_atoms(self.signature, sizes(3), [("P", ()), ("R", ("e2",))])

    def test_delta_of_r_is_weight_times_p(self) -> None:
        assert MlnService.delta(self.ex1, self.world, Atom("R", (e(1),))) == pytest.approx(1.0)
        assert MlnService.delta(self.ex1, self.world.with_value(P, False), Atom("R", (e(1),))) == 0.0


    def test_delta_of_p_counts_false_r(self) -> None:
        assert MlnService.delta(self.ex1, self.world, P) == pytest.approx(-2.0)


    def test_flip_pair_symmetry(self) -> None:
        atom = Atom("R", (e(2),))
        values = {
            MlnService.delta(self.ex1, world, atom)
            for world in (self.world, self.world.with_value(atom, True), self.world.with_value(atom, False))
        }

        assert len(values) == 1


class SigmoidIdentityTests(TestClassBase):

    def test_examples(self) -> None:
        _, ex1 = self.load_model("ex1.mln")
        _, ex2_da = self.load_model("ex2-da.mln")

        for model, atom in ((ex1, Atom("R", (e(1),))), (ex2_da, Atom("Q", (e(1),)))):
            lhs, rhs = MlnService.verify_sigmoid_identity(model, sizes(2), atom)
            assert abs(lhs - rhs) <= 1e-10


    def test_zero_weights(self) -> None:
        _, ex1 = self.load_model("ex1.mln")
        model = ex1.update(formulas=(WeightedFormula(ex1.formulas[0].formula, 0.0),))

        lhs, rhs = MlnService.verify_sigmoid_identity(model, sizes(2), P)

        assert lhs == pytest.approx(0.5) and rhs == pytest.approx(0.5)


    @settings(max_examples=200, derandomize=True, deadline=None)
    @given(
        template=st.sampled_from([
            Implies(P, Atom("R", (x,))),
            And(Atom("R", (x,)), Atom("S", (x, y))),
            Or(Not(Atom("S", (x, y))), Atom("S", (y, x))),
            Implies(Atom("R", (y,)), P),
            And(P, Atom("S", (x, x))),
        ]),
        weights=st.lists(st.floats(-2.0, 2.0), min_size=2, max_size=2),
        scaling=st.sampled_from(list(Scaling)),
        n=st.integers(1, 2),
        atom=st.sampled_from([P, Atom("R", (Element("e1", PERSON),)), Atom("S", (Element("e1", PERSON), Element("e1", PERSON)))]),
    )
    def test_identity_on_random_models(self, template, weights, scaling, n, atom) -> None:
        """P(A) equals the expectation of sigmoid(delta_A) for every ground atom."""

        signature = Signature(
            (PERSON,), (RelationSymbol("P", ()), RelationSymbol("R", (PERSON,)), RelationSymbol("S", (PERSON, PERSON)))
        )
        model = MlnModel(
            signature,
            (WeightedFormula(template, weights[0]), WeightedFormula(Or(P, Atom("R", (x,))), weights[1])),
            scaling,
        )

        lhs, rhs = MlnService.verify_sigmoid_identity(model, sizes(n), atom)

        assert abs(lhs - rhs) <= 1e-10


class FactorizedEvaluatorTests(TestClassBase):

    def test_closed_form_for_ex1(self) -> None:
        _, ex1 = self.load_model("ex1.mln")
        evaluator = FactorizedEvaluator(ex1)

        for n in (1, 2, 5, 17, 30):
            with self.subTest(n=n):
                assert evaluator.probability(sizes(n), P) == pytest.approx(ex1_closed_form(1.0, n), rel=1e-9)


    def test_agrees_with_enumeration(self) -> None:
        """
        GIVEN both chain-shaped example families, plain and domain-aware
        WHEN every relation's first ground atom is queried at small n
        THEN the factorized and enumerated values agree to 1e-9.
        """
        for name, n_max in (("ex1.mln", 10), ("ex1-da.mln", 6), ("ex2.mln", 3), ("ex2-da.mln", 3),
                            ("ex1-converse.mln", 6)):
            signature, model = self.load_model(name)
            evaluator = FactorizedEvaluator(model)
            for n in range(1, n_max + 1):
                domains = DomainAssignment.uniform(signature.sorts, n)
                for relation in signature.relations:
                    query = Atom(relation.name, tuple(e(1) for _ in relation.sorts))
                    with self.subTest(model=name, n=n, query=str(query)):
                        expected = MlnService.query_probability(model, domains, query)
                        assert evaluator.probability(domains, query) == pytest.approx(expected, abs=1e-9)


    def test_unused_symbol_is_a_fair_coin(self) -> None:
        _, model = parse_model("prop P; pred R(person); pred U(person); mln { 1.0 : P -> R(x); }")

        assert FactorizedEvaluator(model).probability(sizes(40), Atom("U", (e(3),))) == 0.5


    def test_rejects_non_chain_models(self) -> None:
        _, model = parse_model("pred R(person); pred Q(person); mln { 1.0 : R(x) & Q(y); }")

        with pytest.raises(NotFactorizableError, match="not block-factorizable"):
            FactorizedEvaluator(model)


    def test_rejects_compound_queries(self) -> None:
        _, ex1 = self.load_model("ex1.mln")

        with pytest.raises(NotFactorizableError, match="single ground atoms"):
            FactorizedEvaluator(ex1).probability(sizes(3), And(P, Atom("R", (e(1),))))


class DomainSweepTests(TestClassBase):

    def test_ex1_limits(self) -> None:
        """
        P(P) decreases strictly towards 0 and P(R(x)) - 1/2 is exactly
        P(P) (sigmoid(1) - 1/2) at every n.
        """
        _, ex1 = self.load_model("ex1.mln")
        domains = [sizes(n) for n in range(1, 31)]

        p_rows = MlnService.domain_sweep(ex1, domains, P, engine="factorized")
        r_rows = MlnService.domain_sweep(ex1, domains, Atom("R", (x,)), engine="factorized")

        values = [row.probability for row in p_rows]
        assert all(later < earlier for earlier, later in zip(values, values[1:]))
        assert values[-1] < 1e-4
        for p_row, r_row in zip(p_rows, r_rows):
            assert abs(r_row.probability - 0.5) <= p_row.probability * (expit(1.0) - 0.5) + 1e-12
            assert 0.5 <= r_row.probability <= expit(1.0)
        self.assertEqual([row.n for row in p_rows], list(range(1, 31)))


    def test_domain_aware_sandwich_bounds(self) -> None:
        for name, query in (("ex1-da.mln", Atom("R", (x,))), ("ex2-da.mln", Atom("Q", (x,)))):
            _, model = self.load_model(name)
            enumerated = MlnService.domain_sweep(model, [sizes(n) for n in (1, 2, 3)], query)
            factorized = MlnService.domain_sweep(model, [sizes(n) for n in (10, 25, 50)], query, "factorized")
            for row in enumerated + factorized:
                with self.subTest(model=name, n=row.n):
                    assert 0.5 - 1e-12 <= row.probability <= expit(1.0 / row.n) + 1e-12


    def test_ex2_trend(self) -> None:
        _, ex2 = self.load_model("ex2.mln")
        rows = MlnService.domain_sweep(ex2, [sizes(n) for n in (2, 4, 8, 16)], Atom("Q", (x,)), "factorized")

        values = [row.probability for row in rows]
        assert values == sorted(values) and len(set(values)) == 4
        assert values[-1] > 0.99
        assert values[0] == pytest.approx(MlnService.query_probability(ex2, sizes(2), Atom("Q", (e(1),))), abs=1e-9)


    def test_converse_model_limits(self) -> None:
        """{R(x) -> P}: P(P) grows towards 1 while P(R(x)) falls towards 1/2."""

        _, model = self.load_model("ex1-converse.mln")
        domains = [sizes(n) for n in (1, 5, 20, 60)]

        p_values = [row.probability for row in MlnService.domain_sweep(model, domains, P, "factorized")]
        r_values = [row.probability for row in MlnService.domain_sweep(model, domains, Atom("R", (x,)), "factorized")]

        assert p_values == sorted(p_values) and p_values[-1] > 0.999
        assert r_values[-1] == pytest.approx(0.5, abs=1e-3)


    def test_query_needs_enough_distinct_elements(self) -> None:
        _, ex1 = self.load_model("ex1.mln")

        with pytest.raises(ModelDefinitionError, match="more distinct elements"):
            MlnService.domain_sweep(ex1, [sizes(2), sizes(1)], And(Atom("R", (x,)), Atom("R", (y,))))
