# Built-in
from itertools import product
from typing import Optional

# External
from scipy.special import expit
import pytest

# Internal
from asymptotics.models import PropositionValuation
from asymptotics.service import AsymptoticService, AsymptoticSolver
from cmn.base_test import TestClassBase
from cmn.errors import ConditioningError, ModelDefinitionError, StateSpaceError, UndefinedAsymptoticsError
from logic.models import And, Atom, Constant, DomainAssignment, Element, Not, Top, Variable
from logic.parser import parse_formula, parse_model
from rlr.sampling import SamplingService
from rlr.service import RlrService

PERSON = "person"
x, y = Variable("x", PERSON), Variable("y", PERSON)
Q_LIMIT = expit(0.5)

PROPOSITION_OVER_ROOT = (
    "sort person; pred R(person); prop P;"
    "rlr { node R(x) { 0.0 : true; } node P { 1.0 : R(y); } }"
)


def sizes(n: int) -> DomainAssignment:
    return DomainAssignment.from_sizes({PERSON: n})


def testbed_s_limit(given_r: Optional[bool] = None) -> float:
    """Limit of P(S(x)) in the three-node testbed, optionally given R(x)."""

    q = expit(0.5)
    p = expit(q)
    total = 0.0
    for r, prop in product((True, False), repeat=2):
        if given_r is not None and r != given_r:
            continue
        weight = (p if prop else 1 - p) * (1.0 if given_r is not None else (q if r else 1 - q))
        total += weight * expit(-0.5 + 0.5 * prop + (q if r else 0.0))
    return total


class AsymptoticQueryTests(TestClassBase):

    logger_target = "asymptotics.service.logger"

    def setUp(self) -> None:
        super().setUp()
        self.signature, self.model = self.load_model("projectivity.rlr")

    def query(self, text: str, evidence: Optional[str] = None, name: Optional[str] = None) -> float:
        signature, model = (self.signature, self.model) if name is None else self.load_model(name)
        return AsymptoticService.asymptotic_query(
            model,
            parse_formula(text, signature),
            parse_formula(evidence, signature) if evidence else None,
        )

############
# POSITIVE #
############

    def test_child_of_proportion(self) -> None:
        """
        GIVEN Q(x) whose only condition is the proportion of R, with R(x) a fair coin
        WHEN the limit of P(Q(x)) is computed
        THEN it is sigmoid(1/2).
        """
        value = self.query("Q(x)")

        assert value == pytest.approx(Q_LIMIT, abs=1e-12)
        assert value == pytest.approx(0.62246, abs=1e-5)
        self.assert_logs_info(f"Asymptotic P(Q(x)) = {value!r}")


    def test_conjunction_on_one_individual(self) -> None:
        assert self.query("R(y) & Q(y)") == pytest.approx(0.5 * Q_LIMIT, abs=1e-12)
        assert self.query("R(y) & Q(y)") == pytest.approx(0.31123, abs=1e-5)


    def test_distinct_individuals_are_independent(self) -> None:
        assert self.query("Q(x) & Q(y)") == pytest.approx(Q_LIMIT ** 2, abs=1e-12)


    def test_elements_denote_generic_individuals(self) -> None:
        assert self.query("Q(e1)") == pytest.approx(self.query("Q(x)"), abs=1e-15)
        assert self.query("Q(e3) & R(e3)") == pytest.approx(self.query("R(y) & Q(y)"), abs=1e-15)


    def test_evidence(self) -> None:
        assert self.query("Q(x)", evidence="R(x)") == pytest.approx(Q_LIMIT, abs=1e-12)
        assert self.query("R(x)", evidence="Q(x)") == pytest.approx(0.5, abs=1e-12)


    def test_proposition_over_root(self) -> None:
        _, model = parse_model(PROPOSITION_OVER_ROOT)

        value = AsymptoticService.asymptotic_query(model, Atom("P", ()))

        assert value == pytest.approx(expit(0.5), abs=1e-12)


    def test_testbed(self) -> None:
        """
        GIVEN R(x) ~ sigmoid(0.5), P ~ sigmoid(proportion of R) and S(x) over both
        WHEN S(x) is queried with and without R(x) as evidence
        THEN the limits mix over P exactly.
        """
        self.assertAlmostEqual(self.query("P", name="testbed.rlr"), expit(expit(0.5)), places=12)
        self.assertAlmostEqual(self.query("S(x)", name="testbed.rlr"), testbed_s_limit(), places=12)
        self.assertAlmostEqual(self.query("S(x)", evidence="R(x)", name="testbed.rlr"), testbed_s_limit(True), places=12)


    def test_binary_relations(self) -> None:
        takes, hard = expit(-1.0), expit(-0.5)
        expected = 0.0
        for t, d, h in product((True, False), repeat=3):
            mass = (takes if t else 1 - takes) * 0.5 * (hard if h else 1 - hard)
            expected += mass * expit(0.5 * t + 1.5 * (d and not h) - hard)

        value = self.query("Passes(s, c)", name="lessons.rlr")

        assert value == pytest.approx(expected, abs=1e-12)


    def test_unused_relation_changes_nothing(self) -> None:
        _, extended = parse_model(
            "sort person; pred R(person); pred Q(person); pred U(person, person);"
            "rlr { node R(x) { 0.0 : true; } node Q(x) { 1.0 : R(y); } node U(x, y) { 2.0 : true; } }"
        )

        assert AsymptoticService.asymptotic_query(extended, Atom("Q", (x,))) == pytest.approx(self.query("Q(x)"), abs=1e-15)


    def test_root_query_is_its_weight(self) -> None:
        _, model = self.load_model("testbed.rlr")

        assert AsymptoticService.asymptotic_query(model, Atom("R", (x,))) == pytest.approx(expit(0.5), abs=1e-15)


    def test_top(self) -> None:
        assert AsymptoticService.asymptotic_query(self.model, Top()) == 1.0


    def test_root_only_models(self) -> None:
        """
        GIVEN models made of roots only: a bias-only proposition and relation, and a relation without conditions
        WHEN their generic extensions are built for limit queries
        THEN each root answers with the sigmoid of its bias.
        """
        _, model = parse_model(
            "sort person; pred R(person); pred U(person); prop P;"
            "rlr { node P { 1.5 : true; } node R(x) { -0.5 : true; } node U(x) { } }"
        )

        assert AsymptoticService.asymptotic_query(model, Atom("P", ())) == pytest.approx(expit(1.5), abs=1e-15)
        assert AsymptoticService.asymptotic_query(model, Atom("R", (x,))) == pytest.approx(expit(-0.5), abs=1e-15)
        assert AsymptoticService.asymptotic_query(model, Atom("U", (x,))) == pytest.approx(0.5, abs=1e-15)
        assert AsymptoticService.asymptotic_query(
            model, And(Atom("R", (x,)), Atom("R", (y,)))
        ) == pytest.approx(expit(-0.5) ** 2, abs=1e-15)


    def test_child_of_root_in_the_extension(self) -> None:
        """R_a1 is a root of the extension with a 'true' condition and Q_a1 sits above it."""

        solver = AsymptoticSolver(self.model)

        extension = solver.extension(RlrService.fresh_constants([PERSON]))

        self.assertEqual(extension.propositions, ("R_a1", "Q_a1"))
        assert solver.probability(Atom("Q", (Constant("a1", PERSON),))) == pytest.approx(Q_LIMIT, abs=1e-12)

############
# NEGATIVE #
############

    def test_mixed_model_has_no_limit(self) -> None:
        signature, model = self.load_model("pollution-mixed.rlr")

        with pytest.raises(UndefinedAsymptoticsError, match="no defined asymptotics"):
            AsymptoticService.asymptotic_query(model, Atom("P", ()))


    def test_unscaled_model_has_no_limit(self) -> None:
        _, model = parse_model(
            "sort person; pred R(person); prop P;"
            "rlr { semantics: unscaled; node R(x) { 0.0 : true; } node P { 1.0 : R(y); } }"
        )

        with pytest.raises(UndefinedAsymptoticsError, match="condition 1 of node P sums over y"):
            AsymptoticSolver(model)


    def test_impossible_evidence(self) -> None:
        with pytest.raises(ConditioningError, match="limit probability zero"):
            AsymptoticService.asymptotic_query(self.model, Atom("Q", (x,)), And(Atom("R", (x,)), Not(Atom("R", (x,)))))


    def test_proposition_cap(self) -> None:
        with self.settings(RELSCALE={"PROPOSITION_CAP": 1}):
            with pytest.raises(StateSpaceError, match="above the cap of 1"):
                AsymptoticService.asymptotic_query(self.model, And(Atom("Q", (x,)), Atom("Q", (y,))))


class ProportionTests(TestClassBase):

    def test_top_is_one(self) -> None:
        _, model = self.load_model("testbed.rlr")

        assert AsymptoticService.asymptotic_proportion(model, Top(), PropositionValuation()) == 1.0


    def test_root_proportion(self) -> None:
        _, model = self.load_model("projectivity.rlr")

        value = AsymptoticService.asymptotic_proportion(model, Atom("R", (y,)), PropositionValuation())

        assert value == pytest.approx(0.5, abs=1e-15)


    def test_given_proposition(self) -> None:
        _, model = self.load_model("testbed.rlr")
        q = expit(0.5)

        value = AsymptoticService.asymptotic_proportion(
            model, Atom("S", (x,)), PropositionValuation.from_mapping({"P": True}, bound=1)
        )

        assert value == pytest.approx(q * expit(q) + (1 - q) * 0.5, abs=1e-12)


    def test_proposition_distribution(self) -> None:
        _, model = self.load_model("testbed.rlr")
        p = expit(expit(0.5))

        rows = AsymptoticService.asymptotic_proposition_distribution(model)

        self.assertEqual([str(valuation) for valuation, _ in rows], ["P", "!P"])
        assert [mass for _, mass in rows] == pytest.approx([p, 1 - p], abs=1e-12)
        self.assertEqual(rows[0][0].bound, 1)


    def test_distribution_without_propositions(self) -> None:
        _, model = self.load_model("projectivity.rlr")

        rows = AsymptoticService.asymptotic_proposition_distribution(model)

        self.assertEqual(len(rows), 1)
        self.assertEqual(str(rows[0][0]), "-")
        self.assertEqual(rows[0][1], 1.0)


class AsymptoticReportTests(TestClassBase):

    logger_target = "asymptotics.service.logger"

    def setUp(self) -> None:
        super().setUp()
        self.signature, self.model = self.load_model("testbed.rlr")

    def test_marginalized_proposition_is_flagged(self) -> None:
        report = AsymptoticService.asymptotic_report(self.model, Atom("S", (x,)))

        self.assertAlmostEqual(report.value, testbed_s_limit(), places=12)
        self.assertEqual(report.query, "S(x)")
        assert report.evidence is None
        self.assertEqual(report.flags, ("marginalized over propositions P not fixed by the evidence",))
        self.assertEqual(len(report.distribution), 2)
        assert len(report.provenance["model"]) == 16
        assert "a1" in report.provenance["constants"]
        assert report.proportions
        self.assert_no_warnings_logged()


    def test_evidence_fixing_the_proposition(self) -> None:
        report = AsymptoticService.asymptotic_report(self.model, Atom("S", (x,)), Atom("P", ()))

        self.assertEqual(report.flags, ())
        self.assertEqual(report.evidence, "P")


    def test_proportion_rows_name_their_formula(self) -> None:
        report = AsymptoticService.asymptotic_report(self.model, Atom("P", ()))

        self.assertEqual({row.formula for row in report.proportions}, {"R(y)"})
        assert all(row.proportion == pytest.approx(expit(0.5)) for row in report.proportions)


    def test_same_report_from_warm_cache(self) -> None:
        first = AsymptoticService.asymptotic_report(self.model, Atom("S", (x,)))
        second = AsymptoticService.asymptotic_report(self.model, Atom("S", (x,)))

        self.assertEqual(first, second)


class EmpiricalValueTests(TestClassBase):

    def test_counts_distinct_groundings(self) -> None:
        signature, model = self.load_model("projectivity.rlr")
        batch = SamplingService.forward_sample(model, sizes(3), seed=5, count=40)

        value = AsymptoticService.empirical_value(batch, And(Atom("R", (x,)), Atom("R", (y,))))

        expected = sum(
            float(world.tables["R"][i] and world.tables["R"][j])
            for world in batch.worlds for i in range(3) for j in range(3) if i != j
        ) / (40 * 6)
        assert value == pytest.approx(expected, abs=1e-12)


    def test_closed_query_is_a_frequency(self) -> None:
        _, model = parse_model(PROPOSITION_OVER_ROOT)
        batch = SamplingService.forward_sample(model, sizes(4), seed=2, count=30)

        value = AsymptoticService.empirical_value(batch, Atom("P", ()))

        assert value == pytest.approx(sum(bool(w.tables["P"]) for w in batch.worlds) / 30)


    def test_domain_too_small(self) -> None:
        _, model = self.load_model("projectivity.rlr")
        batch = SamplingService.forward_sample(model, sizes(1), seed=5, count=2)

        with pytest.raises(ModelDefinitionError, match="too small for distinct groundings"):
            AsymptoticService.empirical_value(batch, And(Atom("R", (x,)), Atom("R", (y,))))


@pytest.mark.slow
@pytest.mark.statistical
class LimitCheckTests(TestClassBase):

    logger_target = "asymptotics.service.logger"

    def test_projectivity_model(self) -> None:
        """
        GIVEN the two-node model and Q(x)
        WHEN 200 worlds are sampled at 50, 500 and 2000 elements
        THEN the empirical frequency at 2000 is within 0.03 of sigmoid(1/2).
        """
        _, model = self.load_model("projectivity.rlr")

        rows = AsymptoticService.empirical_limit_check(model, Atom("Q", (x,)), [sizes(n) for n in (50, 500, 2000)], 200, 17)

        self.assertEqual([row.n for row in rows], [50, 500, 2000])
        assert rows[-1].gap <= 0.03
        assert all(row.asymptotic == pytest.approx(Q_LIMIT) for row in rows)
        assert rows[0].tolerance == pytest.approx(3 * (0.25 / (200 * 50)) ** 0.5)
        self.assertEqual(self.mock_info_logger.call_count, 4)


    def test_root_only_model(self) -> None:
        _, model = parse_model("sort person; pred R(person); rlr { node R(x) { -0.3 : true; } }")

        rows = AsymptoticService.empirical_limit_check(model, Atom("R", (x,)), [sizes(1), sizes(5)], 10_000, 3)

        assert all(row.gap <= 0.02 for row in rows)


    def test_testbed_with_proposition(self) -> None:
        _, model = self.load_model("testbed.rlr")

        for query in (Atom("S", (x,)), Atom("R", (x,))):
            with self.subTest(query=str(query)):
                row, = AsymptoticService.empirical_limit_check(model, query, [sizes(2000)], 200, 23)
                assert row.gap <= 0.03


    def test_sampled_extension_consistency(self) -> None:
        """A generic constant behaves like any element of a large sampled domain."""

        _, model = self.load_model("projectivity.rlr")
        extended = RlrService.generic_extension(model, [PERSON])
        batch = SamplingService.forward_sample(extended, sizes(2000), seed=29, count=200)

        frequency = AsymptoticService.empirical_value(batch, Atom("Q_a1", ()))

        assert frequency == pytest.approx(Q_LIMIT, abs=0.1)
        assert AsymptoticService.asymptotic_query(model, Atom("Q", (Element("e1", PERSON),))) == pytest.approx(Q_LIMIT)
