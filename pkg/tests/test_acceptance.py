# External
from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

# Internal
from asymptotics.service import AsymptoticService
from cmn.base_test import TestClassBase
from logic.models import (
    And,
    Atom,
    DomainAssignment,
    Element,
    Not,
    Or,
    RelationSymbol,
    Signature,
    Top,
    Variable,
)
from rlr.models import Condition, NodeLabel, RlrModel, Semantics
from rlr.service import RlrService

PERSON = "person"
x, y, z = Variable("x", PERSON), Variable("y", PERSON), Variable("z", PERSON)
e1 = Element("e1", PERSON)
P = Atom("P", ())
SIGNATURE = Signature(
    (PERSON,), (RelationSymbol("P", ()), RelationSymbol("R", (PERSON,)), RelationSymbol("Q", (PERSON,)))
)

weights = st.floats(-2.0, 2.0, allow_nan=False)


def sizes(n: int) -> DomainAssignment:
    return DomainAssignment.uniform((PERSON,), n)


@st.composite
def upper_nodes(draw) -> tuple[NodeLabel, NodeLabel]:
    """Labels of P and R: P a root, R a root or a child of P."""

    p_conditions = (Condition(Top(), draw(weights)),) if draw(st.booleans()) else ()
    r_conditions = [Condition(Top(), draw(weights))]
    if draw(st.booleans()):
        r_conditions.append(Condition(P, draw(weights)))
    return NodeLabel(P, p_conditions), NodeLabel(Atom("R", (x,)), tuple(r_conditions))


def build(upper: tuple[NodeLabel, NodeLabel], q_conditions: list[Condition]) -> RlrModel:
    return RlrModel(SIGNATURE, upper + (NodeLabel(Atom("Q", (x,)), tuple(q_conditions)),))


@st.composite
def mixed_models(draw) -> RlrModel:
    """Q aggregates over R with a random proportional flag per condition."""

    candidates = [
        (Atom("R", (y,)), (y,)),
        (And(P, Not(Atom("R", (y,)))), (y,)),
        (And(Atom("R", (x,)), Atom("R", (y,))), (y,)),
        (Atom("R", (x,)), ()),
    ]
    chosen = draw(st.lists(st.sampled_from(range(len(candidates))), min_size=1, max_size=4, unique=True))
    conditions = [
        Condition(candidates[i][0], draw(weights), candidates[i][1], draw(st.booleans())) for i in sorted(chosen)
    ]
    return build(draw(upper_nodes()), conditions)


@st.composite
def aggregate_only_models(draw) -> RlrModel:
    """Q's summed conditions never mention the head variable."""

    conditions = [Condition(Atom("R", (y,)), draw(weights), (y,), draw(st.booleans()))]
    if draw(st.booleans()):
        conditions.append(Condition(And(P, Not(Atom("R", (y,)))), draw(weights), (y,), draw(st.booleans())))
    if draw(st.booleans()):
        conditions.append(Condition(P, draw(weights)))
    return build(draw(upper_nodes()), conditions)


@st.composite
def projective_models(draw) -> RlrModel:
    """No condition sums over anything."""

    candidates = [Atom("R", (x,)), And(P, Atom("R", (x,))), Or(P, Not(Atom("R", (x,)))), Top()]
    chosen = draw(st.lists(st.sampled_from(range(len(candidates))), min_size=1, max_size=4, unique=True))
    return build(draw(upper_nodes()), [Condition(candidates[i], draw(weights)) for i in sorted(chosen)])


class ConversionEquivalenceTests(TestClassBase):

    @settings(max_examples=50, derandomize=True, deadline=None)
    @given(model=mixed_models())
    def test_converted_models_define_the_same_distribution(self, model: RlrModel) -> None:
        """
        GIVEN a random mixed model
        WHEN it is converted to domain-aware and to unscaled form for n = 1, 2, 3
        THEN every world keeps its probability.
        """
        for n in (1, 2, 3):
            original = RlrService.distribution(model, sizes(n)).probabilities()
            for target in (Semantics.DOMAIN_AWARE, Semantics.UNSCALED):
                converted = RlrService.convert(model, sizes(n), target)

                assert converted.semantics in (target, Semantics.DOMAIN_AWARE)
                np.testing.assert_allclose(
                    RlrService.distribution(converted, sizes(n)).probabilities(), original, rtol=0, atol=1e-12,
                )


class GenericExtensionConsistencyTests(TestClassBase):

    @settings(max_examples=30, derandomize=True, deadline=None)
    @given(model=aggregate_only_models())
    def test_extension_marginals_match_the_base_model(self, model: RlrModel) -> None:
        """
        GIVEN a model whose aggregates do not involve the head variable
        WHEN it is extended by one person constant
        THEN P(Q_a1) and P(R_a1) on n elements equal P(Q(e1)) and P(R(e1)) on n elements.
        """
        extended = RlrService.generic_extension(model, [PERSON])

        for n in (1, 2, 3):
            for relation in ("R", "Q"):
                base = RlrService.query_probability(model, sizes(n), Atom(relation, (e1,)))
                generic = RlrService.query_probability(extended, sizes(n), Atom(f"{relation}_a1", ()))

                assert generic == pytest.approx(base, abs=1e-12)


    @settings(max_examples=20, derandomize=True, deadline=None)
    @given(model=aggregate_only_models(), query=st.sampled_from(["Q", "R"]))
    def test_unused_constants_leave_limits_unchanged(self, model: RlrModel, query: str) -> None:
        model = model.with_labels(tuple(
            label.update(conditions=tuple(c.update(proportional=True) for c in label.conditions))
            for label in model.labels
        ))
        tautology = Or(Atom("R", (z,)), Not(Atom("R", (z,))))

        plain = AsymptoticService.asymptotic_query(model, Atom(query, (x,)))
        padded = AsymptoticService.asymptotic_query(model, Atom(query, (x,)), tautology)

        assert padded == pytest.approx(plain, abs=1e-12)


class ProjectiveFragmentTests(TestClassBase):

    @settings(max_examples=20, derandomize=True, deadline=None)
    @given(
        model=projective_models(),
        query=st.sampled_from([
            Atom("Q", (e1,)),
            And(Atom("Q", (e1,)), Atom("R", (e1,))),
            And(P, Not(Atom("Q", (e1,)))),
        ]),
    )
    def test_probabilities_do_not_depend_on_the_domain(self, model: RlrModel, query) -> None:
        """
        GIVEN a model without summed variables
        WHEN a query about e1 is answered for n = 1..4
        THEN all answers agree with each other and with the asymptotic value.
        """
        values = [RlrService.query_probability(model, sizes(n), query) for n in (1, 2, 3, 4)]
        limit = AsymptoticService.asymptotic_query(model, query)

        for value in values:
            assert value == pytest.approx(values[0], abs=1e-12)
        assert limit == pytest.approx(values[0], abs=1e-12)
        assert RlrService.projectivity_gap(model, sizes(1), sizes(3)) <= 1e-12
