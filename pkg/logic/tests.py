# External
from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

# Internal
from cmn.base_test import TestClassBase
from cmn.errors import (
    ModelDefinitionError,
    ModelError,
    ModelSyntaxError,
    StateSpaceError,
    UnboundVariableError,
)
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
    World,
)
from logic.parser import parse_formula, parse_model, pretty_print
from logic.service import LogicService
from mln.models import MlnModel
from rlr.models import RlrModel

PERSON = "person"
x, y = Variable("x", PERSON), Variable("y", PERSON)


def e(i: int) -> Element:
    return Element(f"e{i}", PERSON)


def unary_signature(*names: str) -> Signature:
    return Signature((PERSON,), tuple(RelationSymbol(name, (PERSON,)) for name in names))


class ParseModelTests(TestClassBase):

############
# POSITIVE #
############

    def test_parse_mln(self) -> None:
        """
        GIVEN a proposition, a unary predicate and one weighted formula
        WHEN the text is parsed
        THEN an MLN with that single formula and weight 1.0 comes back.
        """
        signature, model = parse_model("prop P; pred R(person); mln { 1.0 : P -> R(x); }")

        assert isinstance(model, MlnModel)
        assert len(model.formulas) == 1
        self.assertEqual(model.formulas[0].weight, 1.0)
        self.assertEqual(str(model.formulas[0].formula), "P -> R(x)")
        self.assertEqual(signature.sorts, (PERSON,))


    def test_parse_rlr_root(self) -> None:
        signature, model = parse_model("pred Q(person); rlr { node Q(x) { 0.0 : true; } }")

        assert isinstance(model, RlrModel)
        label = model.label("Q")
        assert label.is_root
        self.assertEqual(label.conditions[0].weight, 0.0)
        assert isinstance(label.conditions[0].formula, Top)


    def test_summed_variables_and_flags(self) -> None:
        _, model = parse_model(
            "pred R(person); pred H(person); prop P;"
            "rlr { node R(x) { 0 : true; } node H(x) { 0 : true; }"
            "      node P { 2.0 prop : R(x); 0.1 raw : H(y) over {z: person}; } }"
        )
        first, second = model.label("P").conditions

        assert first.proportional and first.variables == (x,)
        assert not second.proportional
        assert second.variables == (y, Variable("z", PERSON))


    def test_semantics_statement_sets_default_flag(self) -> None:
        _, model = parse_model(
            "pred R(person); pred Q(person);"
            "rlr { semantics: unscaled; node R(x) { 0 : true; } node Q(x) { 1 : R(y); } }"
        )

        assert not model.label("Q").conditions[0].proportional


    def test_comments_and_unicode_connectives(self) -> None:
        _, model = parse_model(
            "// a comment\nprop P; pred R(person);\nmln { 1.0 : ¬P ∨ R(x) ∧ P; // trailing\n }"
        )

        self.assertEqual(str(model.formulas[0].formula), "!P | R(x) & P")


    def test_constants_are_compiled_into_symbols(self) -> None:
        signature, model = parse_model(
            "pred R(person, person); const c : person; mln { 1.0 : R(c, x) -> R(x, c); }"
        )

        assert "R_c_" in signature and "R__c" in signature
        assert signature.constants == ()
        self.assertEqual(str(model.formulas[0].formula), "R_c_(x) -> R__c(x)")


    def test_round_trip_is_stable(self) -> None:
        """parse(print(parse(text))) equals parse(text) for every shipped model."""

        for name in ("ex1.mln", "ex2-da.mln", "projectivity.rlr", "pollution-mixed.rlr",
                     "testbed.rlr", "lessons.rlr"):
            with self.subTest(name=name):
                signature, model = self.load_model(name)
                again = parse_model(pretty_print(signature, model))

                assert again == (signature, model)


############
# NEGATIVE #
############

    def test_dangling_connective_is_a_syntax_error(self) -> None:
        with pytest.raises(ModelSyntaxError) as error:
            parse_model("prop P;\nmln { 1.0 : P -> ; }")

        assert error.value.line == 2
        assert error.value.column is not None


    def test_undeclared_predicate_reports_location(self) -> None:
        with pytest.raises(ModelDefinitionError, match="undeclared relation symbol 'S'") as error:
            parse_model("pred R(person);\nmln {\n  1.0 : R(x) & S(x);\n}")

        self.assertEqual(error.value.line, 3)
        assert isinstance(error.value, ModelError)
        assert not isinstance(error.value, ModelSyntaxError)


    def test_duplicate_declaration(self) -> None:
        with pytest.raises(ModelDefinitionError, match="duplicate declaration of 'R'"):
            parse_model("pred R(person); pred R(person); mln { }")


    def test_sort_mismatch(self) -> None:
        with pytest.raises(ModelDefinitionError, match="sort mismatch"):
            parse_model("pred R(a); pred S(b); mln { 1.0 : R(x) & S(x); }")


    def test_reserved_constant_names(self) -> None:
        with pytest.raises(ModelDefinitionError, match="reserved for generated constants"):
            parse_model("pred R(person); const a1 : person; mln { }")


    def test_arity_cap(self) -> None:
        with pytest.raises(ModelDefinitionError, match="above the cap"):
            parse_model("pred R(s, s, s, s); mln { }")


class ParseFormulaTests(TestClassBase):

    def test_elements_and_variables(self) -> None:
        formula = parse_formula("Q(e1) & R(x)", unary_signature("R", "Q"))

        self.assertEqual(formula, And(Atom("Q", (e(1),)), Atom("R", (x,))))


    def test_undeclared_symbol(self) -> None:
        with pytest.raises(ModelDefinitionError, match="undeclared relation symbol 'S'"):
            parse_formula("S(e1)", unary_signature("R"))


class HoldsTests(TestClassBase):

    def setUp(self) -> None:
        super().setUp()
        self.signature = unary_signature("R", "Q")
        self.domains = DomainAssignment.from_sizes({PERSON: 3})

    def test_top_holds_everywhere(self) -> None:
        world = World.from_atoms(self.signature, self.domains, [])

        assert LogicService.holds(world, Top(), {})


    def test_negation(self) -> None:
        world = World.from_atoms(self.signature, self.domains, [("R", ("e1",))])

        assert not LogicService.holds(world, Not(Atom("R", (x,))), {x: e(1)})


    def test_conjunction_of_two_variables(self) -> None:
        world = World.from_atoms(self.signature, self.domains, [("R", ("e1",)), ("Q", ("e2",))])
        formula = And(Atom("R", (x,)), Atom("Q", (y,)))

        assert LogicService.holds(world, formula, {x: e(1), y: e(2)})
        assert not LogicService.holds(world, formula, {x: e(2), y: e(2)})


    def test_unbound_variable(self) -> None:
        world = World.from_atoms(self.signature, self.domains, [])

        with pytest.raises(UnboundVariableError, match="'x'"):
            LogicService.holds(world, Atom("R", (x,)), {})


class CountTrueGroundingsTests(TestClassBase):

    def setUp(self) -> None:
        super().setUp()
        self.signature = unary_signature("R", "Q")
        self.domains = DomainAssignment.from_sizes({PERSON: 3})

    def test_product_of_independent_counts(self) -> None:
        world = World.from_atoms(
            self.signature, self.domains,
            [("R", ("e1",)), ("R", ("e2",)), ("Q", ("e1",)), ("Q", ("e2",)), ("Q", ("e3",))],
        )

        self.assertEqual(LogicService.count_true_groundings(world, And(Atom("R", (x,)), Atom("Q", (y,)))), 6)


    def test_top_over_one_variable(self) -> None:
        world = World.from_atoms(self.signature, self.domains, [])

        self.assertEqual(LogicService.count_true_groundings(world, Top(), [x]), 3)


    def test_shared_variable(self) -> None:
        world = World.from_atoms(self.signature, self.domains, [("R", ("e1",)), ("Q", ("e1",))])

        self.assertEqual(LogicService.count_true_groundings(world, And(Atom("R", (x,)), Atom("Q", (x,)))), 1)


    def test_closed_formula_counts_zero_or_one(self) -> None:
        world = World.from_atoms(self.signature, self.domains, [("R", ("e2",))])

        assert LogicService.count_true_groundings(world, Atom("R", (e(2),))) == 1
        assert LogicService.count_true_groundings(world, Atom("R", (e(1),))) == 0


    @settings(max_examples=60, derandomize=True, deadline=None)
    @given(
        n=st.integers(min_value=1, max_value=4),
        bits=st.lists(st.booleans(), min_size=32, max_size=32),
        permutation_seed=st.integers(min_value=0, max_value=1000),
    )
    def test_counting_properties(self, n: int, bits: list[bool], permutation_seed: int) -> None:
        """
        Counts lie between zero and the number of groundings, a tautology
        counts every grounding and renaming elements changes nothing.
        """
        domains = DomainAssignment.from_sizes({PERSON: n})
        signature = Signature((PERSON,), (RelationSymbol("R", (PERSON, PERSON)), RelationSymbol("Q", (PERSON,))))
        tables = {
            "R": np.array(bits[:n * n]).reshape(n, n),
            "Q": np.array(bits[16:16 + n]),
        }
        world = World(signature, domains, tables)
        formula = Or(Atom("R", (x, y)), Not(Atom("Q", (y,))))

        count = LogicService.count_true_groundings(world, formula)
        assert 0 <= count <= n * n
        assert LogicService.count_true_groundings(world, Or(formula, Not(formula))) == n * n

        order = np.random.default_rng(permutation_seed).permutation(n)
        renamed = World(signature, domains, {"R": tables["R"][np.ix_(order, order)], "Q": tables["Q"][order]})
        assert LogicService.count_true_groundings(renamed, formula) == count


class EnumerateWorldsTests(TestClassBase):

    def test_single_proposition(self) -> None:
        signature = Signature((), (RelationSymbol("P", ()),))

        worlds = list(LogicService.enumerate_worlds(signature, DomainAssignment()))

        self.assertEqual(len(worlds), 2)


    def test_unary_relation_over_two_elements(self) -> None:
        worlds = list(LogicService.enumerate_worlds(unary_signature("R"), DomainAssignment.from_sizes({PERSON: 2})))

        assert len(worlds) == 4
        assert len(set(worlds)) == 4


    def test_order_follows_declaration_order(self) -> None:
        signature = Signature((PERSON,), (RelationSymbol("P", ()), RelationSymbol("R", (PERSON,))))

        worlds = LogicService.enumerate_worlds(signature, DomainAssignment.from_sizes({PERSON: 1}))

        self.assertEqual([str(world) for world in worlds], ["", "P", "R(e1)", "P;R(e1)"])


    def test_cap_exceeded_names_the_count(self) -> None:
        signature = Signature((PERSON,), (RelationSymbol("R", (PERSON, PERSON)),))

        with pytest.raises(StateSpaceError, match="25 ground atoms"):
            list(LogicService.enumerate_worlds(signature, DomainAssignment.from_sizes({PERSON: 5})))


    def test_explicit_cap(self) -> None:
        with pytest.raises(StateSpaceError, match="exceed the cap of 2"):
            list(LogicService.enumerate_worlds(unary_signature("R"), DomainAssignment.from_sizes({PERSON: 3}), cap=2))


class ReductTests(TestClassBase):

    def setUp(self) -> None:
        super().setUp()
        self.signature = Signature((PERSON,), (RelationSymbol("P", ()), RelationSymbol("R", (PERSON,))))
        self.domains = DomainAssignment.from_sizes({PERSON: 2})
        self.world = World.from_atoms(self.signature, self.domains, [("P", ()), ("R", ("e2",))])

    def test_reduct_keeps_retained_symbols(self) -> None:
        reduct = LogicService.reduct(self.world, self.signature.restrict(["P"]))

        self.assertEqual(str(reduct), "P")


    def test_reduct_to_full_signature_is_identity(self) -> None:
        assert LogicService.reduct(self.world, self.signature) == self.world


    def test_foreign_symbol(self) -> None:
        with pytest.raises(ModelDefinitionError, match="not in the world's signature"):
            LogicService.reduct(self.world, unary_signature("S"))


class FreeVariablesTests(TestClassBase):

    def test_first_occurrence_order(self) -> None:
        formula = Or(Atom("R", (x, y)), Atom("R", (y, x)))

        self.assertEqual(LogicService.free_variables(formula), [x, y])


    def test_proposition_has_none(self) -> None:
        assert LogicService.free_variables(Atom("P", ())) == []


    def test_ground_query_skips_named_elements(self) -> None:
        formula = And(Atom("R", (x,)), Atom("Q", (e(1),)))

        grounded = LogicService.ground_query(formula, DomainAssignment.from_sizes({PERSON: 2}))

        self.assertEqual(str(grounded), "R(e2) & Q(e1)")


    def test_ground_query_needs_enough_elements(self) -> None:
        with pytest.raises(ModelDefinitionError, match="more distinct elements"):
            LogicService.ground_query(And(Atom("R", (x,)), Atom("R", (y,))), DomainAssignment.from_sizes({PERSON: 1}))
