"""
Model DSL: grammar, AST construction and canonical printing.

A model file is a list of declarations followed by one `mln { ... }` or
`rlr { ... }` block. Queries use the formula part of the grammar, where
names of the form e1, e2, ... denote domain elements.
"""

# Built-in
from __future__ import annotations
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence, Union
import logging
import re

# External
import pyparsing as pp

# Internal
from cmn.conf import get_setting
from cmn.errors import ModelDefinitionError, ModelSyntaxError
from .models import (
    BUILTINS,
    ELEMENT_NAME,
    And,
    Atom,
    Bottom,
    Constant,
    Element,
    Formula,
    Implies,
    Not,
    Or,
    RelationSymbol,
    Signature,
    Top,
    Variable,
)
from .service import LogicService

if TYPE_CHECKING:
    from mln.models import MlnModel
    from rlr.models import RlrModel

logger = logging.getLogger(__name__)

pp.ParserElement.enable_packrat()

KEYWORDS = (
    "sort", "pred", "prop", "const", "mln", "rlr", "node", "parents", "over",
    "scaling", "aggregator", "semantics", "raw", "true", "false",
)


@dataclass(frozen=True)
class _TermSyntax:
    name: str
    loc: int


@dataclass(frozen=True)
class _AtomSyntax:
    name: str
    terms: tuple[_TermSyntax, ...]
    loc: int


@dataclass(frozen=True)
class _ConstantSyntax:
    value: bool


@dataclass(frozen=True)
class _NotSyntax:
    operand: _FormulaSyntax


@dataclass(frozen=True)
class _BinarySyntax:
    op: str
    left: _FormulaSyntax
    right: _FormulaSyntax


_FormulaSyntax = Union[_AtomSyntax, _ConstantSyntax, _NotSyntax, _BinarySyntax]


@dataclass(frozen=True)
class _Declaration:
    kind: str
    name: str
    sorts: tuple[str, ...]
    loc: int


@dataclass(frozen=True)
class _WeightedSyntax:
    weight: float
    formula: _FormulaSyntax
    loc: int


@dataclass(frozen=True)
class _ScalingSyntax:
    scaling: str
    aggregator: Optional[str]


@dataclass(frozen=True)
class _OverSyntax:
    name: str
    sort: Optional[str]
    loc: int


@dataclass(frozen=True)
class _LabelSyntax:
    weight: float
    flag: Optional[str]
    formula: _FormulaSyntax
    over: tuple[_OverSyntax, ...]
    loc: int


@dataclass(frozen=True)
class _NodeSyntax:
    head: _AtomSyntax
    parents: Optional[tuple[str, ...]]
    labels: tuple[_LabelSyntax, ...]
    loc: int


@dataclass(frozen=True)
class _MlnSyntax:
    scaling: Optional[_ScalingSyntax]
    formulas: tuple[_WeightedSyntax, ...]


@dataclass(frozen=True)
class _RlrSyntax:
    semantics: Optional[str]
    nodes: tuple[_NodeSyntax, ...]


def _fold_binary(tokens: pp.ParseResults) -> _FormulaSyntax:
    items = list(tokens[0])
    op = items[1]
    if op in ("->", "→"):
        result = items[-1]
        for left in reversed(items[:-1:2]):
            result = _BinarySyntax("->", left, result)
        return result
    result = items[0]
    for right in items[2::2]:
        result = _BinarySyntax("&" if op in ("&", "∧") else "|", result, right)
    return result


def _fold_not(tokens: pp.ParseResults) -> _FormulaSyntax:
    items = list(tokens[0])
    result = items[-1]
    for _ in items[:-1]:
        result = _NotSyntax(result)
    return result


def _build_grammar() -> tuple[pp.ParserElement, pp.ParserElement]:
    LPAR, RPAR, LBRACE, RBRACE, SEMI, COLON = map(pp.Suppress, "(){};:")
    kw = {name: pp.Keyword(name) for name in KEYWORDS}
    reserved = pp.MatchFirst(kw.values())

    ident = (~reserved + pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*")).set_name("identifier")
    number = pp.Regex(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?").set_name("number")
    number.set_parse_action(lambda t: float(t[0]))

    term = ident.copy().set_parse_action(lambda s, loc, t: _TermSyntax(t[0], loc))
    atom = ident + pp.Opt(LPAR + pp.Opt(pp.DelimitedList(term)) + RPAR)
    atom.set_parse_action(lambda s, loc, t: _AtomSyntax(t[0], tuple(t[1:]), loc))
    atom.set_name("atom")
    truth = (kw["true"] | kw["false"]).set_parse_action(lambda t: _ConstantSyntax(t[0] == "true"))

    formula = pp.infix_notation(
        truth | atom,
        [
            (pp.one_of("! ~ ¬"), 1, pp.OpAssoc.RIGHT, _fold_not),
            (pp.one_of("& ∧"), 2, pp.OpAssoc.LEFT, _fold_binary),
            (pp.one_of("| ∨"), 2, pp.OpAssoc.LEFT, _fold_binary),
            (pp.one_of("-> →"), 2, pp.OpAssoc.RIGHT, _fold_binary),
        ],
    ).set_name("formula")

    sort_decl = (kw["sort"] - ident + SEMI).set_parse_action(
        lambda s, loc, t: _Declaration("sort", t[1], (), loc)
    )
    pred_decl = (kw["pred"] - ident + LPAR + pp.Group(pp.Opt(pp.DelimitedList(ident))) + RPAR + SEMI)
    pred_decl.set_parse_action(lambda s, loc, t: _Declaration("pred", t[1], tuple(t[2]), loc))
    prop_decl = (kw["prop"] - ident + SEMI).set_parse_action(
        lambda s, loc, t: _Declaration("pred", t[1], (), loc)
    )
    const_decl = (kw["const"] - ident + COLON + ident + SEMI).set_parse_action(
        lambda s, loc, t: _Declaration("const", t[1], (t[2],), loc)
    )
    declaration = sort_decl | pred_decl | prop_decl | const_decl

    aggregator = kw["aggregator"] - COLON + pp.one_of("max sum geomean mean", as_keyword=True)
    scaling = (kw["scaling"] - COLON + pp.one_of("none da", as_keyword=True) + pp.Opt(aggregator) + SEMI)
    scaling.set_parse_action(lambda t: _ScalingSyntax(t[1], t[3] if len(t) > 3 else None))
    weighted = (number + COLON - formula + SEMI).set_parse_action(
        lambda s, loc, t: _WeightedSyntax(t[0], t[1], loc)
    )
    mln_block = kw["mln"].suppress() - LBRACE + pp.Opt(scaling, None) + pp.Group(pp.ZeroOrMore(weighted)) + RBRACE
    mln_block.set_parse_action(lambda t: _MlnSyntax(t[0], tuple(t[1])))

    over_item = (ident + pp.Opt(COLON + ident)).set_parse_action(
        lambda s, loc, t: _OverSyntax(t[0], t[1] if len(t) > 1 else None, loc)
    )
    over = kw["over"].suppress() - LBRACE + pp.Group(pp.Opt(pp.DelimitedList(over_item))) + RBRACE
    flag = pp.Opt(kw["prop"] | kw["raw"], None)
    label = number + flag + COLON - formula + pp.Opt(over, None) + SEMI
    label.set_parse_action(
        lambda s, loc, t: _LabelSyntax(t[0], t[1], t[2], tuple(t[3]) if t[3] is not None else (), loc)
    )
    parents = kw["parents"].suppress() - pp.Group(pp.Opt(pp.DelimitedList(ident))) + SEMI
    node = kw["node"].suppress() - atom + LBRACE + pp.Opt(parents, None) + pp.Group(pp.ZeroOrMore(label)) + RBRACE
    node.set_parse_action(
        lambda s, loc, t: _NodeSyntax(t[0], tuple(t[1]) if t[1] is not None else None, tuple(t[2]), loc)
    )
    semantics = kw["semantics"].suppress() - COLON + pp.one_of("da unscaled", as_keyword=True) + SEMI
    rlr_block = kw["rlr"].suppress() - LBRACE + pp.Opt(semantics, None) + pp.Group(pp.ZeroOrMore(node)) + RBRACE
    rlr_block.set_parse_action(lambda t: _RlrSyntax(t[0], tuple(t[1])))

    model = pp.Group(pp.ZeroOrMore(declaration)) + (mln_block | rlr_block) + pp.StringEnd()
    query = formula + pp.StringEnd()
    for element in (model, query):
        element.ignore(pp.dbl_slash_comment)
    return model, query


_MODEL_GRAMMAR, _QUERY_GRAMMAR = _build_grammar()


def _syntax_error(error: pp.ParseBaseException) -> ModelSyntaxError:
    rest = error.line[error.col - 1:].strip() if error.line else ""
    near = f"near '{rest.split()[0]}'" if rest else "at end of input"
    return ModelSyntaxError(f"syntax error {near}: {error.msg}", error.lineno, error.col)


class ModelBuilder:
    """
    Turns the syntax tree of one model file into a validated signature and model.

    Locations are kept on every syntax node, so definition errors carry the
    line and column of the offending symbol.
    """

    def __init__(self, text: str, query: bool = False) -> None:
        self.text = text
        self.query = query
        self.sorts: list[str] = []
        self.relations: dict[str, RelationSymbol] = {}
        self.constants: dict[str, Constant] = {}


    def error(self, message: str, loc: int) -> ModelDefinitionError:
        return ModelDefinitionError(message, pp.lineno(loc, self.text), pp.col(loc, self.text))


    @classmethod
    def for_signature(cls, text: str, signature: Signature) -> ModelBuilder:
        builder = cls(text, query=True)
        builder.sorts = list(signature.sorts)
        builder.relations = {relation.name: relation for relation in signature.relations}
        builder.constants = {constant.name: constant for constant in signature.constants}
        return builder


    def declare(self, declaration: _Declaration) -> None:
        name, loc = declaration.name, declaration.loc
        if declaration.kind == "sort":
            if name in self.sorts:
                raise self.error(f"duplicate declaration of sort '{name}'", loc)
            self.sorts.append(name)
            return

        if name in BUILTINS or name in self.relations or name in self.constants:
            raise self.error(f"duplicate declaration of '{name}'", loc)
        for sort in declaration.sorts:
            if sort not in self.sorts:
                self.sorts.append(sort)

        if declaration.kind == "const":
            prefix = get_setting("CONSTANT_POOL_PREFIX")
            if re.fullmatch(rf"{re.escape(prefix)}[0-9]+", name):
                raise self.error(f"'{name}' is reserved for generated constants", loc)
            self.constants[name] = Constant(name, declaration.sorts[0])
            return

        cap = get_setting("ARITY_CAP")
        if len(declaration.sorts) > cap:
            raise self.error(f"relation '{name}' has arity {len(declaration.sorts)}, above the cap of {cap}", loc)
        self.relations[name] = RelationSymbol(name, declaration.sorts)


    @property
    def signature(self) -> Signature:
        return Signature(tuple(self.sorts), tuple(self.relations.values()), tuple(self.constants.values()))


    def resolve_term(self, term: _TermSyntax, sort: str, scope: dict[str, Variable]) -> Union[Variable, Constant, Element]:
        if term.name in self.constants:
            constant = self.constants[term.name]
            if constant.sort != sort:
                raise self.error(
                    f"sort mismatch: constant '{term.name}' has sort '{constant.sort}', expected '{sort}'", term.loc
                )
            return constant
        if self.query and term.name not in scope and ELEMENT_NAME.match(term.name):
            return Element(term.name, sort)
        variable = scope.get(term.name)
        if variable is None:
            variable = scope[term.name] = Variable(term.name, sort)
        elif variable.sort != sort:
            raise self.error(
                f"sort mismatch: variable '{term.name}' used with sorts '{variable.sort}' and '{sort}'", term.loc
            )
        return variable


    def atom(self, syntax: _AtomSyntax, scope: dict[str, Variable]) -> Atom:
        relation = self.relations.get(syntax.name)
        if relation is None:
            raise self.error(f"undeclared relation symbol '{syntax.name}'", syntax.loc)
        if len(syntax.terms) != relation.arity:
            raise self.error(
                f"'{syntax.name}' expects {relation.arity} arguments, got {len(syntax.terms)}", syntax.loc
            )
        terms = tuple(self.resolve_term(term, sort, scope) for term, sort in zip(syntax.terms, relation.sorts))
        return Atom(syntax.name, terms)


    def formula(self, syntax: _FormulaSyntax, scope: dict[str, Variable]) -> Formula:
        match syntax:
            case _ConstantSyntax(value=value):
                return Top() if value else Bottom()
            case _AtomSyntax():
                return self.atom(syntax, scope)
            case _NotSyntax(operand=operand):
                return Not(self.formula(operand, scope))
            case _BinarySyntax(op=op, left=left, right=right):
                node = {"&": And, "|": Or, "->": Implies}[op]
                return node(self.formula(left, scope), self.formula(right, scope))
        raise TypeError(f"unexpected syntax node {syntax!r}")


    def build_mln(self, block: _MlnSyntax) -> tuple[Signature, MlnModel]:
        from mln.models import Aggregator, MlnModel, Scaling, WeightedFormula

        formulas = []
        for weighted in block.formulas:
            formula = self.formula(weighted.formula, {})
            formulas.append(WeightedFormula(formula, weighted.weight))

        scaling, aggregator = Scaling.NONE, Aggregator.MAX
        if block.scaling is not None:
            scaling = Scaling(block.scaling.scaling)
            if block.scaling.aggregator is not None:
                aggregator = Aggregator(block.scaling.aggregator)

        signature = self.signature
        formulas, signature = self.compile_mln_constants(formulas, signature)
        return signature, MlnModel(signature, tuple(formulas), scaling, aggregator)


    def compile_mln_constants(self, formulas: list, signature: Signature) -> tuple[list, Signature]:
        """Replace atoms over constants by fresh symbols of reduced arity."""

        added: dict[str, RelationSymbol] = {}

        def rename(atom: Atom) -> Atom:
            if not any(isinstance(term, Constant) for term in atom.terms):
                return atom
            slots = [term.name if isinstance(term, Constant) else None for term in atom.terms]
            name = LogicService.instantiated_symbol(atom.relation, slots)
            if name in signature:
                raise ModelDefinitionError(f"generated symbol '{name}' clashes with a declared relation")
            kept = tuple(term for term in atom.terms if not isinstance(term, Constant))
            added.setdefault(name, RelationSymbol(name, tuple(term.sort for term in kept)))
            return Atom(name, kept)

        compiled = [weighted.update(formula=weighted.formula.map_atoms(rename)) for weighted in formulas]
        if signature.constants:
            logger.debug(f"Compiled constants into {len(added)} symbols: {', '.join(added)}")
        return compiled, signature.extend(added.values()).without_constants()


    def build_rlr(self, block: _RlrSyntax) -> tuple[Signature, RlrModel]:
        from rlr.models import Condition, NodeLabel, RlrModel
        from rlr.service import RlrService

        default_proportional = block.semantics != "unscaled"
        labels: list[NodeLabel] = []
        seen: set[str] = set()
        for node in block.nodes:
            if node.head.name in seen:
                raise self.error(f"duplicate node for '{node.head.name}'", node.head.loc)
            seen.add(node.head.name)
            head_scope: dict[str, Variable] = {}
            head = self.atom(node.head, head_scope)
            if not all(isinstance(term, Variable) for term in head.terms) or len(head_scope) != len(head.terms):
                raise self.error(f"node head {head} must list distinct variables", node.head.loc)

            conditions = []
            for label in node.labels:
                scope = dict(head_scope)
                formula = self.formula(label.formula, scope)
                summed = [variable for name, variable in scope.items() if name not in head_scope]
                for item in label.over:
                    variable = self.over_variable(item, scope)
                    if variable not in summed:
                        summed.append(variable)
                proportional = default_proportional if label.flag is None else label.flag == "prop"
                conditions.append(Condition(formula, label.weight, tuple(summed), proportional))
            labels.append(NodeLabel(head, tuple(conditions), node.parents))

        model = RlrModel(self.signature, tuple(labels))
        if model.signature.constants:
            model = RlrService.extend_by_constants(model, model.signature.constants)
        return model.signature, model


    def over_variable(self, item: _OverSyntax, scope: dict[str, Variable]) -> Variable:
        if item.name in scope:
            variable = scope[item.name]
            if item.sort is not None and item.sort != variable.sort:
                raise self.error(
                    f"sort mismatch: variable '{item.name}' has sort '{variable.sort}', annotated '{item.sort}'",
                    item.loc,
                )
            return variable
        if item.sort is not None:
            if item.sort not in self.sorts:
                raise self.error(f"undeclared sort '{item.sort}'", item.loc)
            sort = item.sort
        elif len(self.sorts) == 1:
            sort = self.sorts[0]
        else:
            raise self.error(f"cannot infer the sort of '{item.name}'; annotate it as '{item.name}: <sort>'", item.loc)
        variable = scope[item.name] = Variable(item.name, sort)
        return variable


def parse_model(text: str) -> tuple[Signature, Union[MlnModel, RlrModel]]:
    """
    Parse one model file.

    :param text: DSL source.
    :return: The signature (constants compiled away) and the MLN or RLR model.
    :raises ModelSyntaxError: On grammar violations, with line and column.
    :raises ModelDefinitionError: On sort mismatches, duplicates or undeclared symbols.
    """
    try:
        declarations, block = _MODEL_GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as e:
        raise _syntax_error(e) from None

    builder = ModelBuilder(text)
    for declaration in declarations:
        builder.declare(declaration)
    if isinstance(block, _MlnSyntax):
        signature, model = builder.build_mln(block)
    else:
        signature, model = builder.build_rlr(block)
    logger.info(
        f"Parsed {type(model).__name__} with {len(signature.relations)} relation symbols over "
        f"sorts {', '.join(signature.sorts) or '-'}"
    )
    return signature, model


def parse_formula(text: str, signature: Signature) -> Formula:
    """Parse a query or evidence formula; e1, e2, ... name domain elements."""

    try:
        (syntax,) = _QUERY_GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as e:
        raise _syntax_error(e) from None
    return ModelBuilder.for_signature(text, signature).formula(syntax, {})


def _weight(value: float) -> str:
    return repr(float(value))


def _print_signature(signature: Signature) -> list[str]:
    lines = [f"sort {sort};" for sort in signature.sorts]
    for relation in signature.relations:
        if relation.is_proposition:
            lines.append(f"prop {relation.name};")
        else:
            lines.append(f"pred {relation.name}({', '.join(relation.sorts)});")
    lines.extend(f"const {constant.name} : {constant.sort};" for constant in signature.constants)
    return lines


def pretty_print(signature: Signature, model: Union[MlnModel, RlrModel]) -> str:
    """Canonical DSL text; parsing it back yields an equal model."""

    from mln.models import MlnModel

    lines = _print_signature(signature)
    if isinstance(model, MlnModel):
        lines.append("mln {")
        lines.append(f"  scaling: {model.scaling.value} aggregator: {model.aggregator.value};")
        lines.extend(f"  {_weight(w.weight)} : {w.formula};" for w in model.formulas)
        lines.append("}")
        return "\n".join(lines) + "\n"

    lines.append("rlr {")
    for label in model.labels:
        lines.append(f"  node {label.head} {{")
        if label.declared_parents is not None:
            lines.append(f"    parents {', '.join(label.declared_parents)};")
        for condition in label.conditions:
            lines.append(f"    {_print_condition(label.head_variables, condition)}")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _print_condition(head: Sequence[Variable], condition) -> str:
    implicit = [v for v in LogicService.free_variables(condition.formula) if v not in head]
    flag = "prop" if condition.proportional else "raw"
    text = f"{_weight(condition.weight)} {flag} : {condition.formula}"
    # Summed variables that occur in the formula are implied; print the rest in order.
    if list(condition.variables[:len(implicit)]) == implicit:
        extra = condition.variables[len(implicit):]
    else:
        extra = condition.variables
    if extra:
        text += " over {" + ", ".join(f"{v.name}: {v.sort}" for v in extra) + "}"
    return text + ";"
