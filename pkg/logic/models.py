from __future__ import annotations

# External
import numpy as np

# Internal
from abc import ABC
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Iterator, Mapping, Optional, Union
import re

from cmn.base_model import BaseModel
from cmn.errors import ModelDefinitionError

BUILTINS = frozenset({"true", "false"})
ELEMENT_NAME = re.compile(r"^e([1-9][0-9]*)$")


@dataclass(frozen=True)
class Variable:
    name: str
    sort: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Constant:
    """A named individual; lives outside every domain."""

    name: str
    sort: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Element:
    """A domain element, canonically named e1, e2, ... within its sort."""

    name: str
    sort: str

    def __str__(self) -> str:
        return self.name

    @property
    def position(self) -> int:
        match = ELEMENT_NAME.match(self.name)
        if match is None:
            raise ModelDefinitionError(f"'{self.name}' is not a canonical element name")
        return int(match.group(1)) - 1


Term = Union[Variable, Constant, Element]


class Formula(ABC):
    """Quantifier-free formula. Concrete nodes are frozen dataclasses."""

    def atoms(self) -> Iterator[Atom]:
        """Atom occurrences, left to right."""
        match self:
            case Atom():
                yield self
            case Not(operand=operand):
                yield from operand.atoms()
            case And(left=left, right=right) | Or(left=left, right=right) | Implies(left=left, right=right):
                yield from left.atoms()
                yield from right.atoms()

    def map_atoms(self, fn: Callable[[Atom], Formula]) -> Formula:
        """Rebuild the formula with every atom replaced by `fn(atom)`."""
        match self:
            case Atom():
                return fn(self)
            case Not(operand=operand):
                return Not(operand.map_atoms(fn))
            case And(left=left, right=right):
                return And(left.map_atoms(fn), right.map_atoms(fn))
            case Or(left=left, right=right):
                return Or(left.map_atoms(fn), right.map_atoms(fn))
            case Implies(left=left, right=right):
                return Implies(left.map_atoms(fn), right.map_atoms(fn))
        return self

    def substitute(self, mapping: Mapping[Term, Term]) -> Formula:
        """Replace terms according to `mapping`; unmapped terms are kept."""
        if not mapping:
            return self
        return self.map_atoms(
            lambda atom: Atom(atom.relation, tuple(mapping.get(term, term) for term in atom.terms))
        )

    def relations(self) -> list[str]:
        """Relation symbols in first-occurrence order."""
        return list(dict.fromkeys(atom.relation for atom in self.atoms()))

    def __str__(self) -> str:
        return render_formula(self)


@dataclass(frozen=True)
class Top(Formula):
    pass


@dataclass(frozen=True)
class Bottom(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    relation: str
    terms: tuple[Term, ...] = ()

    @property
    def is_ground(self) -> bool:
        return all(not isinstance(term, Variable) for term in self.terms)


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


def conjunction(formulas: Iterable[Formula]) -> Formula:
    result: Optional[Formula] = None
    for formula in formulas:
        result = formula if result is None else And(result, formula)
    return result if result is not None else Top()


_PRECEDENCE = {Implies: 1, Or: 2, And: 3, Not: 4}


def _precedence(formula: Formula) -> int:
    return _PRECEDENCE.get(type(formula), 5)


def render_formula(formula: Formula) -> str:
    """Canonical text with the minimal parentheses that preserve the tree."""

    match formula:
        case Top():
            return "true"
        case Bottom():
            return "false"
        case Atom(relation=relation, terms=terms):
            if not terms:
                return relation
            return f"{relation}({','.join(str(term) for term in terms)})"
        case Not(operand=operand):
            inner = render_formula(operand)
            return f"!{inner}" if _precedence(operand) >= 4 else f"!({inner})"

    op = {And: " & ", Or: " | ", Implies: " -> "}[type(formula)]
    own = _precedence(formula)
    left, right = formula.left, formula.right  # type: ignore[attr-defined]
    # & and | associate left, -> associates right.
    left_needs = _precedence(left) < own or (isinstance(formula, Implies) and _precedence(left) == own)
    right_needs = _precedence(right) < own or (not isinstance(formula, Implies) and _precedence(right) == own)
    left_text = f"({render_formula(left)})" if left_needs else render_formula(left)
    right_text = f"({render_formula(right)})" if right_needs else render_formula(right)
    return f"{left_text}{op}{right_text}"


@dataclass(frozen=True)
class RelationSymbol:
    name: str
    sorts: tuple[str, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.sorts)

    @property
    def is_proposition(self) -> bool:
        return not self.sorts


@dataclass(frozen=True)
class Signature(BaseModel):
    """Sorts, relation symbols (declaration order matters) and named constants."""

    sorts: tuple[str, ...] = ()
    relations: tuple[RelationSymbol, ...] = ()
    constants: tuple[Constant, ...] = ()


    def _validate_hook(self) -> None:
        names = [relation.name for relation in self.relations] + [constant.name for constant in self.constants]
        seen: set[str] = set()
        for name in names:
            if name in BUILTINS:
                raise ModelDefinitionError(f"'{name}' is reserved")
            if name in seen:
                raise ModelDefinitionError(f"duplicate declaration of '{name}'")
            seen.add(name)
        if len(set(self.sorts)) != len(self.sorts):
            raise ModelDefinitionError("duplicate sort declaration")
        declared = set(self.sorts)
        for relation in self.relations:
            for sort in relation.sorts:
                if sort not in declared:
                    raise ModelDefinitionError(f"relation '{relation.name}' uses undeclared sort '{sort}'")
        for constant in self.constants:
            if constant.sort not in declared:
                raise ModelDefinitionError(f"constant '{constant.name}' uses undeclared sort '{constant.sort}'")


    @cached_property
    def _by_name(self) -> dict[str, RelationSymbol]:
        return {relation.name: relation for relation in self.relations}


    def __contains__(self, name: object) -> bool:
        return name in self._by_name


    def relation(self, name: str) -> RelationSymbol:
        try:
            return self._by_name[name]
        except KeyError:
            raise ModelDefinitionError(f"undeclared relation symbol '{name}'") from None


    def position(self, name: str) -> int:
        """Declaration position of a relation symbol."""
        return self.relations.index(self.relation(name))


    @property
    def propositions(self) -> tuple[RelationSymbol, ...]:
        return tuple(relation for relation in self.relations if relation.is_proposition)


    def restrict(self, names: Iterable[str]) -> Signature:
        """Sub-signature keeping the named relations in declaration order."""
        keep = set(names)
        missing = keep - set(self._by_name)
        if missing:
            raise ModelDefinitionError(f"symbols not in signature: {', '.join(sorted(missing))}")
        return Signature(self.sorts, tuple(r for r in self.relations if r.name in keep), ())


    def extend(self, relations: Iterable[RelationSymbol]) -> Signature:
        return Signature(self.sorts, self.relations + tuple(relations), self.constants)


    def without_constants(self) -> Signature:
        return Signature(self.sorts, self.relations, ())


@dataclass(frozen=True)
class DomainAssignment(BaseModel):
    """Domain size per sort; elements are e1..en within each sort."""

    sizes: tuple[tuple[str, int], ...] = ()


    def _validate_hook(self) -> None:
        names = [sort for sort, _ in self.sizes]
        if len(set(names)) != len(names):
            raise ModelDefinitionError("a sort is sized twice")
        for sort, size in self.sizes:
            if not isinstance(size, int) or size < 1:
                raise ModelDefinitionError(f"domain of sort '{sort}' must have at least one element, got {size}")


    @classmethod
    def from_sizes(cls, sizes: Mapping[str, int] | Iterable[tuple[str, int]]) -> DomainAssignment:
        items = sizes.items() if isinstance(sizes, Mapping) else sizes
        return cls(tuple((str(sort), int(size)) for sort, size in items))


    @classmethod
    def uniform(cls, sorts: Iterable[str], size: int) -> DomainAssignment:
        return cls(tuple((sort, size) for sort in sorts))


    @cached_property
    def _by_sort(self) -> dict[str, int]:
        return dict(self.sizes)


    def size(self, sort: str) -> int:
        try:
            return self._by_sort[sort]
        except KeyError:
            raise ModelDefinitionError(f"missing domain size for sort '{sort}'") from None


    def shape(self, sorts: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.size(sort) for sort in sorts)


    def elements(self, sort: str) -> tuple[Element, ...]:
        return tuple(Element(f"e{i}", sort) for i in range(1, self.size(sort) + 1))


    def index(self, element: Element) -> int:
        position = element.position
        if position >= self.size(element.sort):
            raise ModelDefinitionError(
                f"element '{element.name}' is outside the domain of sort '{element.sort}' (size {self.size(element.sort)})"
            )
        return position


    def covers(self, signature: Signature) -> None:
        """Raise unless every sort used by the signature has a size."""
        for relation in signature.relations:
            for sort in relation.sorts:
                self.size(sort)


    def __str__(self) -> str:
        return ",".join(f"{sort}={size}" for sort, size in self.sizes)


GroundingMap = Mapping[Variable, Element]


class World:
    """A finite structure: one read-only boolean table per relation symbol.

    The table of a relation of sorts (s1, ..., sk) has shape
    (|D_s1|, ..., |D_sk|); a proposition's table is a 0-d array.
    """

    __slots__ = ("signature", "domains", "tables", "_key")

    def __init__(self, signature: Signature, domains: DomainAssignment, tables: Mapping[str, np.ndarray]) -> None:
        frozen: dict[str, np.ndarray] = {}
        for relation in signature.relations:
            shape = domains.shape(relation.sorts)
            table = np.asarray(tables.get(relation.name, np.zeros(shape, dtype=bool)), dtype=bool)
            if table.shape != shape:
                raise ModelDefinitionError(
                    f"table of '{relation.name}' has shape {table.shape}, expected {shape}"
                )
            table = table.copy()
            table.flags.writeable = False
            frozen[relation.name] = table
        unknown = set(tables) - set(frozen)
        if unknown:
            raise ModelDefinitionError(f"tables for symbols outside the signature: {', '.join(sorted(unknown))}")
        self.signature = signature
        self.domains = domains
        self.tables = frozen
        self._key = (signature, domains, tuple((name, table.tobytes()) for name, table in frozen.items()))


    @classmethod
    def from_atoms(
        cls,
        signature: Signature,
        domains: DomainAssignment,
        atoms: Iterable[Atom | tuple[str, tuple[str, ...]]],
    ) -> World:
        """Build a world from its true ground atoms.

        Atoms may be `Atom`s over `Element`s or `(relation, element_names)` pairs.
        """
        tables = {r.name: np.zeros(domains.shape(r.sorts), dtype=bool) for r in signature.relations}
        for item in atoms:
            if isinstance(item, Atom):
                relation_name, names = item.relation, tuple(str(term) for term in item.terms)
            else:
                relation_name, names = item
            relation = signature.relation(relation_name)
            if len(names) != relation.arity:
                raise ModelDefinitionError(f"'{relation_name}' expects {relation.arity} arguments, got {len(names)}")
            index = tuple(domains.index(Element(name, sort)) for name, sort in zip(names, relation.sorts))
            tables[relation_name][index] = True
        return cls(signature, domains, tables)


    def holds_atom(self, relation: str, elements: tuple[Element, ...]) -> bool:
        table = self.tables[relation]
        return bool(table[tuple(self.domains.index(element) for element in elements)])


    def true_atoms(self) -> list[Atom]:
        """True ground atoms in canonical order: declaration order, then lexicographic tuples."""
        atoms: list[Atom] = []
        for relation in self.signature.relations:
            table = self.tables[relation.name]
            if relation.is_proposition:
                if bool(table):
                    atoms.append(Atom(relation.name, ()))
                continue
            for index in np.argwhere(table):
                atoms.append(Atom(relation.name, tuple(
                    Element(f"e{int(i) + 1}", sort) for i, sort in zip(index, relation.sorts)
                )))
        return atoms


    def with_value(self, atom: Atom, value: bool) -> World:
        """Companion world with one ground atom set to `value`."""
        relation = self.signature.relation(atom.relation)
        index = tuple(self.domains.index(term) for term in atom.terms)  # type: ignore[arg-type]
        tables = dict(self.tables)
        table = tables[relation.name].copy()
        table[index] = value
        tables[relation.name] = table
        return World(self.signature, self.domains, tables)


    def batched(self) -> dict[str, np.ndarray]:
        """Tables with a leading batch axis of length one."""
        return {name: table[np.newaxis, ...] for name, table in self.tables.items()}


    def __eq__(self, other: object) -> bool:
        return isinstance(other, World) and self._key == other._key


    def __hash__(self) -> int:
        return hash(self._key)


    def __str__(self) -> str:
        return ";".join(str(atom) for atom in self.true_atoms())


    def __repr__(self) -> str:
        return f"World({self})"


class GroundAtomIndex:
    """Fixed ordering of all ground atoms of a signature over given domains.

    Atom `i` corresponds to bit `i` of a world number, so world number k
    makes exactly the atoms whose bits are set in k true. Relations come in
    declaration order, tuples in lexicographic element order.
    """

    def __init__(self, signature: Signature, domains: DomainAssignment) -> None:
        domains.covers(signature)
        self.signature = signature
        self.domains = domains
        self.positions: dict[str, np.ndarray] = {}
        offset = 0
        for relation in signature.relations:
            shape = domains.shape(relation.sorts)
            count = int(np.prod(shape, dtype=np.int64))
            self.positions[relation.name] = np.arange(offset, offset + count, dtype=np.int64).reshape(shape)
            offset += count
        self.count = offset


    @property
    def world_count(self) -> int:
        return 1 << self.count


    def position(self, atom: Atom) -> int:
        relation = self.signature.relation(atom.relation)
        if len(atom.terms) != relation.arity:
            raise ModelDefinitionError(f"'{atom.relation}' expects {relation.arity} arguments")
        index = []
        for term, sort in zip(atom.terms, relation.sorts):
            if not isinstance(term, Element):
                raise ModelDefinitionError(f"atom {atom} is not ground")
            index.append(self.domains.index(Element(term.name, sort)))
        return int(self.positions[relation.name][tuple(index)])


    def tables_for(self, numbers: np.ndarray) -> dict[str, np.ndarray]:
        """Batched truth tables for the worlds with the given numbers."""
        numbers = np.asarray(numbers, dtype=np.int64)
        tables = {}
        for name, positions in self.positions.items():
            expanded = numbers.reshape(numbers.shape + (1,) * positions.ndim)
            tables[name] = ((expanded >> positions) & 1).astype(bool)
        return tables


    def world(self, number: int) -> World:
        tables = {name: table[0] for name, table in self.tables_for(np.array([number])).items()}
        return World(self.signature, self.domains, tables)


    def numbers_for(self, tables: Mapping[str, np.ndarray]) -> np.ndarray:
        """World numbers of batched tables; the inverse of `tables_for`."""
        batch = next(iter(tables.values())).shape[0] if tables else 1
        numbers = np.zeros(batch, dtype=np.int64)
        for name, positions in self.positions.items():
            bits = tables[name].astype(np.int64) << positions
            numbers |= np.bitwise_or.reduce(bits.reshape(batch, -1), axis=1)
        return numbers


    def number(self, world: World) -> int:
        return int(self.numbers_for(world.batched())[0])
