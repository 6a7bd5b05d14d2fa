"""Abstract value domain shared by all analyses.

An abstract value is a finite set of atoms: user-lambda references,
exact scalar literals, primitive references, and per-type "top" atoms
that stand for an unknown value of that type.  Join is set union; the
order is containment with exact literals subsumed by their type top.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, FrozenSet, Iterable, Iterator, Mapping, Tuple

if TYPE_CHECKING:
    from .cps import ULam


class UnsupportedValueError(Exception):
    """A value flowed somewhere the abstraction cannot model soundly."""


@dataclass(frozen=True)
class LamAtom:
    """A user lambda flowing as a value (compared by node identity)."""

    lam: "ULam"

    def sort_key(self):
        return (0, self.lam.label, "")

    def __repr__(self):
        return f"lam{self.lam.label}"


@dataclass(frozen=True)
class NumAtom:
    value: int

    def sort_key(self):
        return (1, self.value, "")

    def __repr__(self):
        return str(self.value)


@dataclass(frozen=True)
class BoolAtom:
    value: bool

    def sort_key(self):
        return (2, int(self.value), "")

    def __repr__(self):
        return "#t" if self.value else "#f"


@dataclass(frozen=True)
class StrAtom:
    value: str

    def sort_key(self):
        return (3, 0, self.value)

    def __repr__(self):
        return f'"{self.value}"'


@dataclass(frozen=True)
class NilAtom:
    """The empty list; also its own type top."""

    def sort_key(self):
        return (4, 0, "")

    def __repr__(self):
        return "()"


@dataclass(frozen=True)
class TopAtom:
    kind: str  # "num" | "bool" | "str" | "pair"

    def sort_key(self):
        return (5, 0, self.kind)

    def __repr__(self):
        return f"#{self.kind}"


@dataclass(frozen=True)
class PrimAtom:
    name: str

    def sort_key(self):
        return (6, 0, self.name)

    def __repr__(self):
        return f"#prim:{self.name}"


Atom = object  # informal union of the atom classes above


@dataclass(frozen=True)
class Halt:
    """The unique top-level continuation."""

    def __repr__(self):
        return "halt"


HALT = Halt()

NIL = NilAtom()
NUM_TOP = TopAtom("num")
BOOL_TOP = TopAtom("bool")
STR_TOP = TopAtom("str")
PAIR_TOP = TopAtom("pair")

TRUE = BoolAtom(True)
FALSE = BoolAtom(False)

#: Everything car/cdr may produce: any basic datum, but never a closure.
UNIVERSAL_BASIC: FrozenSet[Atom] = frozenset(
    {NUM_TOP, BOOL_TOP, STR_TOP, PAIR_TOP, NIL}
)

EMPTY: FrozenSet[Atom] = frozenset()

#: Collapse exact literals of one type to the type top past this many.
LITERAL_WIDTH_CAP = 4

_TOP_FOR = {NumAtom: NUM_TOP, BoolAtom: BOOL_TOP, StrAtom: STR_TOP}


def make_value(atoms: Iterable[Atom]) -> FrozenSet[Atom]:
    """Canonicalize a set of atoms: drop literals subsumed by a present
    type top, and widen any literal family wider than the cap."""
    out = set(atoms)
    for cls, top in _TOP_FOR.items():
        exacts = [a for a in out if isinstance(a, cls)]
        if not exacts:
            continue
        if top in out:
            out.difference_update(exacts)
        elif len(exacts) > LITERAL_WIDTH_CAP:
            out.difference_update(exacts)
            out.add(top)
    return frozenset(out)


def join(*values: FrozenSet[Atom]) -> FrozenSet[Atom]:
    out: set = set()
    for v in values:
        out.update(v)
    return make_value(out)


def _covered(atom: Atom, big: FrozenSet[Atom]) -> bool:
    if atom in big:
        return True
    top = _TOP_FOR.get(type(atom))
    return top is not None and top in big


def value_le(small: FrozenSet[Atom], big: FrozenSet[Atom]) -> bool:
    """Containment up to exact-literal subsumption by type tops."""
    return all(_covered(a, big) for a in small)


def sorted_atoms(value: FrozenSet[Atom]) -> list:
    return sorted(value, key=lambda a: a.sort_key())


def show_value(value: FrozenSet[Atom]) -> str:
    return "{" + ", ".join(repr(a) for a in sorted_atoms(value)) + "}"


def is_exact_literal(value: FrozenSet[Atom]) -> bool:
    """True iff the set is a singleton exact scalar literal."""
    if len(value) != 1:
        return False
    (a,) = value
    return isinstance(a, (NumAtom, BoolAtom, StrAtom, NilAtom))


class FrozenMap(Mapping):
    """Immutable hashable mapping with key-sorted iteration order."""

    __slots__ = ("_d", "_items", "_hash")

    def __init__(self, mapping=()):
        d = dict(mapping)
        object.__setattr__(self, "_d", d)
        object.__setattr__(self, "_items", tuple(sorted(d.items())))
        object.__setattr__(self, "_hash", hash(self._items))

    def __getitem__(self, key):
        return self._d[key]

    def __iter__(self) -> Iterator:
        return iter(k for k, _ in self._items)

    def __len__(self) -> int:
        return len(self._d)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, FrozenMap):
            return self._items == other._items
        return NotImplemented

    def items(self) -> Tuple:
        return self._items

    def set(self, key, value) -> "FrozenMap":
        d = dict(self._d)
        d[key] = value
        return FrozenMap(d)

    def __repr__(self):
        body = ", ".join(f"{k}↦{_show(v)}" for k, v in self._items)
        return "[" + body + "]"


def _show(v):
    return show_value(v) if isinstance(v, frozenset) else repr(v)


EMPTY_MAP = FrozenMap()


def heap_join(heap: FrozenMap, var: str, value: FrozenSet[Atom]) -> FrozenMap:
    """Pointwise join of one binding into a heap; monotone."""
    old = heap.get(var, EMPTY)
    new = join(old, value)
    if new == old:
        return heap
    return heap.set(var, new)


def heap_le(small: FrozenMap, big: FrozenMap) -> bool:
    return all(value_le(v, big.get(k, EMPTY)) for k, v in small.items())


# --- primitive operator transfer ------------------------------------------

PRIM_ARITY = {
    "+": 2, "-": 2, "*": 2, "=": 2, "<": 2, "cons": 2,
    "car": 1, "cdr": 1, "not": 1, "pair?": 1, "null?": 1, "number?": 1,
}

_ARITH = {"+": lambda a, b: a + b,
          "-": lambda a, b: a - b,
          "*": lambda a, b: a * b}
_CMP = {"=": lambda a, b: a == b, "<": lambda a, b: a < b}


def _may_be_false(a: Atom) -> bool:
    return a == FALSE or a == BOOL_TOP


def _may_be_truthy(a: Atom) -> bool:
    return a != FALSE


def _type_test(value: FrozenSet[Atom], yes) -> FrozenSet[Atom]:
    """Shared shape of pair?/null?/number?: exact booleans when the whole
    set answers one way, both otherwise."""
    out = set()
    for a in value:
        out.add(TRUE if yes(a) else FALSE)
    return frozenset(out)


def prim_transfer(name: str, args: Tuple[FrozenSet[Atom], ...]) -> FrozenSet[Atom]:
    """Abstract result of applying a primitive to argument value sets.

    An empty argument set means no value reaches the call, so the result
    is empty (the call site is dead on this path).
    """
    if any(len(a) == 0 for a in args):
        return EMPTY
    if name in _ARITH:
        x, y = args
        if len(x) == 1 and len(y) == 1:
            (ax,), (ay,) = x, y
            if isinstance(ax, NumAtom) and isinstance(ay, NumAtom):
                return frozenset({NumAtom(_ARITH[name](ax.value, ay.value))})
        return frozenset({NUM_TOP})
    if name in _CMP:
        x, y = args
        if len(x) == 1 and len(y) == 1:
            (ax,), (ay,) = x, y
            if isinstance(ax, NumAtom) and isinstance(ay, NumAtom):
                return frozenset({BoolAtom(_CMP[name](ax.value, ay.value))})
        return frozenset({BOOL_TOP})
    if name == "cons":
        for side in args:
            for a in side:
                if isinstance(a, (LamAtom, PrimAtom)):
                    raise UnsupportedValueError(
                        "a procedure value flows into cons; closures stored "
                        "in pairs are outside the supported fragment")
        return frozenset({PAIR_TOP})
    if name in ("car", "cdr"):
        (x,) = args
        if PAIR_TOP in x:
            return UNIVERSAL_BASIC
        return EMPTY
    if name == "pair?":
        return _type_test(args[0], lambda a: a == PAIR_TOP)
    if name == "null?":
        return _type_test(args[0], lambda a: isinstance(a, NilAtom))
    if name == "number?":
        # BOOL_TOP etc. are definitely not numbers; NUM_TOP definitely is.
        return _type_test(args[0], lambda a: isinstance(a, NumAtom) or a == NUM_TOP)
    if name == "not":
        out = set()
        x = args[0]
        if any(_may_be_false(a) for a in x):
            out.add(TRUE)
        if any(_may_be_truthy(a) for a in x):
            out.add(FALSE)
        return frozenset(out)
    raise ValueError(f"unknown primitive {name!r}")


def branch_arms(test: FrozenSet[Atom], pruning: bool) -> Tuple[bool, bool]:
    """(take_then, take_else) for a branch on the given test set."""
    if len(test) == 0:
        return (False, False)
    if pruning:
        if test == frozenset({TRUE}):
            return (True, False)
        if test == frozenset({FALSE}):
            return (False, True)
    return (True, True)
