"""Partitioned CPS: the analyzed intermediate form.

Terms are split into user and continuation worlds.  User lambdas take
user parameters plus one continuation parameter; continuation lambdas
take a single user parameter.  Branches carry two continuation-lambda
arms.  Labels live on lambdas and calls and are pairwise distinct.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

from . import frontend as fe

STACK = "stack"
HEAP = "heap"


class CpsError(Exception):
    pass


# --- terms -------------------------------------------------------------------
# Nodes compare by identity: each labeled node occurs once per program.

@dataclass(frozen=True, eq=False)
class ULam:
    label: int
    params: Tuple[str, ...]
    kparam: str
    body: "Call"

    def __repr__(self):
        return f"<ulam {self.label}>"


@dataclass(frozen=True, eq=False)
class CLam:
    label: int
    param: str
    body: "Call"

    def __repr__(self):
        return f"<clam {self.label}>"


@dataclass(frozen=True, eq=False)
class UVar:
    name: str


@dataclass(frozen=True, eq=False)
class CVar:
    name: str


@dataclass(frozen=True, eq=False)
class CLit:
    value: object


@dataclass(frozen=True, eq=False)
class PrimRef:
    name: str


@dataclass(frozen=True, eq=False)
class UCall:
    label: int
    fn: "UExp"
    args: Tuple["UExp", ...]
    cont: "CExp"


@dataclass(frozen=True, eq=False)
class CCall:
    label: int
    cont: "CExp"
    arg: "UExp"


@dataclass(frozen=True, eq=False)
class Branch:
    label: int
    test: "UExp"
    then: "CExp"
    alt: "CExp"


UExp = Union[ULam, UVar, CLit, PrimRef]
CExp = Union[CLam, CVar]
Call = Union[UCall, CCall, Branch]


@dataclass(frozen=True, eq=False)
class CpsProgram:
    """The program lambda plus its recursive top-level binding group."""

    main: ULam
    bindings: Tuple[Tuple[str, ULam], ...] = ()

    def lambdas(self) -> Tuple[ULam, ...]:
        return tuple(l for _, l in self.bindings) + (self.main,)


# --- conversion ---------------------------------------------------------------

class _Gen:
    def __init__(self):
        self.n = 0

    def name(self, base: str) -> str:
        self.n += 1
        return f"%{base}{self.n}"


def _datum_value(v) -> object:
    return v


class _Converter:
    """One-pass higher-order transform; meta-continuations are applied
    where statically known, so no administrative redexes appear."""

    def __init__(self):
        self.gen = _Gen()

    def atom(self, expr: fe.Expr) -> UExp:
        if isinstance(expr, fe.Var):
            return UVar(expr.name)
        if isinstance(expr, fe.PrimName):
            return PrimRef(expr.name)
        if isinstance(expr, fe.Lit):
            return CLit(_datum_value(expr.value))
        if isinstance(expr, fe.Lam):
            k = self.gen.name("k")
            return ULam(0, expr.params, k, self.conv(expr.body, CVar(k)))
        raise TypeError(expr)

    def _is_atomic(self, expr: fe.Expr) -> bool:
        return isinstance(expr, (fe.Var, fe.PrimName, fe.Lit, fe.Lam))

    def _with_atom(self, expr: fe.Expr, use) -> Call:
        """Evaluate expr to an atom and hand it to `use`."""
        if self._is_atomic(expr):
            return use(self.atom(expr))
        return self.conv(expr, use)

    def _with_atoms(self, exprs, use) -> Call:
        atoms: List[UExp] = []

        def step(i: int) -> Call:
            if i == len(exprs):
                return use(tuple(atoms))

            def take(a: UExp) -> Call:
                atoms.append(a)
                return step(i + 1)

            return self._with_atom(exprs[i], take)

        return step(0)

    def _reify(self, k) -> CExp:
        if isinstance(k, (CLam, CVar)):
            return k
        u = self.gen.name("rv")
        return CLam(0, u, k(UVar(u)))

    def _send(self, atom: UExp, k) -> Call:
        if isinstance(k, (CLam, CVar)):
            return CCall(0, k, atom)
        return k(atom)

    def conv(self, expr: fe.Expr, k) -> Call:
        """k is either a CExp or a meta-continuation (atom -> Call)."""
        if self._is_atomic(expr):
            return self._send(self.atom(expr), k)
        if isinstance(expr, fe.App):
            def call(parts: Tuple[UExp, ...]) -> Call:
                fn, args = parts[0], parts[1:]
                return UCall(0, fn, args, self._reify(k))
            return self._with_atoms((expr.fn,) + expr.args, call)
        if isinstance(expr, fe.If):
            def branch(test_atom: UExp) -> Call:
                # Both arms duplicate a meta continuation; a shared CVar
                # continuation is spliced, not copied.
                then_arm = CLam(0, self.gen.name("br"),
                                self.conv(expr.then, k))
                alt_arm = CLam(0, self.gen.name("br"),
                               self.conv(expr.alt, k))
                return Branch(0, test_atom, then_arm, alt_arm)
            return self._with_atom(expr.test, branch)
        raise TypeError(expr)


def freshen_labels(program: CpsProgram) -> CpsProgram:
    """Rebuild with preorder labels 1..n; also splits any shared subterms
    introduced by branch duplication into distinct nodes."""
    counter = [0]

    def nxt() -> int:
        counter[0] += 1
        return counter[0]

    def uexp(e: UExp) -> UExp:
        if isinstance(e, ULam):
            lab = nxt()
            return ULam(lab, e.params, e.kparam, call(e.body))
        return e

    def cexp(q: CExp) -> CExp:
        if isinstance(q, CLam):
            lab = nxt()
            return CLam(lab, q.param, call(q.body))
        return q

    def call(c: Call) -> Call:
        lab = nxt()
        if isinstance(c, UCall):
            return UCall(lab, uexp(c.fn), tuple(uexp(a) for a in c.args),
                         cexp(c.cont))
        if isinstance(c, CCall):
            return CCall(lab, cexp(c.cont), uexp(c.arg))
        if isinstance(c, Branch):
            return Branch(lab, uexp(c.test), cexp(c.then), cexp(c.alt))
        raise TypeError(c)

    bindings = tuple((name, uexp(l)) for name, l in program.bindings)
    return CpsProgram(uexp(program.main), bindings)


def cps_convert(program: fe.SourceProgram) -> CpsProgram:
    """Convert an alphatized, labeled source program to Partitioned CPS."""
    conv = _Converter()
    bindings = tuple((name, conv.atom(lam))
                     for name, lam in program.definitions)
    k = conv.gen.name("k")
    main = ULam(0, (conv.gen.name("input"),), k,
                conv.conv(program.body, CVar(k)))
    return freshen_labels(CpsProgram(main, bindings))


# --- syntactic maps ------------------------------------------------------------

@dataclass(frozen=True)
class SyntaxMaps:
    """LV/LL partition maps, binder sites, and reference classification."""

    lv: Dict[int, FrozenSet[str]]
    ll: Dict[int, FrozenSet[int]]
    binder: Dict[str, int]
    heap_vars: FrozenSet[str]
    cont_vars: FrozenSet[str]
    refs: Tuple[Tuple[int, str, bool], ...]  # (site label, var, is_user)
    node_by_label: Dict[int, object]
    program: CpsProgram

    def is_stack_ref(self, psi: int, var: str) -> bool:
        return var in self.lv.get(psi, frozenset())

    def is_heap_var(self, var: str) -> bool:
        return var in self.heap_vars

    def is_cont_var(self, var: str) -> bool:
        return var in self.cont_vars

    def cont_var_of(self, psi: int) -> str:
        """The single continuation variable in LV(psi)."""
        for v in self.lv[psi]:
            if v in self.cont_vars:
                return v
        raise CpsError(f"no continuation variable in LV({psi})")


def compute_maps(program: CpsProgram) -> SyntaxMaps:
    """Partition labels by innermost enclosing user lambda and derive
    LV, LL, binders, references, and the heap-variable set."""
    classes: List[dict] = []
    label_class: Dict[int, int] = {}
    binder: Dict[str, int] = {}
    refs: List[Tuple[int, str, bool]] = []
    node_by_label: Dict[int, object] = {}
    cont_vars: set = set()

    def new_class() -> int:
        classes.append({"labels": set(), "vars": set()})
        return len(classes) - 1

    def note(lab: int, cls: int, node) -> None:
        if lab in node_by_label:
            raise CpsError(f"duplicate label {lab}")
        node_by_label[lab] = node
        classes[cls]["labels"].add(lab)
        label_class[lab] = cls

    def walk_u(e: UExp, cls: Optional[int]) -> None:
        if isinstance(e, ULam):
            mine = new_class()
            note(e.label, mine, e)
            for p in e.params:
                classes[mine]["vars"].add(p)
                binder[p] = e.label
            classes[mine]["vars"].add(e.kparam)
            binder[e.kparam] = e.label
            cont_vars.add(e.kparam)
            walk_call(e.body, mine)

    def walk_c(q: CExp, cls: int) -> None:
        if isinstance(q, CLam):
            note(q.label, cls, q)
            classes[cls]["vars"].add(q.param)
            binder[q.param] = q.label
            walk_call(q.body, cls)

    def walk_call(c: Call, cls: int) -> None:
        note(c.label, cls, c)
        if isinstance(c, UCall):
            if isinstance(c.fn, UVar):
                refs.append((c.label, c.fn.name, True))
            walk_u(c.fn, cls)
            for a in c.args:
                if isinstance(a, UVar):
                    refs.append((c.label, a.name, True))
                walk_u(a, cls)
            if isinstance(c.cont, CVar):
                refs.append((c.label, c.cont.name, False))
            walk_c(c.cont, cls)
        elif isinstance(c, CCall):
            if isinstance(c.cont, CVar):
                refs.append((c.label, c.cont.name, False))
            walk_c(c.cont, cls)
            if isinstance(c.arg, UVar):
                refs.append((c.label, c.arg.name, True))
            walk_u(c.arg, cls)
        elif isinstance(c, Branch):
            if isinstance(c.test, UVar):
                refs.append((c.label, c.test.name, True))
            walk_u(c.test, cls)
            walk_c(c.then, cls)
            walk_c(c.alt, cls)
        else:
            raise TypeError(c)

    for _, lam in program.bindings:
        walk_u(lam, None)
    walk_u(program.main, None)

    lv = {}
    ll = {}
    for lab, cls in label_class.items():
        lv[lab] = frozenset(classes[cls]["vars"])
        ll[lab] = frozenset(classes[cls]["labels"])

    heap = frozenset(v for psi, v, user in refs if user and v not in lv[psi])
    return SyntaxMaps(lv, ll, binder, heap, frozenset(cont_vars),
                      tuple(refs), node_by_label, program)


def classify_ref(maps: SyntaxMaps, psi: int, var: str) -> str:
    """STACK iff var ∈ LV(psi); the site must actually reference var."""
    if not any(p == psi and v == var for p, v, _ in maps.refs):
        raise ValueError(f"{var!r} is not referenced at label {psi}")
    return STACK if maps.is_stack_ref(psi, var) else HEAP


def heap_vars(maps: SyntaxMaps) -> FrozenSet[str]:
    return maps.heap_vars


def ref_counts(maps: SyntaxMaps) -> Tuple[int, int]:
    """(stack references, heap references) over all occurrences."""
    s = h = 0
    for psi, v, _user in maps.refs:
        if maps.is_stack_ref(psi, v):
            s += 1
        else:
            h += 1
    return s, h


# --- validation ----------------------------------------------------------------

def _free_cont_vars(c: Call, bound: frozenset) -> set:
    out: set = set()

    def go_c(q: CExp, bound: frozenset) -> None:
        if isinstance(q, CVar):
            if q.name not in bound:
                out.add(q.name)
        else:
            go(q.body, bound)

    def go_u(e: UExp, bound: frozenset) -> None:
        if isinstance(e, ULam):
            go(e.body, bound | {e.kparam})

    def go(c: Call, bound: frozenset) -> None:
        if isinstance(c, UCall):
            go_u(c.fn, bound)
            for a in c.args:
                go_u(a, bound)
            go_c(c.cont, bound)
        elif isinstance(c, CCall):
            go_c(c.cont, bound)
            go_u(c.arg, bound)
        elif isinstance(c, Branch):
            go_u(c.test, bound)
            go_c(c.then, bound)
            go_c(c.alt, bound)

    go(c, bound)
    return out


def validate(program: CpsProgram) -> List[str]:
    """Check grammar constraints; returns violations instead of raising."""
    from .values import PRIM_ARITY

    problems: List[str] = []
    labels: set = set()
    binders: List[str] = [name for name, _ in program.bindings]

    def seen_label(lab: int) -> None:
        if lab in labels:
            problems.append(f"label {lab} is not unique")
        labels.add(lab)

    def walk_u(e: UExp) -> None:
        if isinstance(e, ULam):
            seen_label(e.label)
            binders.extend(e.params)
            binders.append(e.kparam)
            free_k = _free_cont_vars(e.body, frozenset({e.kparam}))
            if free_k:
                problems.append(
                    f"free continuation variable(s) {sorted(free_k)} in "
                    f"user lambda {e.label}")
            walk_call(e.body)

    def walk_c(q: CExp) -> None:
        if isinstance(q, CLam):
            seen_label(q.label)
            binders.append(q.param)
            walk_call(q.body)

    def walk_call(c: Call) -> None:
        seen_label(c.label)
        if isinstance(c, UCall):
            if isinstance(c.fn, PrimRef):
                want = PRIM_ARITY.get(c.fn.name)
                if want is None:
                    problems.append(f"unknown primitive {c.fn.name!r} "
                                    f"at {c.label}")
                elif want != len(c.args):
                    problems.append(
                        f"primitive {c.fn.name} applied to {len(c.args)} "
                        f"argument(s) at {c.label}, expects {want}")
                if c.fn.name == "cons" and any(isinstance(a, ULam)
                                               for a in c.args):
                    problems.append(
                        f"lambda stored in a pair at {c.label}; closures in "
                        f"data are unsupported")
            walk_u(c.fn)
            for a in c.args:
                walk_u(a)
            walk_c(c.cont)
        elif isinstance(c, CCall):
            walk_c(c.cont)
            walk_u(c.arg)
        elif isinstance(c, Branch):
            if not isinstance(c.then, CLam) or not isinstance(c.alt, CLam):
                problems.append(f"branch {c.label} has a non-lambda arm")
            walk_u(c.test)
            walk_c(c.then)
            walk_c(c.alt)
        else:
            problems.append(f"unknown call node {c!r}")

    for _, lam in program.bindings:
        walk_u(lam)
    walk_u(program.main)

    dupes = {b for b in binders if binders.count(b) > 1}
    if dupes:
        problems.append(f"duplicate binder name(s): {sorted(dupes)}")

    if not problems:
        maps = compute_maps(program)
        for psi, v, user in maps.refs:
            if not user and not maps.is_stack_ref(psi, v):
                problems.append(
                    f"continuation variable {v!r} has a heap reference "
                    f"at {psi}")
    return problems


# --- debug printer --------------------------------------------------------------

def show_uexp(e: UExp) -> str:
    if isinstance(e, ULam):
        ps = " ".join(e.params + (e.kparam,))
        return f"(λ{e.label} ({ps}) {show_call(e.body)})"
    if isinstance(e, UVar):
        return e.name
    if isinstance(e, CLit):
        return fe._show_datum(e.value)
    if isinstance(e, PrimRef):
        return e.name
    raise TypeError(e)


def show_cexp(q: CExp) -> str:
    if isinstance(q, CLam):
        return f"(λ{q.label} ({q.param}) {show_call(q.body)})"
    return q.name


def show_call(c: Call) -> str:
    if isinstance(c, UCall):
        inner = " ".join([show_uexp(c.fn)] + [show_uexp(a) for a in c.args]
                         + [show_cexp(c.cont)])
        return f"({inner})^{c.label}"
    if isinstance(c, CCall):
        return f"({show_cexp(c.cont)} {show_uexp(c.arg)})^{c.label}"
    if isinstance(c, Branch):
        return (f"(if {show_uexp(c.test)} {show_cexp(c.then)} "
                f"{show_cexp(c.alt)})^{c.label}")
    raise TypeError(c)


def show_program(program: CpsProgram) -> str:
    lines = [f"{name} = {show_uexp(lam)}" for name, lam in program.bindings]
    lines.append(show_uexp(program.main))
    return "\n".join(lines)


# --- pipeline -------------------------------------------------------------------

def compile_source(source: str) -> Tuple[CpsProgram, SyntaxMaps]:
    """Frontend pipeline: parse, alphatize, label, CPS-convert, validate."""
    program = cps_convert(fe.front(source))
    problems = validate(program)
    if problems:
        raise CpsError("; ".join(problems))
    return program, compute_maps(program)
