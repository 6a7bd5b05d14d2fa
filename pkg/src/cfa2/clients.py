"""Analysis clients: constant propagation, folding, precision metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Tuple

from .cps import (Branch, CCall, CLam, CLit, CpsProgram, SyntaxMaps, UCall,
                  ULam, UVar)
from .local import LEval
from .summarize import AnalysisResult
from .values import (BoolAtom, LamAtom, NilAtom, NumAtom, StrAtom,
                     is_exact_literal)

Flow = Dict[Tuple[int, str], FrozenSet[object]]


@dataclass(frozen=True)
class ConstantReport:
    label: int
    var: str
    value: object  # the literal, as a plain Python value


def _atom_literal(atom) -> object:
    if isinstance(atom, NumAtom):
        return atom.value
    if isinstance(atom, BoolAtom):
        return atom.value
    if isinstance(atom, StrAtom):
        return atom.value
    if isinstance(atom, NilAtom):
        return ()
    raise TypeError(atom)


def propagate_constants(flow: Flow) -> List[ConstantReport]:
    """Reference sites whose flow is a singleton exact literal."""
    out = []
    for (label, var), value in sorted(flow.items()):
        if is_exact_literal(value):
            (atom,) = value
            out.append(ConstantReport(label, var, _atom_literal(atom)))
    return out


def count_constants(flow: Flow) -> Tuple[int, List[ConstantReport]]:
    reports = propagate_constants(flow)
    return len(reports), reports


def fold_constants(program: CpsProgram,
                   reports: List[ConstantReport]) -> CpsProgram:
    """Replace each reported reference by its literal; labels unchanged."""
    table = {(r.label, r.var): r.value for r in reports}

    def subst(e, label: int):
        if isinstance(e, UVar) and (label, e.name) in table:
            return CLit(table[(label, e.name)])
        return uexp(e)

    def uexp(e):
        if isinstance(e, ULam):
            return ULam(e.label, e.params, e.kparam, call(e.body))
        return e

    def cexp(q):
        if isinstance(q, CLam):
            return CLam(q.label, q.param, call(q.body))
        return q

    def call(c):
        if isinstance(c, UCall):
            return UCall(c.label, subst(c.fn, c.label),
                         tuple(subst(a, c.label) for a in c.args),
                         cexp(c.cont))
        if isinstance(c, CCall):
            return CCall(c.label, cexp(c.cont), subst(c.arg, c.label))
        if isinstance(c, Branch):
            return Branch(c.label, subst(c.test, c.label), cexp(c.then),
                          cexp(c.alt))
        raise TypeError(c)

    bindings = tuple((n, uexp(l)) for n, l in program.bindings)
    return CpsProgram(uexp(program.main), bindings)


# --- fake-rebinding metric -----------------------------------------------------

def fake_rebinding_candidates(maps: SyntaxMaps) -> List[Tuple[str, int, int]]:
    """Variables used as the operator of two stack-referenced call sites
    in one procedure: (var, first site, second site) per candidate."""
    sites: Dict[str, List[int]] = {}
    for lab, node in sorted(maps.node_by_label.items()):
        if (isinstance(node, UCall) and isinstance(node.fn, UVar)
                and maps.is_stack_ref(lab, node.fn.name)):
            sites.setdefault(node.fn.name, []).append(lab)
    out = []
    for var, labs in sorted(sites.items()):
        if len(labs) >= 2:
            out.append((var, labs[0], labs[1]))
    return out


def joint_operator_flows(result: AnalysisResult, var: str, site1: int,
                         site2: int) -> int:
    """How many (callee at site1, callee at site2) combinations the
    analysis explores jointly.  With stack filtering the frame at the
    second site remembers the first commitment, so crossings vanish."""
    triples = list(result.callers) + list(result.tcallers)
    first = [t for t in triples if _site_of(t[1]) == site1]
    second = [t for t in triples if _site_of(t[1]) == site2]
    count = 0
    for e1, _c1, callee1 in first:
        for e2, c2, _callee2 in second:
            if e1 != e2:
                continue
            ops = c2.frame.get(var)
            if ops is not None and LamAtom(callee1.proc) in ops:
                count += 1
    return count


def kcfa_joint_flows(flow: Flow, var: str, site1: int, site2: int) -> int:
    """Joint flows for a contour-based analysis: the per-site operator
    sets pair freely."""
    n1 = sum(1 for a in flow.get((site1, var), ()) if isinstance(a, LamAtom))
    n2 = sum(1 for a in flow.get((site2, var), ()) if isinstance(a, LamAtom))
    return n1 * n2


def _site_of(state) -> int:
    return state.call.label if isinstance(state, LEval) else -1
