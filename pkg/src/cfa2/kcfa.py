"""Baseline k-CFA (k in {0, 1}) over the same Partitioned CPS.

Call-strings polyvariance with a global monotone store and
restart-on-growth widening.  Continuations are stored as *sets* of
closures, so a function may return to any continuation that ever
flowed to its continuation parameter: exactly the call/return mismatch
CFA2 eliminates.  Contours record the most recent user-call labels.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, Tuple, Union

from .abstract import literal_atoms
from .cps import (Branch, CCall, CLam, CLit, CpsProgram, CVar, PrimRef,
                  SyntaxMaps, UCall, ULam, UVar)
from .values import (EMPTY, HALT, FrozenMap, Halt, LamAtom, PrimAtom, join,
                     prim_transfer, branch_arms, sorted_atoms)

Contour = Tuple[int, ...]
Value = FrozenSet[object]


@dataclass(frozen=True)
class KLamAtom:
    """A user closure: lambda plus the contours of its free variables."""

    lam: ULam
    benv: FrozenMap

    def sort_key(self):
        return (0, self.lam.label, repr(self.benv.items()))

    def __repr__(self):
        return f"lam{self.lam.label}{self.benv!r}"


@dataclass(frozen=True)
class KCont:
    lam: CLam
    benv: FrozenMap


@dataclass(frozen=True)
class KcfaResult:
    flow: Dict[Tuple[int, str], Value]
    finals: Value
    visited: int
    k: int
    iterations: int


def _free_vars(node) -> frozenset:
    """Free user and continuation variables of a CPS term."""
    def go(n, bound):
        if isinstance(n, ULam):
            return go(n.body, bound | set(n.params) | {n.kparam})
        if isinstance(n, CLam):
            return go(n.body, bound | {n.param})
        if isinstance(n, (UVar, CVar)):
            return set() if n.name in bound else {n.name}
        if isinstance(n, UCall):
            out = go(n.fn, bound) | go(n.cont, bound)
            for a in n.args:
                out |= go(a, bound)
            return out
        if isinstance(n, CCall):
            return go(n.cont, bound) | go(n.arg, bound)
        if isinstance(n, Branch):
            return go(n.test, bound) | go(n.then, bound) | go(n.alt, bound)
        return set()

    return frozenset(go(node, set()))


class KcfaAnalyzer:
    def __init__(self, program: CpsProgram, maps: SyntaxMaps, k: int,
                 branch_pruning: bool = True, input_value: Value = EMPTY):
        if k not in (0, 1):
            raise ValueError("k must be 0 or 1")
        self.program = program
        self.maps = maps
        self.k = k
        self.branch_pruning = branch_pruning
        self.input_value = input_value
        self._fv_cache: Dict[int, frozenset] = {}
        self.visited_keys: set = set()
        self.iterations = 0

    # --- helpers ---

    def _fv(self, node) -> frozenset:
        key = id(node)
        if key not in self._fv_cache:
            self._fv_cache[key] = _free_vars(node)
        return self._fv_cache[key]

    def _restrict(self, benv: FrozenMap, node) -> FrozenMap:
        fv = self._fv(node)
        return FrozenMap({v: c for v, c in benv.items() if v in fv})

    def _trunc(self, label: int, contour: Contour) -> Contour:
        return ((label,) + contour)[:self.k]

    def _store_join(self, var: str, contour: Contour, value: Value) -> None:
        key = (var, contour)
        old = self.store.get(key, EMPTY)
        new = join(old, value)
        if new != old:
            self.store[key] = new
            self.grew = True

    def _kstore_join(self, var: str, contour: Contour, conts) -> None:
        key = (var, contour)
        old = self.kstore.get(key, frozenset())
        new = old | conts
        if new != old:
            self.kstore[key] = new
            self.grew = True

    def eval_u(self, e, benv: FrozenMap, psi: int) -> Value:
        if isinstance(e, ULam):
            return frozenset({KLamAtom(e, self._restrict(benv, e))})
        if isinstance(e, CLit):
            return literal_atoms(e.value)
        if isinstance(e, PrimRef):
            return frozenset({PrimAtom(e.name)})
        if isinstance(e, UVar):
            contour = benv.get(e.name)
            value = (EMPTY if contour is None
                     else self.store.get((e.name, contour), EMPTY))
            key = (psi, e.name)
            self.flow[key] = join(self.flow.get(key, EMPTY), value)
            return value
        raise TypeError(e)

    def eval_k(self, q, benv: FrozenMap) -> frozenset:
        if isinstance(q, CLam):
            return frozenset({KCont(q, self._restrict(benv, q))})
        contour = benv.get(q.name)
        if contour is None:
            return frozenset()
        return self.kstore.get((q.name, contour), frozenset())

    # --- transfer ---

    def _enqueue(self, call, contour: Contour, benv: FrozenMap) -> None:
        state = (call, contour, self._restrict(benv, call))
        if state not in self.seen:
            self.seen.add(state)
            self.work.append(state)
            self.visited_keys.add((call.label, contour))

    def _apply_cont(self, conts: frozenset, value: Value,
                    contour: Contour) -> None:
        for kc in sorted(conts, key=lambda c: (isinstance(c, Halt),
                                               getattr(getattr(c, "lam", None),
                                                       "label", -1))):
            if isinstance(kc, Halt):
                self.finals = join(self.finals, value)
                continue
            lam = kc.lam
            self._store_join(lam.param, contour, value)
            benv = dict(kc.benv.items())
            benv[lam.param] = contour
            self._enqueue(lam.body, contour, FrozenMap(benv))

    def _apply_proc(self, atom, args: Tuple[Value, ...], conts: frozenset,
                    label: int, contour: Contour) -> None:
        if isinstance(atom, PrimAtom):
            self._apply_cont(conts, prim_transfer(atom.name, args), contour)
            return
        lam = atom.lam
        if len(args) != len(lam.params):
            return
        inner = self._trunc(label, contour)
        benv = dict(atom.benv.items())
        for p, a in zip(lam.params, args):
            self._store_join(p, inner, a)
            benv[p] = inner
        self._kstore_join(lam.kparam, inner, conts)
        benv[lam.kparam] = inner
        self._enqueue(lam.body, inner, FrozenMap(benv))

    def _transfer(self, state) -> None:
        call, contour, benv = state
        if isinstance(call, UCall):
            fval = self.eval_u(call.fn, benv, call.label)
            args = tuple(self.eval_u(a, benv, call.label) for a in call.args)
            conts = self.eval_k(call.cont, benv)
            for atom in sorted_atoms(fval):
                if isinstance(atom, (KLamAtom, PrimAtom)):
                    self._apply_proc(atom, args, conts, call.label, contour)
        elif isinstance(call, CCall):
            conts = self.eval_k(call.cont, benv)
            value = self.eval_u(call.arg, benv, call.label)
            self._apply_cont(conts, value, contour)
        elif isinstance(call, Branch):
            test = self.eval_u(call.test, benv, call.label)
            take_then, take_else = branch_arms(test, self.branch_pruning)
            if take_then:
                self._apply_cont(self.eval_k(call.then, benv), test, contour)
            if take_else:
                self._apply_cont(self.eval_k(call.alt, benv), test, contour)
        else:
            raise TypeError(call)

    # --- driver ---

    def analyze(self) -> KcfaResult:
        self.store: Dict = {}
        self.kstore: Dict = {}
        seed_benv = FrozenMap({name: () for name, _ in self.program.bindings})
        for name, lam in self.program.bindings:
            self.store[(name, ())] = frozenset(
                {KLamAtom(lam, self._restrict(seed_benv, lam))})
        main = self.program.main
        benv = dict(seed_benv.items())
        for p in main.params:
            self.store[(p, ())] = self.input_value
            benv[p] = ()
        self.kstore[(main.kparam, ())] = frozenset({HALT})
        benv[main.kparam] = ()
        benv0 = FrozenMap(benv)

        while True:
            self.flow: Dict[Tuple[int, str], Value] = {}
            self.finals: Value = EMPTY
            self.seen: set = set()
            self.work: deque = deque()
            self.grew = False
            self._enqueue(main.body, (), benv0)
            while self.work:
                self.iterations += 1
                self._transfer(self.work.popleft())
            if not self.grew:
                break

        flow = {key: _project(v) for key, v in self.flow.items()}
        return KcfaResult(flow=flow, finals=_project(self.finals),
                          visited=len(self.visited_keys), k=self.k,
                          iterations=self.iterations)


def _project(value: Value) -> Value:
    """Collapse contour-carrying closures to plain lambda atoms so flow
    maps compare across analyses."""
    return frozenset(LamAtom(a.lam) if isinstance(a, KLamAtom) else a
                     for a in value)


def kcfa_analyze(program: CpsProgram, maps: SyntaxMaps, k: int,
                 branch_pruning: bool = True,
                 input_value: Value = EMPTY) -> KcfaResult:
    return KcfaAnalyzer(program, maps, k, branch_pruning,
                        input_value).analyze()
