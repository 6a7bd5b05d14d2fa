"""Abstract semantics with an explicit, unbounded frame stack.

A frame pushes at every function entry and pops at tail calls and at
returns; intermediate results extend the top frame.  Stack references
read the top frame, heap references read the heap.  Choosing a callee
at a user call strong-updates a stack-referenced operator ("stack
filtering"), which prevents fake rebinding.

Also defines the map from concrete machine states onto abstract states
and the precision order used by the simulation tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Optional, Tuple, Union

from . import concrete
from .config import DEFAULT_CONFIG, AnalyzerConfig
from .cps import (Branch, CCall, CExp, CLam, CLit, CpsProgram, CVar, PrimRef,
                  SyntaxMaps, UCall, UExp, ULam, UVar)
from .values import (EMPTY, EMPTY_MAP, HALT, BoolAtom, FrozenMap, Halt,
                     LamAtom, NIL, NilAtom, NumAtom, PAIR_TOP, PrimAtom,
                     StrAtom, branch_arms, heap_join, make_value, prim_transfer,
                     sorted_atoms, value_le)

AbstractCont = Union[CLam, Halt]
Value = FrozenSet[object]
Stack = Tuple[FrozenMap, ...]


class AbstractInvariantError(Exception):
    pass


class StackUnderflow(AbstractInvariantError):
    pass


# --- states -------------------------------------------------------------------

@dataclass(frozen=True)
class AEval:
    call: Union[UCall, CCall, Branch]
    stack: Stack
    heap: FrozenMap


@dataclass(frozen=True)
class AUApply:
    proc: ULam
    args: Tuple[Value, ...]
    cont: AbstractCont
    stack: Stack
    heap: FrozenMap


@dataclass(frozen=True)
class ACApply:
    cont: AbstractCont
    arg: Value
    stack: Stack
    heap: FrozenMap


AbstractState = Union[AEval, AUApply, ACApply]


def is_final(state: AbstractState) -> bool:
    return (isinstance(state, ACApply) and state.cont is HALT
            and not state.stack)


# --- value helpers ---------------------------------------------------------------

def literal_atoms(value) -> Value:
    if value is True or value is False:
        return frozenset({BoolAtom(value)})
    if isinstance(value, int):
        return frozenset({NumAtom(value)})
    if isinstance(value, str):
        return frozenset({StrAtom(value)})
    if value == ():
        return frozenset({NIL})
    if isinstance(value, tuple):
        return frozenset({PAIR_TOP})
    raise TypeError(value)


def show_cont(cont: AbstractCont) -> str:
    return "halt" if isinstance(cont, Halt) else f"λ{cont.label}"


# --- the machine ------------------------------------------------------------------

class AbstractMachine:
    """Transition function over abstract states for one program."""

    def __init__(self, maps: SyntaxMaps,
                 config: AnalyzerConfig = DEFAULT_CONFIG):
        self.maps = maps
        self.config = config

    # Âu: lambdas close syntactically, stack references read the top
    # frame, heap references read the heap (empty set when unbound).
    def eval_u(self, e: UExp, psi: int, stack: Stack, heap: FrozenMap) -> Value:
        if isinstance(e, ULam):
            return frozenset({LamAtom(e)})
        if isinstance(e, CLit):
            return literal_atoms(e.value)
        if isinstance(e, PrimRef):
            return frozenset({PrimAtom(e.name)})
        if isinstance(e, UVar):
            if self.maps.is_stack_ref(psi, e.name):
                if not stack:
                    raise StackUnderflow(f"stack ref {e.name} on empty stack")
                try:
                    v = stack[0][e.name]
                except KeyError:
                    raise AbstractInvariantError(
                        f"{e.name} missing from top frame at {psi}")
                if not isinstance(v, frozenset):
                    raise AbstractInvariantError(
                        f"{e.name} holds a continuation at {psi}")
                return v
            return heap.get(e.name, EMPTY)
        raise TypeError(e)

    # Âk: continuation lambdas are immediate, variables read the top frame.
    def eval_k(self, q: CExp, stack: Stack) -> AbstractCont:
        if isinstance(q, CLam):
            return q
        if not stack:
            raise StackUnderflow(f"continuation ref {q.name} on empty stack")
        try:
            v = stack[0][q.name]
        except KeyError:
            raise AbstractInvariantError(f"{q.name} missing from top frame")
        if isinstance(v, frozenset):
            raise AbstractInvariantError(f"{q.name} holds a user value")
        return v

    def heap_bind(self, heap: FrozenMap, var: str, value: Value) -> FrozenMap:
        if self.maps.is_heap_var(var):
            return heap_join(heap, var, value)
        return heap

    def pop_tail(self, stack: Stack) -> Stack:
        if not stack:
            raise StackUnderflow("pop on empty stack")
        return stack[1:]

    def step(self, state: AbstractState) -> Tuple[AbstractState, ...]:
        """All successors, deterministically ordered; () when final or stuck."""
        try:
            if isinstance(state, AEval):
                if isinstance(state.call, UCall):
                    return self._step_ucall(state)
                if isinstance(state.call, CCall):
                    return self._step_ccall(state)
                return self._step_branch(state)
            if isinstance(state, AUApply):
                return self._step_uapply(state)
            if isinstance(state, ACApply):
                return self._step_capply(state)
        except StackUnderflow:
            return ()
        raise TypeError(state)

    def _step_ucall(self, state: AEval) -> Tuple[AbstractState, ...]:
        call: UCall = state.call
        fval = self.eval_u(call.fn, call.label, state.stack, state.heap)
        args = tuple(self.eval_u(a, call.label, state.stack, state.heap)
                     for a in call.args)
        cont = self.eval_k(call.cont, state.stack)
        tail = isinstance(call.cont, CVar)
        out = []
        for atom in sorted_atoms(fval):
            if isinstance(atom, LamAtom):
                if tail:
                    st = self.pop_tail(state.stack)
                elif (self.config.stack_filtering
                      and isinstance(call.fn, UVar)
                      and self.maps.is_stack_ref(call.label, call.fn.name)):
                    top = state.stack[0].set(call.fn.name,
                                             frozenset({atom}))
                    st = (top,) + state.stack[1:]
                else:
                    st = state.stack
                out.append(AUApply(atom.lam, args, cont, st, state.heap))
            elif isinstance(atom, PrimAtom):
                result = prim_transfer(atom.name, args)
                st = self.pop_tail(state.stack) if tail else state.stack
                out.append(ACApply(cont, result, st, state.heap))
            # other atoms: calling a non-procedure, no successor
        return tuple(out)

    def _step_ccall(self, state: AEval) -> Tuple[AbstractState, ...]:
        call: CCall = state.call
        cont = self.eval_k(call.cont, state.stack)
        arg = self.eval_u(call.arg, call.label, state.stack, state.heap)
        if isinstance(call.cont, CVar):
            st = self.pop_tail(state.stack)
        else:
            st = state.stack
        return (ACApply(cont, arg, st, state.heap),)

    def _step_branch(self, state: AEval) -> Tuple[AbstractState, ...]:
        call: Branch = state.call
        test = self.eval_u(call.test, call.label, state.stack, state.heap)
        take_then, take_else = branch_arms(test, self.config.branch_pruning)
        out = []
        if take_then:
            out.append(ACApply(call.then, test, state.stack, state.heap))
        if take_else:
            out.append(ACApply(call.alt, test, state.stack, state.heap))
        return tuple(out)

    def _step_uapply(self, state: AUApply) -> Tuple[AbstractState, ...]:
        lam = state.proc
        if len(state.args) != len(lam.params):
            return ()
        frame = {p: a for p, a in zip(lam.params, state.args)}
        frame[lam.kparam] = state.cont
        heap = state.heap
        for p, a in zip(lam.params, state.args):
            heap = self.heap_bind(heap, p, a)
        return (AEval(lam.body, (FrozenMap(frame),) + state.stack, heap),)

    def _step_capply(self, state: ACApply) -> Tuple[AbstractState, ...]:
        if isinstance(state.cont, Halt):
            return ()
        lam = state.cont
        if not state.stack:
            raise StackUnderflow("continuation entry on empty stack")
        top = state.stack[0].set(lam.param, state.arg)
        heap = self.heap_bind(state.heap, lam.param, state.arg)
        return (AEval(lam.body, (top,) + state.stack[1:], heap),)


def initial_heap(program: CpsProgram) -> FrozenMap:
    """Heap seeded with the top-level recursive binding group."""
    return FrozenMap({name: frozenset({LamAtom(lam)})
                      for name, lam in program.bindings})


def inject(program: CpsProgram, input_value: Value = EMPTY) -> AUApply:
    return AUApply(program.main, (input_value,), HALT, (),
                   initial_heap(program))


# --- concrete-to-abstract map -------------------------------------------------------

def abstract_value(v) -> Value:
    if isinstance(v, concrete.UClos):
        return frozenset({LamAtom(v.lam)})
    if isinstance(v, concrete.PrimValue):
        return frozenset({PrimAtom(v.name)})
    if isinstance(v, concrete.Pair):
        return frozenset({PAIR_TOP})
    if isinstance(v, concrete.Nil):
        return frozenset({NIL})
    if v is True or v is False:
        return frozenset({BoolAtom(v)})
    if isinstance(v, int):
        return frozenset({NumAtom(v)})
    if isinstance(v, str):
        return frozenset({StrAtom(v)})
    raise TypeError(f"not a user value: {v!r}")


def abstract_cont(c) -> AbstractCont:
    if c is concrete.HALT or isinstance(c, Halt):
        return HALT
    if isinstance(c, concrete.CClos):
        return c.lam
    raise TypeError(f"not a continuation: {c!r}")


def _ve_heap(maps: SyntaxMaps, ve: concrete.VarEnvLog,
             version: int) -> FrozenMap:
    acc: dict = {}
    for var, _time, value in ve.entries(version):
        if maps.is_heap_var(var):
            acc[var] = make_value(acc.get(var, EMPTY) | abstract_value(value))
    return FrozenMap(acc)


def _to_stack(maps: SyntaxMaps, lv: FrozenSet[str], benv: FrozenMap,
              ve: concrete.VarEnvLog, version: int) -> Stack:
    """Reconstruct the frame stack for one live-variable class, chasing
    continuation bindings down to halt."""
    frame: dict = {}
    kvar = None
    for v in lv:
        if maps.is_cont_var(v):
            kvar = v
            continue
        if v in benv:
            frame[v] = abstract_value(ve.lookup(v, benv[v], version))
    assert kvar is not None
    kval = ve.lookup(kvar, benv[kvar], version)
    if kval is concrete.HALT:
        frame[kvar] = HALT
        return (FrozenMap(frame),)
    assert isinstance(kval, concrete.CClos)
    frame[kvar] = kval.lam
    rest = _to_stack(maps, maps.lv[kval.lam.label], kval.benv, ve, version)
    return (FrozenMap(frame),) + rest


def abstract_state(state: concrete.ConcreteState,
                   maps: SyntaxMaps) -> AbstractState:
    """The |·| map from concrete machine states to abstract states."""
    ve, version = state.ve, state.version
    heap = _ve_heap(maps, ve, version)
    if isinstance(state, concrete.Eval):
        st = _to_stack(maps, maps.lv[state.call.label], state.benv, ve,
                       version)
        return AEval(state.call, st, heap)
    if isinstance(state, concrete.UApply):
        assert isinstance(state.proc, concrete.UClos)
        if state.cont is concrete.HALT:
            st: Stack = ()
        else:
            clam = state.cont.lam
            st = _to_stack(maps, maps.lv[clam.label], state.cont.benv, ve,
                           version)
        return AUApply(state.proc.lam,
                       tuple(abstract_value(a) for a in state.args),
                       abstract_cont(state.cont), st, heap)
    if isinstance(state, concrete.CApply):
        if state.cont is concrete.HALT:
            return ACApply(HALT, abstract_value(state.arg), (), heap)
        clam = state.cont.lam
        st = _to_stack(maps, maps.lv[clam.label], state.cont.benv, ve, version)
        return ACApply(clam, abstract_value(state.arg), st, heap)
    raise TypeError(state)


# --- the precision order --------------------------------------------------------------

def frame_le(f1: FrozenMap, f2: FrozenMap) -> bool:
    for k, v in f1.items():
        if k not in f2:
            return False
        w = f2[k]
        if isinstance(v, frozenset):
            if not isinstance(w, frozenset) or not value_le(v, w):
                return False
        elif v is not w:  # continuation bindings must agree exactly
            return False
    return True


def stack_le(s1: Stack, s2: Stack) -> bool:
    return (len(s1) == len(s2)
            and all(frame_le(a, b) for a, b in zip(s1, s2)))


def heap_le(h1: FrozenMap, h2: FrozenMap) -> bool:
    return all(value_le(v, h2.get(k, EMPTY)) for k, v in h1.items())


def le_state(s1: AbstractState, s2: AbstractState) -> bool:
    """Structural order: same syntax, pointwise values/frames/heaps,
    stacks of equal shape, identical continuations."""
    if isinstance(s1, AEval) and isinstance(s2, AEval):
        return (s1.call is s2.call and stack_le(s1.stack, s2.stack)
                and heap_le(s1.heap, s2.heap))
    if isinstance(s1, AUApply) and isinstance(s2, AUApply):
        return (s1.proc is s2.proc
                and len(s1.args) == len(s2.args)
                and all(value_le(a, b) for a, b in zip(s1.args, s2.args))
                and s1.cont is s2.cont
                and stack_le(s1.stack, s2.stack)
                and heap_le(s1.heap, s2.heap))
    if isinstance(s1, ACApply) and isinstance(s2, ACApply):
        return (s1.cont is s2.cont
                and value_le(s1.arg, s2.arg)
                and stack_le(s1.stack, s2.stack)
                and heap_le(s1.heap, s2.heap))
    return False


# --- debug ------------------------------------------------------------------------------

def show_frame(frame: FrozenMap) -> str:
    parts = []
    for k, v in frame.items():
        if isinstance(v, frozenset):
            parts.append(f"{k}↦{{{', '.join(map(repr, sorted_atoms(v)))}}}")
        else:
            parts.append(f"{k}↦{show_cont(v)}")
    return "[" + " ".join(parts) + "]"


def show_state(state: AbstractState) -> str:
    from .cps import show_call
    stack = "⟨" + ", ".join(show_frame(f) for f in state.stack) + "⟩"
    heap = show_frame(state.heap)
    if isinstance(state, AEval):
        return f"({show_call(state.call)}, {stack}, {heap})"
    if isinstance(state, AUApply):
        args = ", ".join("{" + ", ".join(map(repr, sorted_atoms(a))) + "}"
                         for a in state.args)
        return (f"(λ{state.proc.label}, {args}, {show_cont(state.cont)}, "
                f"{stack}, {heap})")
    return f"({show_cont(state.cont)}, " + \
        "{" + ", ".join(map(repr, sorted_atoms(state.arg))) + "}" + \
        f", {stack}, {heap})"
