"""Local semantics: single-frame states feeding the summarization engine.

A local state is an abstract state with the stack cut down to the top
frame's user bindings.  The local step relation covers exactly the
transitions that stay inside a procedure or enter a callee; returns are
reconstructed by the workset algorithm from summaries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import FrozenSet, Optional, Tuple, Union

from . import abstract
from .config import DEFAULT_CONFIG, AnalyzerConfig
from .cps import (Branch, CCall, CLam, CVar, PrimRef, SyntaxMaps, UCall, ULam,
                  UVar)
from .values import (EMPTY, EMPTY_MAP, HALT, FrozenMap, Halt, LamAtom,
                     PrimAtom, branch_arms, heap_join, prim_transfer,
                     sorted_atoms)

Value = FrozenSet[object]
Cont = Union[CLam, Halt]


@dataclass(frozen=True)
class LEval:
    call: Union[UCall, CCall, Branch]
    frame: FrozenMap  # user bindings only
    heap: FrozenMap


@dataclass(frozen=True)
class LEntry:
    proc: ULam
    args: Tuple[Value, ...]
    heap: FrozenMap


@dataclass(frozen=True)
class LCApply:
    cont: Cont
    arg: Value
    frame: FrozenMap
    heap: FrozenMap


LocalState = Union[LEval, LEntry, LCApply]


class Kind(enum.Enum):
    ENTRY = "Entry"
    EXIT_CEVAL = "Exit-CEval"
    EXIT_TC = "Exit-TC"
    CALL = "Call"
    INNER = "Inner"
    CAPPLY = "CApply"


def classify(state: LocalState) -> Kind:
    """Syntactic, total classification driving the workset dispatch."""
    if isinstance(state, LEntry):
        return Kind.ENTRY
    if isinstance(state, LCApply):
        return Kind.CAPPLY
    call = state.call
    if isinstance(call, CCall):
        return Kind.EXIT_CEVAL if isinstance(call.cont, CVar) else Kind.INNER
    if isinstance(call, Branch):
        return Kind.INNER
    # A primitive-operator call computes in place: with a lambda
    # continuation it is an inner step, in tail position it returns a
    # value like a CEval exit.
    if isinstance(call.fn, PrimRef):
        return (Kind.EXIT_CEVAL if isinstance(call.cont, CVar)
                else Kind.INNER)
    return Kind.EXIT_TC if isinstance(call.cont, CVar) else Kind.CALL


def localize(state: abstract.AbstractState, maps: SyntaxMaps) -> LocalState:
    """|·| from abstract to local: keep the top frame's user bindings."""

    def cut(stack) -> FrozenMap:
        if not stack:
            return EMPTY_MAP
        return FrozenMap({v: val for v, val in stack[0].items()
                          if not maps.is_cont_var(v)})

    if isinstance(state, abstract.AEval):
        return LEval(state.call, cut(state.stack), state.heap)
    if isinstance(state, abstract.AUApply):
        return LEntry(state.proc, state.args, state.heap)
    if isinstance(state, abstract.ACApply):
        return LCApply(state.cont, state.arg, cut(state.stack), state.heap)
    raise TypeError(state)


class LocalSemantics:
    """Successor relation over local states.

    With heap widening on, states carry an empty heap component and all
    reads/writes go through the analyzer's single global heap.
    """

    def __init__(self, maps: SyntaxMaps,
                 config: AnalyzerConfig = DEFAULT_CONFIG,
                 global_heap: Optional["GlobalHeap"] = None):
        self.maps = maps
        self.config = config
        self.global_heap = global_heap
        if config.heap_widening and global_heap is None:
            raise ValueError("heap widening requires a global heap")

    # --- value evaluation ---

    def eval_u(self, e, psi: int, frame: FrozenMap, heap: FrozenMap) -> Value:
        if isinstance(e, UVar) and not self.maps.is_stack_ref(psi, e.name):
            if self.global_heap is not None:
                return self.global_heap.read(e.name)
            return heap.get(e.name, EMPTY)
        if isinstance(e, UVar):
            v = frame.get(e.name)
            if v is None:
                raise abstract.AbstractInvariantError(
                    f"{e.name} missing from local frame at {psi}")
            return v
        if isinstance(e, ULam):
            return frozenset({LamAtom(e)})
        return abstract.AbstractMachine(self.maps, self.config).eval_u(
            e, psi, (EMPTY_MAP,), heap)

    def heap_bind(self, heap: FrozenMap, var: str, value: Value) -> FrozenMap:
        if not self.maps.is_heap_var(var):
            return heap
        if self.global_heap is not None:
            self.global_heap.join(var, value)
            return heap
        return heap_join(heap, var, value)

    def return_value(self, exit_state: LEval) -> Value:
        """The value an Exit-CEval passes to its continuation: the
        returned expression, or the primitive result in tail position."""
        call = exit_state.call
        if isinstance(call, CCall):
            return self.eval_u(call.arg, call.label, exit_state.frame,
                               exit_state.heap)
        assert isinstance(call, UCall)
        fval = self.eval_u(call.fn, call.label, exit_state.frame,
                           exit_state.heap)
        args = tuple(self.eval_u(a, call.label, exit_state.frame,
                                 exit_state.heap) for a in call.args)
        parts = [prim_transfer(a.name, args) for a in sorted_atoms(fval)
                 if isinstance(a, PrimAtom)]
        out: set = set()
        for p in parts:
            out |= p
        return frozenset(out)

    # --- successors ---

    def succ(self, state: LocalState) -> Tuple[LocalState, ...]:
        if isinstance(state, LEntry):
            return self._succ_entry(state)
        if isinstance(state, LCApply):
            return self._succ_capply(state)
        call = state.call
        if isinstance(call, UCall):
            return self._succ_ucall(state)
        if isinstance(call, CCall):
            return self._succ_ccall(state)
        return self._succ_branch(state)

    def _succ_entry(self, state: LEntry) -> Tuple[LocalState, ...]:
        lam = state.proc
        if len(state.args) != len(lam.params):
            return ()
        heap = state.heap
        for p, a in zip(lam.params, state.args):
            heap = self.heap_bind(heap, p, a)
        frame = FrozenMap({p: a for p, a in zip(lam.params, state.args)})
        return (LEval(lam.body, frame, heap),)

    def _succ_ucall(self, state: LEval) -> Tuple[LocalState, ...]:
        call: UCall = state.call
        fval = self.eval_u(call.fn, call.label, state.frame, state.heap)
        args = tuple(self.eval_u(a, call.label, state.frame, state.heap)
                     for a in call.args)
        tail = isinstance(call.cont, CVar)
        out = []
        for atom in sorted_atoms(fval):
            if isinstance(atom, LamAtom):
                out.append(LEntry(atom.lam, args, state.heap))
            elif isinstance(atom, PrimAtom) and not tail:
                result = prim_transfer(atom.name, args)
                out.append(LCApply(call.cont, result, state.frame,
                                   state.heap))
            # a primitive in tail position has no local successor: the
            # workset algorithm consumes its value via return_value
        return tuple(out)

    def _succ_ccall(self, state: LEval) -> Tuple[LocalState, ...]:
        call: CCall = state.call
        if isinstance(call.cont, CVar):
            return ()  # function return: no local successor
        arg = self.eval_u(call.arg, call.label, state.frame, state.heap)
        return (LCApply(call.cont, arg, state.frame, state.heap),)

    def _succ_branch(self, state: LEval) -> Tuple[LocalState, ...]:
        call: Branch = state.call
        test = self.eval_u(call.test, call.label, state.frame, state.heap)
        take_then, take_else = branch_arms(test, self.config.branch_pruning)
        out = []
        if take_then:
            out.append(LCApply(call.then, test, state.frame, state.heap))
        if take_else:
            out.append(LCApply(call.alt, test, state.frame, state.heap))
        return tuple(out)

    def _succ_capply(self, state: LCApply) -> Tuple[LocalState, ...]:
        if isinstance(state.cont, Halt):
            return ()
        lam = state.cont
        frame = state.frame.set(lam.param, state.arg)
        heap = self.heap_bind(state.heap, lam.param, state.arg)
        return (LEval(lam.body, frame, heap),)


def local_le(s1: LocalState, s2: LocalState, *,
             ignore_heap: bool = False) -> bool:
    """Pointwise precision order on local states of the same shape."""
    from .abstract import frame_le, heap_le
    from .values import value_le

    def heaps_ok() -> bool:
        return ignore_heap or heap_le(s1.heap, s2.heap)

    if isinstance(s1, LEval) and isinstance(s2, LEval):
        return (s1.call is s2.call and frame_le(s1.frame, s2.frame)
                and heaps_ok())
    if isinstance(s1, LEntry) and isinstance(s2, LEntry):
        return (s1.proc is s2.proc and len(s1.args) == len(s2.args)
                and all(value_le(a, b) for a, b in zip(s1.args, s2.args))
                and heaps_ok())
    if isinstance(s1, LCApply) and isinstance(s2, LCApply):
        return (s1.cont is s2.cont and value_le(s1.arg, s2.arg)
                and frame_le(s1.frame, s2.frame) and heaps_ok())
    return False


# --- canonical printing ------------------------------------------------------------

def show_local(state: LocalState) -> str:
    """Order-independent rendering: frame entries and atom sets sorted."""
    from .cps import show_call

    def fr(frame: FrozenMap) -> str:
        return "[" + " ".join(
            f"{k}↦{{{', '.join(map(repr, sorted_atoms(v)))}}}"
            for k, v in frame.items()) + "]"

    if isinstance(state, LEval):
        return f"({show_call(state.call)}, {fr(state.frame)}, {fr(state.heap)})"
    if isinstance(state, LEntry):
        args = ", ".join("{" + ", ".join(map(repr, sorted_atoms(a))) + "}"
                         for a in state.args)
        return f"(λ{state.proc.label}, {args}, {fr(state.heap)})"
    return (f"({abstract.show_cont(state.cont)}, "
            + "{" + ", ".join(map(repr, sorted_atoms(state.arg))) + "}, "
            + f"{fr(state.frame)}, {fr(state.heap)})")
