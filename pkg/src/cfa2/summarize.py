"""Search-based summarization over local states.

The workset holds path edges (procedure entry to same-procedure state)
and summary edges (entry to CEval exit, transitive across tail calls).
Processing an edge dispatches on the target's kind: inner states flow to
their successors, calls record callers and replay summaries, CEval exits
create summaries and return values to recorded callers, tail calls
record transitive callers.  No edge enters the workset twice, so the
algorithm terminates.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Tuple

from . import abstract
from .config import DEFAULT_CONFIG, AnalyzerConfig
from .cps import (Branch, CCall, CLam, CpsProgram, SyntaxMaps, UCall, UVar)
from .local import (Kind, LCApply, LEntry, LEval, LocalSemantics, LocalState,
                    classify, localize)
from .values import (EMPTY, EMPTY_MAP, HALT, FrozenMap, LamAtom, PrimAtom,
                     join)

Edge = Tuple[LocalState, LocalState]
Triple = Tuple[LocalState, LocalState, LocalState]
Value = FrozenSet[object]


class GlobalHeap:
    """Single monotone heap used when heap widening is on."""

    def __init__(self, seed: FrozenMap):
        self._h: dict = dict(seed.items())
        self.grew = False

    def read(self, var: str) -> Value:
        return self._h.get(var, EMPTY)

    def join(self, var: str, value: Value) -> None:
        old = self._h.get(var, EMPTY)
        new = join(old, value)
        if new != old:
            self._h[var] = new
            self.grew = True

    def snapshot(self) -> FrozenMap:
        return FrozenMap(self._h)


@dataclass(frozen=True)
class AnalysisResult:
    """Everything the workset run discovered, in insertion order."""

    seen: Tuple[Edge, ...]
    summary: Tuple[Edge, ...]
    callers: Tuple[Triple, ...]
    tcallers: Tuple[Triple, ...]
    finals: Tuple[LCApply, ...]
    visited: int
    iterations: int
    restarts: int
    initial: LocalState
    config: AnalyzerConfig
    maps: SyntaxMaps
    global_heap: Optional[FrozenMap] = None

    def final_value(self) -> Value:
        return join(*(f.arg for f in self.finals)) if self.finals else EMPTY

    def seen_set(self) -> FrozenSet[Edge]:
        return frozenset(self.seen)


class Analyzer:
    """One summarization run of a validated program."""

    def __init__(self, program: CpsProgram, maps: SyntaxMaps,
                 config: AnalyzerConfig = DEFAULT_CONFIG,
                 input_value: Value = EMPTY):
        self.program = program
        self.maps = maps
        self.config = config
        self.input_value = input_value
        self.global_heap: Optional[GlobalHeap] = None
        if config.heap_widening:
            self.global_heap = GlobalHeap(abstract.initial_heap(program))
        self.sem = LocalSemantics(maps, config, self.global_heap)
        self.visited = 0
        self.iterations = 0
        self.restarts = -1

    # --- bookkeeping ---

    def _reset(self) -> None:
        self.seen: Dict[Edge, None] = {}
        self.work: deque = deque()
        self.summary: Dict[Edge, None] = {}
        self.summaries_of: Dict[LocalState, List[LocalState]] = {}
        self.callers: Dict[Triple, None] = {}
        self.callers_of: Dict[LocalState, List[Tuple[LocalState, LocalState]]] = {}
        self.tcallers: Dict[Triple, None] = {}
        self.tcallers_of: Dict[LocalState, List[Tuple[LocalState, LocalState]]] = {}
        self.finals: Dict[LCApply, None] = {}
        self.restarts += 1
        if self.config.heap_widening:
            self.initial = LEntry(self.program.main, (self.input_value,),
                                  EMPTY_MAP)
        else:
            self.initial = localize(
                abstract.inject(self.program, self.input_value), self.maps)
        self._propagate(self.initial, self.initial)

    def _propagate(self, source: LocalState, target: LocalState) -> None:
        edge = (source, target)
        if edge not in self.seen:
            self.seen[edge] = None
            self.work.append(edge)
            self.visited += 1

    # --- the algorithm ---

    def analyze(self) -> AnalysisResult:
        while True:
            self._reset()
            if self._run():
                break
        return AnalysisResult(
            seen=tuple(self.seen),
            summary=tuple(self.summary),
            callers=tuple(self.callers),
            tcallers=tuple(self.tcallers),
            finals=tuple(self.finals),
            visited=self.visited,
            iterations=self.iterations,
            restarts=self.restarts,
            initial=self.initial,
            config=self.config,
            maps=self.maps,
            global_heap=(self.global_heap.snapshot()
                         if self.global_heap else None),
        )

    def _run(self) -> bool:
        """Drain the workset; False when interrupted by heap growth."""
        while self.work:
            source, target = self.work.popleft()
            self.iterations += 1
            self._process(source, target)
            if self.global_heap is not None and self.global_heap.grew:
                self.global_heap.grew = False
                return False
        return True

    def _process(self, s1: LocalState, s2: LocalState) -> None:
        kind = classify(s2)
        if kind in (Kind.ENTRY, Kind.CAPPLY, Kind.INNER):
            for s3 in self.sem.succ(s2):
                self._propagate(s1, s3)
        elif kind is Kind.CALL:
            for s3 in self.sem.succ(s2):
                if isinstance(s3, LEntry):
                    self._propagate(s3, s3)
                    self._add_caller(s1, s2, s3)
                    for s4 in self.summaries_of.get(s3, ()):
                        self._update(s1, s2, s3, s4)
                else:
                    # a primitive flowed into the operator: its result
                    # lands in the same frame, an inner step
                    self._propagate(s1, s3)
        elif kind is Kind.EXIT_CEVAL:
            self._process_exit(s1, s2)
        elif kind is Kind.EXIT_TC:
            for s3 in self.sem.succ(s2):
                self._propagate(s3, s3)
                self._add_tcaller(s1, s2, s3)
                for s4 in self.summaries_of.get(s3, ()):
                    self._propagate(s1, s4)
            if self._prim_flows_at(s2):
                # primitives called in tail position return like an exit
                self._process_exit(s1, s2)
        else:
            raise AssertionError(kind)

    def _process_exit(self, s1: LocalState, s2: LocalState) -> None:
        if s1 == self.initial:
            self._final(s2)
            return
        edge = (s1, s2)
        if edge not in self.summary:
            self.summary[edge] = None
            self.summaries_of.setdefault(s1, []).append(s2)
        for s3, s4 in self.callers_of.get(s1, ()):
            self._update(s3, s4, s1, s2)
        for s3, _s4 in self.tcallers_of.get(s1, ()):
            self._tc_propagate(s3, s2)

    def _tc_propagate(self, entry: LocalState, exit_state: LocalState) -> None:
        """Cross-procedure summary for a tail caller (the transitive step)."""
        self._propagate(entry, exit_state)

    def _add_caller(self, s1, s2, s3) -> None:
        triple = (s1, s2, s3)
        if triple not in self.callers:
            self.callers[triple] = None
            self.callers_of.setdefault(s3, []).append((s1, s2))

    def _add_tcaller(self, s1, s2, s3) -> None:
        triple = (s1, s2, s3)
        if triple not in self.tcallers:
            self.tcallers[triple] = None
            self.tcallers_of.setdefault(s3, []).append((s1, s2))

    def _prim_flows_at(self, state: LEval) -> bool:
        call = state.call
        if not isinstance(call, UCall):
            return False
        fval = self.sem.eval_u(call.fn, call.label, state.frame, state.heap)
        return any(isinstance(a, PrimAtom) for a in fval)

    def _update(self, s1: LocalState, s2: LEval, s3: LEntry,
                s4: LEval) -> None:
        """Compute the return state for caller s2 when callee entry s3
        reaches exit s4, and propagate it under s1."""
        call: UCall = s2.call
        clam = call.cont
        assert isinstance(clam, CLam)
        value = self.sem.return_value(s4)
        frame = s2.frame
        if (self.config.stack_filtering and isinstance(call.fn, UVar)
                and self.maps.is_stack_ref(call.label, call.fn.name)):
            frame = frame.set(call.fn.name,
                              frozenset({LamAtom(s3.proc)}))
        ret = LCApply(clam, value, frame, s4.heap)
        self._propagate(s1, ret)

    def _final(self, exit_state: LEval) -> None:
        value = self.sem.return_value(exit_state)
        state = LCApply(HALT, value, EMPTY_MAP, exit_state.heap)
        if state not in self.finals:
            self.finals[state] = None


def analyze(program: CpsProgram, maps: SyntaxMaps,
            config: AnalyzerConfig = DEFAULT_CONFIG,
            input_value: Value = EMPTY) -> AnalysisResult:
    return Analyzer(program, maps, config, input_value).analyze()


# --- client-facing projection ------------------------------------------------------

def _refs_of_state(state: LocalState):
    if not isinstance(state, LEval):
        return
    call = state.call
    if isinstance(call, UCall):
        if isinstance(call.fn, UVar):
            yield call.label, call.fn.name
        for a in call.args:
            if isinstance(a, UVar):
                yield call.label, a.name
    elif isinstance(call, CCall):
        if isinstance(call.arg, UVar):
            yield call.label, call.arg.name
    elif isinstance(call, Branch):
        if isinstance(call.test, UVar):
            yield call.label, call.test.name


def flow_map(result: AnalysisResult) -> Dict[Tuple[int, str], Value]:
    """Join, per user reference site, of the values observed at every
    Seen target that evaluates the reference."""
    sem = LocalSemantics(result.maps, result.config,
                         GlobalHeap(result.global_heap)
                         if result.global_heap is not None else None)
    flows: Dict[Tuple[int, str], Value] = {}
    states = {target for _, target in result.seen}
    for state in states:
        for psi, var in _refs_of_state(state):
            value = sem.eval_u(UVar(var), psi, state.frame, state.heap)
            key = (psi, var)
            flows[key] = join(flows.get(key, EMPTY), value)
    return flows
