"""Concrete small-step machine for Partitioned CPS.

States alternate between Eval (about to perform a call) and Apply
(performing it).  Times are sequences of call-site labels; the binding
environment maps variables to their binding times and the variable
environment maps (variable, time) pairs to values.  This machine is the
ground truth the analyses are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

from .cps import (Branch, CCall, CExp, CLam, CLit, CpsProgram, CVar, PrimRef,
                  UCall, UExp, ULam, UVar)
from .values import EMPTY_MAP, HALT, FrozenMap, Halt, PRIM_ARITY

Time = Tuple[int, ...]


class StuckError(Exception):
    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


# --- values -------------------------------------------------------------------

@dataclass(frozen=True)
class Nil:
    def __repr__(self):
        return "()"


NIL_VALUE = Nil()


@dataclass(frozen=True)
class Pair:
    head: object
    tail: object

    def __repr__(self):
        items, cur = [], self
        while isinstance(cur, Pair):
            items.append(repr(cur.head))
            cur = cur.tail
        if isinstance(cur, Nil):
            return "(" + " ".join(items) + ")"
        return "(" + " ".join(items) + " . " + repr(cur) + ")"


@dataclass(frozen=True, eq=False)
class UClos:
    lam: ULam
    benv: FrozenMap

    def __repr__(self):
        return f"<clos λ{self.lam.label}>"


@dataclass(frozen=True, eq=False)
class CClos:
    lam: CLam
    benv: FrozenMap

    def __repr__(self):
        return f"<cont λ{self.lam.label}>"


@dataclass(frozen=True)
class PrimValue:
    name: str

    def __repr__(self):
        return f"#<primitive {self.name}>"


def datum_to_value(datum) -> object:
    """Quoted datum (nested pairs encoded as tuples) to a runtime value."""
    if datum == ():
        return NIL_VALUE
    if isinstance(datum, tuple):
        return Pair(datum_to_value(datum[0]), datum_to_value(datum[1]))
    return datum


# --- variable environment -------------------------------------------------------

class VarEnvLog:
    """Append-only (variable, time) -> value store.

    Bindings are never overwritten, so a state can snapshot the
    environment as a plain version counter.
    """

    def __init__(self):
        self._cells: Dict[Tuple[str, Time], Tuple[object, int]] = {}
        self.version = 0

    def bind(self, var: str, time: Time, value) -> None:
        key = (var, time)
        if key in self._cells:
            raise StuckError(f"rebinding of {key}")
        self._cells[key] = (value, self.version)
        self.version += 1

    def lookup(self, var: str, time: Time, version: int):
        cell = self._cells.get((var, time))
        if cell is None or cell[1] >= version:
            raise StuckError(f"unbound {var!r} at time {time}")
        return cell[0]

    def entries(self, version: int):
        for (var, time), (value, seq) in self._cells.items():
            if seq < version:
                yield var, time, value


# --- states ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Eval:
    call: Union[UCall, CCall, Branch]
    benv: FrozenMap
    ve: VarEnvLog
    version: int
    time: Time

    @property
    def is_user(self) -> bool:
        return isinstance(self.call, (UCall, Branch))


@dataclass(frozen=True, eq=False)
class UApply:
    proc: object
    args: Tuple[object, ...]
    cont: object
    ve: VarEnvLog
    version: int
    time: Time


@dataclass(frozen=True, eq=False)
class CApply:
    cont: object
    arg: object
    ve: VarEnvLog
    version: int
    time: Time


ConcreteState = Union[Eval, UApply, CApply]


def is_final(state: ConcreteState) -> bool:
    return isinstance(state, CApply) and state.cont is HALT


# --- atomic evaluation -------------------------------------------------------------

def atomic_eval(g: Union[UExp, CExp], benv: FrozenMap, ve: VarEnvLog,
                version: int):
    if isinstance(g, (ULam,)):
        return UClos(g, benv)
    if isinstance(g, CLam):
        return CClos(g, benv)
    if isinstance(g, (UVar, CVar)):
        t = benv.get(g.name)
        if t is None:
            raise StuckError(f"unbound variable {g.name!r}")
        return ve.lookup(g.name, t, version)
    if isinstance(g, CLit):
        return datum_to_value(g.value)
    if isinstance(g, PrimRef):
        return PrimValue(g.name)
    raise TypeError(g)


# --- primitives --------------------------------------------------------------------

def _num(v, who: str):
    if isinstance(v, bool) or not isinstance(v, int):
        raise StuckError(f"{who} expects a number, got {v!r}")
    return v


def apply_prim(name: str, args: Tuple[object, ...]):
    if PRIM_ARITY.get(name) != len(args):
        raise StuckError(f"{name} applied to {len(args)} argument(s)")
    if name == "+":
        return _num(args[0], name) + _num(args[1], name)
    if name == "-":
        return _num(args[0], name) - _num(args[1], name)
    if name == "*":
        return _num(args[0], name) * _num(args[1], name)
    if name == "=":
        return _num(args[0], name) == _num(args[1], name)
    if name == "<":
        return _num(args[0], name) < _num(args[1], name)
    if name == "cons":
        return Pair(args[0], args[1])
    if name == "car":
        if not isinstance(args[0], Pair):
            raise StuckError(f"car of non-pair {args[0]!r}")
        return args[0].head
    if name == "cdr":
        if not isinstance(args[0], Pair):
            raise StuckError(f"cdr of non-pair {args[0]!r}")
        return args[0].tail
    if name == "pair?":
        return isinstance(args[0], Pair)
    if name == "null?":
        return isinstance(args[0], Nil)
    if name == "number?":
        return isinstance(args[0], int) and not isinstance(args[0], bool)
    if name == "not":
        return args[0] is False
    raise StuckError(f"unknown primitive {name}")


def truthy(v) -> bool:
    return v is not False  # only #f is false


# --- transitions --------------------------------------------------------------------

def step(state: ConcreteState) -> ConcreteState:
    """One transition; raises StuckError on runtime type errors."""
    if isinstance(state, Eval):
        call, benv, ve, ver, t = (state.call, state.benv, state.ve,
                                  state.version, state.time)
        if isinstance(call, UCall):
            proc = atomic_eval(call.fn, benv, ve, ver)
            args = tuple(atomic_eval(a, benv, ve, ver) for a in call.args)
            cont = atomic_eval(call.cont, benv, ve, ver)
            t2 = (call.label,) + t
            if isinstance(proc, PrimValue):
                result = apply_prim(proc.name, args)
                return CApply(cont, result, ve, ver, t2)
            if isinstance(proc, UClos):
                return UApply(proc, args, cont, ve, ver, t2)
            raise StuckError(f"call to non-procedure {proc!r}", state)
        if isinstance(call, CCall):
            proc = atomic_eval(call.cont, benv, ve, ver)
            arg = atomic_eval(call.arg, benv, ve, ver)
            return CApply(proc, arg, ve, ver, (call.label,) + t)
        if isinstance(call, Branch):
            test = atomic_eval(call.test, benv, ve, ver)
            arm = call.then if truthy(test) else call.alt
            proc = atomic_eval(arm, benv, ve, ver)
            return CApply(proc, test, ve, ver, (call.label,) + t)
        raise TypeError(call)

    if isinstance(state, UApply):
        proc, args, cont = state.proc, state.args, state.cont
        if not isinstance(proc, UClos):
            raise StuckError(f"call to non-procedure {proc!r}", state)
        lam = proc.lam
        if len(args) != len(lam.params):
            raise StuckError(
                f"λ{lam.label} expects {len(lam.params)} argument(s), "
                f"got {len(args)}", state)
        t, ve = state.time, state.ve
        benv = proc.benv
        for p, a in zip(lam.params, args):
            benv = benv.set(p, t)
            ve.bind(p, t, a)
        benv = benv.set(lam.kparam, t)
        ve.bind(lam.kparam, t, cont)
        return Eval(lam.body, benv, ve, ve.version, t)

    if isinstance(state, CApply):
        if state.cont is HALT:
            raise StuckError("halt has no successor", state)
        if not isinstance(state.cont, CClos):
            raise StuckError(f"call to non-continuation {state.cont!r}", state)
        lam = state.cont.lam
        t, ve = state.time, state.ve
        benv = state.cont.benv.set(lam.param, t)
        ve.bind(lam.param, t, state.arg)
        return Eval(lam.body, benv, ve, ve.version, t)

    raise TypeError(state)


def inject(program: CpsProgram, input_value=None) -> ConcreteState:
    """Initial state: apply the program closure to the input and halt.

    Top-level recursive bindings are seeded into the environments first,
    so their references (always heap references) resolve.
    """
    ve = VarEnvLog()
    benv = EMPTY_MAP
    if program.bindings:
        t0: Time = ()
        benv = FrozenMap({name: t0 for name, _ in program.bindings})
        for name, lam in program.bindings:
            ve.bind(name, t0, UClos(lam, benv))
    if input_value is None:
        input_value = NIL_VALUE
    return UApply(UClos(program.main, benv), (input_value,), HALT,
                  ve, ve.version, ())


# --- driving -------------------------------------------------------------------------

@dataclass(frozen=True)
class Finished:
    value: object


@dataclass(frozen=True)
class OutOfFuel:
    steps: int


@dataclass(frozen=True)
class Stuck:
    state: Optional[ConcreteState]
    reason: str


RunResult = Union[Finished, OutOfFuel, Stuck]

DEFAULT_FUEL = 10 ** 6


def run(program: CpsProgram, input_value=None,
        fuel: int = DEFAULT_FUEL) -> RunResult:
    state = inject(program, input_value)
    for _ in range(fuel):
        if is_final(state):
            return Finished(state.arg)
        try:
            state = step(state)
        except StuckError as e:
            return Stuck(e.state, str(e))
    if is_final(state):
        return Finished(state.arg)
    return OutOfFuel(fuel)


def trace(program: CpsProgram, input_value=None, fuel: int = DEFAULT_FUEL,
          check=None) -> Tuple[list, RunResult]:
    """All states visited, plus the run outcome.  `check` is called on
    every state (used for debug invariants)."""
    state = inject(program, input_value)
    states = [state]
    if check:
        check(state)
    for _ in range(fuel):
        if is_final(state):
            return states, Finished(state.arg)
        try:
            state = step(state)
        except StuckError as e:
            return states, Stuck(e.state, str(e))
        states.append(state)
        if check:
            check(state)
    if is_final(state):
        return states, Finished(state.arg)
    return states, OutOfFuel(fuel)


# --- debug invariants ------------------------------------------------------------------

def bound_vars(node) -> frozenset:
    """Variables bound by lambdas occurring inside the given term."""
    out = set()

    def go(n):
        if isinstance(n, ULam):
            out.update(n.params)
            out.add(n.kparam)
            go(n.body)
        elif isinstance(n, CLam):
            out.add(n.param)
            go(n.body)
        elif isinstance(n, UCall):
            go(n.fn)
            for a in n.args:
                go(a)
            go(n.cont)
        elif isinstance(n, CCall):
            go(n.cont)
            go(n.arg)
        elif isinstance(n, Branch):
            go(n.test)
            go(n.then)
            go(n.alt)

    go(node)
    return frozenset(out)


_BV_CACHE: Dict[int, frozenset] = {}


def _bv(node) -> frozenset:
    key = id(node)
    if key not in _BV_CACHE:
        _BV_CACHE[key] = bound_vars(node)
    return _BV_CACHE[key]


def check_no_junk(state: ConcreteState) -> None:
    """Environments never bind variables of the lambdas they close over
    (a consequence of alphatization); checked in debug traces."""

    def ok_clos(value) -> None:
        if isinstance(value, (UClos, CClos)):
            overlap = frozenset(value.benv) & _bv(value.lam)
            if overlap:
                raise AssertionError(
                    f"junk bindings {sorted(overlap)} in closure over "
                    f"λ{value.lam.label}")

    for _var, _time, value in state.ve.entries(state.version):
        ok_clos(value)
    if isinstance(state, Eval):
        overlap = frozenset(state.benv) & _bv(state.call)
        if overlap:
            raise AssertionError(
                f"junk bindings {sorted(overlap)} at call {state.call.label}")
    elif isinstance(state, UApply):
        ok_clos(state.proc)
        for a in state.args:
            ok_clos(a)
        ok_clos(state.cont)
    elif isinstance(state, CApply):
        ok_clos(state.cont)
        ok_clos(state.arg)
