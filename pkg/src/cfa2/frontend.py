"""Mini-Scheme frontend: reader, direct-style AST, alphatization, labels.

Surface forms: lambda, application, if, let, let*, letrec, top-level
define (collected into one letrec), quote, and scalar literals.  `;`
starts a comment.  After `alphatize` every binder in the program has a
globally unique name; `label` then assigns preorder labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple, Union

PRIMITIVES = {
    "+", "-", "*", "=", "<",
    "pair?", "null?", "number?", "cons", "car", "cdr", "not",
}


class FrontendError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        if line:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class SyntaxErr(FrontendError):
    pass


class UnboundVariable(FrontendError):
    pass


# --- S-expression reader ----------------------------------------------------

@dataclass(frozen=True)
class SexpAtom:
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class SexpList:
    items: Tuple
    line: int
    col: int


def _tokenize(source: str):
    line, col = 1, 0
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 0
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < n and source[i] != "\n":
                i += 1
        elif ch in "()'":
            yield (ch, line, col)
            col += 1
            i += 1
        elif ch == '"':
            start_line, start_col = line, col
            j = i + 1
            while j < n and source[j] != '"':
                if source[j] == "\n":
                    raise SyntaxErr("unterminated string literal", start_line, start_col)
                j += 1
            if j >= n:
                raise SyntaxErr("unterminated string literal", start_line, start_col)
            yield (source[i:j + 1], start_line, start_col)
            col += j + 1 - i
            i = j + 1
        else:
            start_line, start_col = line, col
            j = i
            while j < n and source[j] not in " \t\r\n();'\"":
                j += 1
            yield (source[i:j], start_line, start_col)
            col += j - i
            i = j


def read_sexprs(source: str) -> Tuple:
    """Read all toplevel S-expressions in the source text."""
    stack: list = []
    top: list = []
    for text, line, col in _tokenize(source):
        if text == "(":
            stack.append((top, line, col))
            top = []
        elif text == ")":
            if not stack:
                raise SyntaxErr("unbalanced ')'", line, col)
            parent, oline, ocol = stack.pop()
            parent.append(SexpList(tuple(top), oline, ocol))
            top = parent
        elif text == "'":
            top.append(SexpAtom("'", line, col))
        else:
            top.append(SexpAtom(text, line, col))
    if stack:
        _, line, col = stack[-1]
        raise SyntaxErr("unbalanced '('", line, col)
    return _expand_quotes(tuple(top))


def _expand_quotes(items: Tuple) -> Tuple:
    out = []
    i = 0
    while i < len(items):
        it = items[i]
        if isinstance(it, SexpAtom) and it.text == "'":
            if i + 1 >= len(items):
                raise SyntaxErr("quote needs a datum", it.line, it.col)
            datum = _expand_one(items[i + 1])
            out.append(SexpList((SexpAtom("quote", it.line, it.col), datum),
                                it.line, it.col))
            i += 2
        else:
            out.append(_expand_one(it))
            i += 1
    return tuple(out)


def _expand_one(sx):
    if isinstance(sx, SexpList):
        return SexpList(_expand_quotes(sx.items), sx.line, sx.col)
    return sx


# --- direct-style AST -------------------------------------------------------

@dataclass(frozen=True)
class Expr:
    label: Optional[int] = field(default=None, kw_only=True)
    pos: Tuple[int, int] = field(default=(0, 0), kw_only=True)


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class PrimName(Expr):
    name: str


@dataclass(frozen=True)
class Lit(Expr):
    value: object  # int | str | bool | () for nil | nested tuples for lists


@dataclass(frozen=True)
class Lam(Expr):
    params: Tuple[str, ...]
    body: Expr


@dataclass(frozen=True)
class App(Expr):
    fn: Expr
    args: Tuple[Expr, ...]


@dataclass(frozen=True)
class If(Expr):
    test: Expr
    then: Expr
    alt: Expr


@dataclass(frozen=True)
class SourceProgram:
    """Top-level binding group (from define/letrec) plus the body."""

    definitions: Tuple[Tuple[str, Lam], ...]
    body: Expr


_SPECIAL = {"lambda", "λ", "if", "let", "let*", "letrec", "quote", "define"}


def _parse_datum(sx) -> object:
    if isinstance(sx, SexpList):
        out: object = ()
        for item in reversed(sx.items):
            out = (_parse_datum(item), out)
        return out
    return _parse_scalar(sx)


def _parse_scalar(atom: SexpAtom) -> object:
    t = atom.text
    if t.startswith('"'):
        return t[1:-1]
    if t == "#t":
        return True
    if t == "#f":
        return False
    try:
        return int(t)
    except ValueError:
        raise SyntaxErr(f"{t!r} is not a datum", atom.line, atom.col)


def _is_symbol(sx) -> bool:
    if not isinstance(sx, SexpAtom):
        return False
    t = sx.text
    if t.startswith('"') or t in ("#t", "#f"):
        return False
    try:
        int(t)
        return False
    except ValueError:
        return True


def _parse_params(sx) -> Tuple[str, ...]:
    if not isinstance(sx, SexpList) or not all(_is_symbol(p) for p in sx.items):
        raise SyntaxErr("malformed parameter list", sx.line, sx.col)
    names = tuple(p.text for p in sx.items)
    if len(set(names)) != len(names):
        raise SyntaxErr("duplicate parameter name", sx.line, sx.col)
    return names


def parse_expr(sx) -> Expr:
    pos = (sx.line, sx.col)
    if isinstance(sx, SexpAtom):
        if _is_symbol(sx):
            return Var(sx.text, pos=pos)
        return Lit(_parse_scalar(sx), pos=pos)
    if not sx.items:
        raise SyntaxErr("empty application", sx.line, sx.col)
    head = sx.items[0]
    if _is_symbol(head) and head.text in _SPECIAL:
        return _parse_special(head.text, sx)
    fn = parse_expr(head)
    args = tuple(parse_expr(a) for a in sx.items[1:])
    return App(fn, args, pos=pos)


def _binding_pairs(sx, what: str):
    if not isinstance(sx, SexpList):
        raise SyntaxErr(f"{what} needs a binding list", sx.line, sx.col)
    pairs = []
    for b in sx.items:
        if (not isinstance(b, SexpList) or len(b.items) != 2
                or not _is_symbol(b.items[0])):
            raise SyntaxErr(f"malformed {what} binding", sx.line, sx.col)
        pairs.append((b.items[0].text, b.items[1]))
    return pairs


def _parse_special(form: str, sx: SexpList) -> Expr:
    pos = (sx.line, sx.col)
    items = sx.items
    if form in ("lambda", "λ"):
        if len(items) != 3:
            raise SyntaxErr("lambda needs a parameter list and one body",
                            sx.line, sx.col)
        return Lam(_parse_params(items[1]), parse_expr(items[2]), pos=pos)
    if form == "if":
        if len(items) != 4:
            raise SyntaxErr("if needs test, then, else", sx.line, sx.col)
        return If(parse_expr(items[1]), parse_expr(items[2]),
                  parse_expr(items[3]), pos=pos)
    if form == "quote":
        if len(items) != 2:
            raise SyntaxErr("quote needs one datum", sx.line, sx.col)
        return Lit(_parse_datum(items[1]), pos=pos)
    if form == "let":
        if len(items) != 3:
            raise SyntaxErr("let needs bindings and one body", sx.line, sx.col)
        pairs = _binding_pairs(items[1], "let")
        names = tuple(n for n, _ in pairs)
        if len(set(names)) != len(names):
            raise SyntaxErr("duplicate let binding", sx.line, sx.col)
        inits = tuple(parse_expr(e) for _, e in pairs)
        return App(Lam(names, parse_expr(items[2]), pos=pos), inits, pos=pos)
    if form == "let*":
        if len(items) != 3:
            raise SyntaxErr("let* needs bindings and one body", sx.line, sx.col)
        body = parse_expr(items[2])
        for name, init in reversed(_binding_pairs(items[1], "let*")):
            body = App(Lam((name,), body, pos=pos), (parse_expr(init),), pos=pos)
        return body
    if form in ("letrec", "define"):
        raise SyntaxErr(f"{form} is only allowed at the top level",
                        sx.line, sx.col)
    raise SyntaxErr(f"unknown special form {form!r}", sx.line, sx.col)


def _parse_define(sx: SexpList) -> Tuple[str, Lam]:
    items = sx.items
    if len(items) != 3:
        raise SyntaxErr("malformed define", sx.line, sx.col)
    target = items[1]
    if isinstance(target, SexpList):
        # (define (f x ...) body)
        if not target.items or not _is_symbol(target.items[0]):
            raise SyntaxErr("malformed define header", sx.line, sx.col)
        name = target.items[0].text
        params = _parse_params(SexpList(target.items[1:], target.line, target.col))
        return name, Lam(params, parse_expr(items[2]), pos=(sx.line, sx.col))
    if _is_symbol(target):
        value = parse_expr(items[2])
        if not isinstance(value, Lam):
            raise SyntaxErr("define only binds lambdas", sx.line, sx.col)
        return target.text, value
    raise SyntaxErr("malformed define", sx.line, sx.col)


def parse(source: str) -> SourceProgram:
    """Parse a whole program: defines (or one letrec) plus one body form."""
    forms = read_sexprs(source)
    if not forms:
        raise SyntaxErr("empty program")
    defs: list = []
    body_forms = []
    for sx in forms:
        if (isinstance(sx, SexpList) and sx.items
                and _is_symbol(sx.items[0]) and sx.items[0].text == "define"):
            if body_forms:
                raise SyntaxErr("define after the program body",
                                sx.line, sx.col)
            defs.append(_parse_define(sx))
        else:
            body_forms.append(sx)
    if len(body_forms) != 1:
        raise SyntaxErr("program needs exactly one body expression after "
                        "its defines")
    bx = body_forms[0]
    if (isinstance(bx, SexpList) and bx.items
            and _is_symbol(bx.items[0]) and bx.items[0].text == "letrec"):
        if defs:
            raise SyntaxErr("mixing define and letrec", bx.line, bx.col)
        if len(bx.items) != 3:
            raise SyntaxErr("letrec needs bindings and one body",
                            bx.line, bx.col)
        for name, init in _binding_pairs(bx.items[1], "letrec"):
            value = parse_expr(init)
            if not isinstance(value, Lam):
                raise SyntaxErr("letrec only binds lambdas", bx.line, bx.col)
            defs.append((name, value))
        body = parse_expr(bx.items[2])
    else:
        body = parse_expr(bx)
    names = [n for n, _ in defs]
    if len(set(names)) != len(names):
        raise SyntaxErr("duplicate top-level definition")
    return SourceProgram(tuple(defs), body)


# --- alphatization -----------------------------------------------------------

class _Renamer:
    def __init__(self):
        self.counter = 0

    def fresh(self, base: str) -> str:
        self.counter += 1
        return f"{base}_{self.counter}"


def _alpha(expr: Expr, env: dict, ren: _Renamer) -> Expr:
    if isinstance(expr, Var):
        if expr.name in env:
            return replace(expr, name=env[expr.name])
        if expr.name in PRIMITIVES:
            return PrimName(expr.name, pos=expr.pos, label=expr.label)
        raise UnboundVariable(f"unbound variable {expr.name!r}",
                              *expr.pos)
    if isinstance(expr, (Lit, PrimName)):
        return expr
    if isinstance(expr, Lam):
        fresh = {p: ren.fresh(p) for p in expr.params}
        inner = dict(env)
        inner.update(fresh)
        return replace(expr, params=tuple(fresh[p] for p in expr.params),
                       body=_alpha(expr.body, inner, ren))
    if isinstance(expr, App):
        return replace(expr, fn=_alpha(expr.fn, env, ren),
                       args=tuple(_alpha(a, env, ren) for a in expr.args))
    if isinstance(expr, If):
        return replace(expr, test=_alpha(expr.test, env, ren),
                       then=_alpha(expr.then, env, ren),
                       alt=_alpha(expr.alt, env, ren))
    raise TypeError(expr)


def alphatize(program: SourceProgram) -> SourceProgram:
    """Rename every binder to a globally fresh name; report unbound refs."""
    ren = _Renamer()
    env = {name: ren.fresh(name) for name, _ in program.definitions}
    defs = tuple((env[name], _alpha(lam, env, ren))
                 for name, lam in program.definitions)
    return SourceProgram(defs, _alpha(program.body, env, ren))


# --- labeling ----------------------------------------------------------------

def label(program: SourceProgram) -> SourceProgram:
    """Assign pairwise-distinct labels in preorder; deterministic."""
    counter = [0]

    def walk(expr: Expr) -> Expr:
        counter[0] += 1
        expr = replace(expr, label=counter[0])
        if isinstance(expr, Lam):
            return replace(expr, body=walk(expr.body))
        if isinstance(expr, App):
            return replace(expr, fn=walk(expr.fn),
                           args=tuple(walk(a) for a in expr.args))
        if isinstance(expr, If):
            return replace(expr, test=walk(expr.test), then=walk(expr.then),
                           alt=walk(expr.alt))
        return expr

    defs = tuple((name, walk(lam)) for name, lam in program.definitions)
    return SourceProgram(defs, walk(program.body))


def front(source: str) -> SourceProgram:
    """parse ∘ alphatize ∘ label."""
    return label(alphatize(parse(source)))


# --- printer (round-trip form) ------------------------------------------------

def _show_datum(value) -> str:
    if value is True:
        return "#t"
    if value is False:
        return "#f"
    if isinstance(value, str):
        return f'"{value}"'
    if value == ():
        return "()"
    if isinstance(value, tuple):
        parts = []
        while isinstance(value, tuple) and value != ():
            parts.append(_show_datum(value[0]))
            value = value[1]
        return "(" + " ".join(parts) + ")"
    return str(value)


def show_expr(expr: Expr) -> str:
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, PrimName):
        return expr.name
    if isinstance(expr, Lit):
        if isinstance(expr.value, (tuple,)) or expr.value == ():
            return "(quote " + _show_datum(expr.value) + ")"
        return _show_datum(expr.value)
    if isinstance(expr, Lam):
        return "(lambda (" + " ".join(expr.params) + ") " + show_expr(expr.body) + ")"
    if isinstance(expr, App):
        return "(" + " ".join([show_expr(expr.fn)] +
                              [show_expr(a) for a in expr.args]) + ")"
    if isinstance(expr, If):
        return ("(if " + show_expr(expr.test) + " " + show_expr(expr.then)
                + " " + show_expr(expr.alt) + ")")
    raise TypeError(expr)


def show_program(program: SourceProgram) -> str:
    lines = [f"(define {name} {show_expr(lam)})"
             for name, lam in program.definitions]
    lines.append(show_expr(program.body))
    return "\n".join(lines)
