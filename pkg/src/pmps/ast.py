"""Process terms, expressions and values, with binding-aware utilities.

Identifiers live in one namespace: a binder (session request/accept,
session reception, value reception, hiding) binds every occurrence of its
name below it, whether the occurrence is a channel, a shared name or an
expression variable. Process variables, bound by ``mu``, are separate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Optional, Union

SORTS = ("bool", "nat", "int", "string")


def sort_class(sort: str) -> str:
    """nat and int share one class; it decides receive matching and typing."""
    return "num" if sort in ("nat", "int") else sort


def sorts_class(sorts: Iterable[str]) -> tuple:
    return tuple(sort_class(s) for s in sorts)


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self):
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Name:
    """A shared name used as a value."""

    ident: str

    def __str__(self):
        return self.ident


Value = Union[bool, int, str, Name]


def value_kind(v) -> str:
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "num"
    if isinstance(v, str):
        return "string"
    if isinstance(v, Name):
        return "name"
    raise TypeError(f"not a value: {v!r}")


def value_sort(v) -> str:
    kind = value_kind(v)
    if kind == "num":
        return "nat" if v >= 0 else "int"
    return kind


def value_fits(v, sort: str) -> bool:
    if value_kind(v) != sort_class(sort):
        return False
    return sort != "nat" or v >= 0


def same_value(a, b) -> bool:
    # bool is an int subclass; True must not equal 1 here
    return value_kind(a) == value_kind(b) and a == b


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return str(v)


# -- expressions -------------------------------------------------------------


class Expr:
    pass


@dataclass(frozen=True)
class Lit(Expr):
    value: Value
    kind: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", value_kind(self.value))


@dataclass(frozen=True)
class Ref(Expr):
    name: str


@dataclass(frozen=True)
class Not(Expr):
    arg: Expr


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


ARITH = ("+", "-", "*", "/")
COMPARE = ("==", "!=", "<", "<=", ">", ">=")
LOGIC = ("and", "or")


class EvalError(Exception):
    pass


def _div(a: int, b: int) -> int:
    if b == 0:
        raise EvalError("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def eval_expr(e: Expr, env: Optional[dict] = None):
    """Big-step evaluation of a closed expression (closed under ``env``)."""
    env = env or {}
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Ref):
        if e.name in env:
            return env[e.name]
        raise EvalError(f"unbound variable {e.name}")
    if isinstance(e, Not):
        v = eval_expr(e.arg, env)
        if not isinstance(v, bool):
            raise EvalError(f"not applied to {format_value(v)}")
        return not v
    if isinstance(e, Neg):
        v = eval_expr(e.arg, env)
        if value_kind(v) != "num":
            raise EvalError(f"negation of {format_value(v)}")
        return -v
    if isinstance(e, BinOp):
        a, b = eval_expr(e.left, env), eval_expr(e.right, env)
        if e.op in LOGIC:
            if not (isinstance(a, bool) and isinstance(b, bool)):
                raise EvalError(f"{e.op} needs booleans")
            return (a and b) if e.op == "and" else (a or b)
        if e.op in ("==", "!="):
            if value_kind(a) != value_kind(b):
                raise EvalError(f"cannot compare {format_value(a)} with {format_value(b)}")
            return (a == b) if e.op == "==" else (a != b)
        if value_kind(a) != "num" or value_kind(b) != "num":
            raise EvalError(f"{e.op} needs numbers")
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return _div(a, b)
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[e.op]
    raise TypeError(f"not an expression: {e!r}")


def expr_names(e: Expr) -> frozenset:
    if isinstance(e, Ref):
        return frozenset([e.name])
    if isinstance(e, (Not, Neg)):
        return expr_names(e.arg)
    if isinstance(e, BinOp):
        return expr_names(e.left) | expr_names(e.right)
    if isinstance(e, Lit) and isinstance(e.value, Name):
        return frozenset([e.value.ident])
    return frozenset()


def subst_expr(e: Expr, mapping: dict) -> Expr:
    if isinstance(e, Ref):
        if e.name in mapping:
            v = mapping[e.name]
            return Ref(v.ident) if isinstance(v, Name) else Lit(v)
        return e
    if isinstance(e, Not):
        return Not(subst_expr(e.arg, mapping))
    if isinstance(e, Neg):
        return Neg(subst_expr(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, subst_expr(e.left, mapping), subst_expr(e.right, mapping))
    return e


# -- processes ---------------------------------------------------------------


@dataclass(frozen=True)
class Process:
    span: Optional[Span] = field(default=None, compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class Request(Process):
    shared: str
    n: int
    chans: tuple
    body: Process


@dataclass(frozen=True)
class Accept(Process):
    shared: str
    role: int
    chans: tuple
    body: Process


@dataclass(frozen=True)
class SendBranch:
    prob: Fraction
    exprs: tuple
    cont: Process
    # source text of the payload, kept through substitution for trace queries
    text: Optional[str] = field(default=None, compare=False)


@dataclass(frozen=True)
class Send(Process):
    chan: str
    branches: tuple


@dataclass(frozen=True)
class RecvBranch:
    binders: tuple  # ((var, sort), ...)
    cont: Process

    @property
    def sorts(self) -> tuple:
        return tuple(s for _, s in self.binders)


@dataclass(frozen=True)
class Recv(Process):
    chan: str
    branches: tuple


@dataclass(frozen=True)
class Deleg(Process):
    chan: str
    payload: tuple
    cont: Process


@dataclass(frozen=True)
class SessRecv(Process):
    chan: str
    params: tuple
    cont: Process


@dataclass(frozen=True)
class SelectBranch:
    prob: Fraction
    label: str
    cont: Process


@dataclass(frozen=True)
class Select(Process):
    chan: str
    branches: tuple


@dataclass(frozen=True)
class OfferBranch:
    label: str
    cont: Process


@dataclass(frozen=True)
class Branching(Process):
    chan: str
    branches: tuple


@dataclass(frozen=True)
class If(Process):
    cond: Expr
    then: Process
    orelse: Process


@dataclass(frozen=True)
class Par(Process):
    left: Process
    right: Process


@dataclass(frozen=True)
class Inact(Process):
    pass


@dataclass(frozen=True)
class Hide(Process):
    names: tuple
    body: Process


@dataclass(frozen=True)
class Rec(Process):
    var: str
    body: Process


@dataclass(frozen=True)
class Var(Process):
    name: str


@dataclass(frozen=True)
class Error(Process):
    """The error process reached by ECom/ELabel."""


INACT = Inact()
ERROR = Error()


def par(*procs: Process) -> Process:
    procs = [p for p in procs if not isinstance(p, Inact)]
    if not procs:
        return INACT
    out = procs[-1]
    for p in reversed(procs[:-1]):
        out = Par(p, out)
    return out


def par_components(p: Process) -> list:
    if isinstance(p, Par):
        return par_components(p.left) + par_components(p.right)
    return [p]


PREFIXES = (Send, Recv, Deleg, SessRecv, Select, Branching)


def subject(p: Process) -> Optional[str]:
    """Channel a communication prefix acts on."""
    return p.chan if isinstance(p, PREFIXES) else None


def children(p: Process) -> list:
    """Immediate sub-processes (continuations, bodies, components)."""
    if isinstance(p, (Request, Accept, Hide, Rec)):
        return [p.body]
    if isinstance(p, (Send, Recv, Select, Branching)):
        return [b.cont for b in p.branches]
    if isinstance(p, (Deleg, SessRecv)):
        return [p.cont]
    if isinstance(p, If):
        return [p.then, p.orelse]
    if isinstance(p, Par):
        return [p.left, p.right]
    return []


def subterms(p: Process):
    yield p
    for c in children(p):
        yield from subterms(c)


# -- free identifiers --------------------------------------------------------


def free_names(p: Process) -> frozenset:
    """Free identifiers: channels, shared names and expression variables."""
    if isinstance(p, (Request, Accept)):
        return frozenset([p.shared]) | (free_names(p.body) - set(p.chans))
    if isinstance(p, Send):
        out = {p.chan}
        for b in p.branches:
            for e in b.exprs:
                out |= expr_names(e)
            out |= free_names(b.cont)
        return frozenset(out)
    if isinstance(p, Recv):
        out = {p.chan}
        for b in p.branches:
            out |= free_names(b.cont) - {x for x, _ in b.binders}
        return frozenset(out)
    if isinstance(p, Deleg):
        return frozenset([p.chan, *p.payload]) | free_names(p.cont)
    if isinstance(p, SessRecv):
        return frozenset([p.chan]) | (free_names(p.cont) - set(p.params))
    if isinstance(p, (Select, Branching)):
        out = {p.chan}
        for b in p.branches:
            out |= free_names(b.cont)
        return frozenset(out)
    if isinstance(p, If):
        return expr_names(p.cond) | free_names(p.then) | free_names(p.orelse)
    if isinstance(p, Par):
        return free_names(p.left) | free_names(p.right)
    if isinstance(p, Hide):
        return free_names(p.body) - set(p.names)
    if isinstance(p, Rec):
        return free_names(p.body)
    return frozenset()


def free_vars(p: Process) -> frozenset:
    """Free process variables."""
    if isinstance(p, Var):
        return frozenset([p.name])
    if isinstance(p, Rec):
        return free_vars(p.body) - {p.var}
    out = frozenset()
    for c in children(p):
        out |= free_vars(c)
    return out


def fresh_name(base: str, avoid) -> str:
    base = base.split("#")[0]
    i = 1
    while f"{base}#{i}" in avoid:
        i += 1
    return f"{base}#{i}"


def base_name(name: str) -> str:
    return name.split("#")[0]


# -- substitution ------------------------------------------------------------


class _Subst:
    """Capture-avoiding simultaneous substitution.

    ``vals`` maps identifiers to values (a :class:`Name` value renames the
    identifier everywhere, including channel positions); ``procs`` maps
    process variables to processes.
    """

    def __init__(self, vals: dict, procs: dict):
        self.vals = vals
        self.procs = procs

    def _range_names(self) -> set:
        names = set()
        for v in self.vals.values():
            if isinstance(v, Name):
                names.add(v.ident)
        for q in self.procs.values():
            names |= free_names(q)
        return names

    def _range_vars(self) -> set:
        out = set()
        for q in self.procs.values():
            out |= free_vars(q)
        return out

    def ident(self, x: str) -> str:
        v = self.vals.get(x)
        return v.ident if isinstance(v, Name) else x

    def expr(self, e: Expr) -> Expr:
        return subst_expr(e, self.vals) if self.vals else e

    def _enter(self, binders, bodies_names):
        """Sub-substitution under ``binders``, plus renaming for captured ones."""
        vals = {k: v for k, v in self.vals.items() if k not in binders}
        inner = _Subst(vals, self.procs)
        danger = inner._range_names()
        renames = {}
        if danger & set(binders):
            avoid = set(danger) | set(bodies_names) | set(binders) | set(vals)
            for b in binders:
                if b in danger:
                    nb = fresh_name(b, avoid)
                    avoid.add(nb)
                    renames[b] = nb
        return inner, renames

    def binding(self, binders, body: Process):
        """Apply under ``binders``; returns (new binders, new body)."""
        if not self.vals and not self.procs:
            return tuple(binders), body
        inner, renames = self._enter(binders, free_names(body))
        if renames:
            body = _Subst({k: Name(v) for k, v in renames.items()}, {}).proc(body)
        new_binders = tuple(renames.get(b, b) for b in binders)
        return new_binders, inner.proc(body)

    def proc(self, p: Process) -> Process:
        if not self.vals and not self.procs:
            return p
        sp = p.span
        if isinstance(p, Request):
            chans, body = self.binding(p.chans, p.body)
            return Request(self.ident(p.shared), p.n, chans, body, span=sp)
        if isinstance(p, Accept):
            chans, body = self.binding(p.chans, p.body)
            return Accept(self.ident(p.shared), p.role, chans, body, span=sp)
        if isinstance(p, Send):
            return Send(self.ident(p.chan), tuple(
                SendBranch(b.prob, tuple(self.expr(e) for e in b.exprs), self.proc(b.cont), b.text)
                for b in p.branches), span=sp)
        if isinstance(p, Recv):
            branches = []
            for b in p.branches:
                names = [x for x, _ in b.binders]
                new_names, cont = self.binding(names, b.cont)
                branches.append(RecvBranch(tuple(zip(new_names, (s for _, s in b.binders))), cont))
            return Recv(self.ident(p.chan), tuple(branches), span=sp)
        if isinstance(p, Deleg):
            return Deleg(self.ident(p.chan), tuple(self.ident(x) for x in p.payload),
                         self.proc(p.cont), span=sp)
        if isinstance(p, SessRecv):
            params, cont = self.binding(p.params, p.cont)
            return SessRecv(self.ident(p.chan), params, cont, span=sp)
        if isinstance(p, Select):
            return Select(self.ident(p.chan), tuple(
                SelectBranch(b.prob, b.label, self.proc(b.cont)) for b in p.branches), span=sp)
        if isinstance(p, Branching):
            return Branching(self.ident(p.chan), tuple(
                OfferBranch(b.label, self.proc(b.cont)) for b in p.branches), span=sp)
        if isinstance(p, If):
            return If(self.expr(p.cond), self.proc(p.then), self.proc(p.orelse), span=sp)
        if isinstance(p, Par):
            return Par(self.proc(p.left), self.proc(p.right), span=sp)
        if isinstance(p, Hide):
            names, body = self.binding(p.names, p.body)
            return Hide(names, body, span=sp)
        if isinstance(p, Rec):
            procs = {k: v for k, v in self.procs.items() if k != p.var}
            inner = _Subst(self.vals, procs)
            var, body = p.var, p.body
            if p.var in inner._range_vars():
                var = p.var
                taken = free_vars(body) | inner._range_vars() | set(procs)
                i = 1
                while f"{p.var}{i}" in taken:
                    i += 1
                var = f"{p.var}{i}"
                body = _Subst({}, {p.var: Var(var)}).proc(body)
            return Rec(var, inner.proc(body), span=sp)
        if isinstance(p, Var):
            return self.procs.get(p.name, p)
        return p


def subst_values(p: Process, mapping: dict) -> Process:
    """``p{v/x}`` for every ``x -> v`` in ``mapping``."""
    return _Subst(dict(mapping), {}).proc(p)


def rename(p: Process, mapping: dict) -> Process:
    """Capture-avoiding renaming of free identifiers."""
    return _Subst({k: Name(v) for k, v in mapping.items() if k != v}, {}).proc(p)


def subst_process(p: Process, x: str, q: Process) -> Process:
    """``p{q/x}`` for a process variable ``x``."""
    return _Subst({}, {x: q}).proc(p)


def unfold(p: Rec) -> Process:
    return subst_process(p.body, p.var, p)


# -- alpha-invariant keys ----------------------------------------------------


def _expr_key(e: Expr, env: dict, masked) -> tuple:
    if isinstance(e, Lit):
        v = e.value
        if isinstance(v, Name):
            return ("n",) + _name_key(v.ident, env, masked)
        return ("v", e.kind, v)
    if isinstance(e, Ref):
        return ("r",) + _name_key(e.name, env, masked)
    if isinstance(e, Not):
        return ("not", _expr_key(e.arg, env, masked))
    if isinstance(e, Neg):
        return ("neg", _expr_key(e.arg, env, masked))
    return ("op", e.op, _expr_key(e.left, env, masked), _expr_key(e.right, env, masked))


def _name_key(x: str, env: dict, masked) -> tuple:
    if x in env:
        return ("b", env[x])
    if x in masked:
        return ("m",)
    return ("f", x)


def alpha_key(p: Process, masked=frozenset()) -> tuple:
    """A key equal for exactly the alpha-equivalent processes.

    Names in ``masked`` are all collapsed onto one placeholder; this gives
    an ordering that does not depend on how those names are spelled.
    """
    return _key(p, {}, {}, masked)


def _bind(env: dict, names) -> dict:
    env = dict(env)
    for x in names:
        env[x] = max(env.values(), default=-1) + 1
    return env


def _key(p: Process, env: dict, penv: dict, masked) -> tuple:
    nk = lambda x: _name_key(x, env, masked)
    if isinstance(p, Inact):
        return ("0",)
    if isinstance(p, Error):
        return ("error",)
    if isinstance(p, Var):
        return ("X", penv[p.name]) if p.name in penv else ("Xf", p.name)
    if isinstance(p, Rec):
        penv2 = dict(penv)
        penv2[p.var] = max(penv.values(), default=-1) + 1
        return ("mu", _key(p.body, env, penv2, masked))
    if isinstance(p, Request):
        env2 = _bind(env, p.chans)
        return ("req", nk(p.shared), p.n, len(p.chans), _key(p.body, env2, penv, masked))
    if isinstance(p, Accept):
        env2 = _bind(env, p.chans)
        return ("acc", nk(p.shared), p.role, len(p.chans), _key(p.body, env2, penv, masked))
    if isinstance(p, Send):
        return ("send", nk(p.chan), tuple(
            (b.prob, tuple(_expr_key(e, env, masked) for e in b.exprs), _key(b.cont, env, penv, masked))
            for b in p.branches))
    if isinstance(p, Recv):
        return ("recv", nk(p.chan), tuple(
            (tuple(s for _, s in b.binders),
             _key(b.cont, _bind(env, [x for x, _ in b.binders]), penv, masked))
            for b in p.branches))
    if isinstance(p, Deleg):
        return ("deleg", nk(p.chan), tuple(nk(x) for x in p.payload), _key(p.cont, env, penv, masked))
    if isinstance(p, SessRecv):
        return ("srecv", nk(p.chan), len(p.params), _key(p.cont, _bind(env, p.params), penv, masked))
    if isinstance(p, Select):
        return ("sel", nk(p.chan), tuple((b.prob, b.label, _key(b.cont, env, penv, masked)) for b in p.branches))
    if isinstance(p, Branching):
        return ("bra", nk(p.chan), tuple((b.label, _key(b.cont, env, penv, masked)) for b in p.branches))
    if isinstance(p, If):
        return ("if", _expr_key(p.cond, env, masked), _key(p.then, env, penv, masked),
                _key(p.orelse, env, penv, masked))
    if isinstance(p, Par):
        return ("par", _key(p.left, env, penv, masked), _key(p.right, env, penv, masked))
    if isinstance(p, Hide):
        return ("new", len(p.names), _key(p.body, _bind(env, p.names), penv, masked))
    raise TypeError(f"not a process: {p!r}")


def alpha_equal(p: Process, q: Process) -> bool:
    return alpha_key(p) == alpha_key(q)


def guarded(p: Process, var: str, under_prefix: bool = False) -> bool:
    """Every free occurrence of ``var`` sits under a communication prefix."""
    if isinstance(p, Var):
        return p.name != var or under_prefix
    if isinstance(p, Rec):
        return p.var == var or guarded(p.body, var, under_prefix)
    if isinstance(p, PREFIXES + (Request, Accept)):
        return all(guarded(c, var, True) for c in children(p))
    if isinstance(p, Hide):
        if var in p.names:
            return True
        return guarded(p.body, var, under_prefix)
    return all(guarded(c, var, under_prefix) for c in children(p))


def with_branches(p: Process, branches) -> Process:
    return replace(p, branches=tuple(branches))


def map_children(p: Process, f) -> Process:
    """Rebuild ``p`` with ``f`` applied to each immediate sub-process (no binder handling)."""
    sp = p.span
    if isinstance(p, (Request, Accept, Hide, Rec)):
        return replace(p, body=f(p.body))
    if isinstance(p, Send):
        return Send(p.chan, tuple(SendBranch(b.prob, b.exprs, f(b.cont), b.text) for b in p.branches), span=sp)
    if isinstance(p, Recv):
        return Recv(p.chan, tuple(RecvBranch(b.binders, f(b.cont)) for b in p.branches), span=sp)
    if isinstance(p, Select):
        return Select(p.chan, tuple(SelectBranch(b.prob, b.label, f(b.cont)) for b in p.branches), span=sp)
    if isinstance(p, Branching):
        return Branching(p.chan, tuple(OfferBranch(b.label, f(b.cont)) for b in p.branches), span=sp)
    if isinstance(p, (Deleg, SessRecv)):
        return replace(p, cont=f(p.cont))
    if isinstance(p, If):
        return If(p.cond, f(p.then), f(p.orelse), span=sp)
    if isinstance(p, Par):
        return Par(f(p.left), f(p.right), span=sp)
    return p
