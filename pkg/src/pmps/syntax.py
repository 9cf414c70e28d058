"""Concrete syntax: lexer, recursive-descent parser and printers.

Process grammar (``+`` groups the branches of one choice, ``|`` is loosest,
and the body after ``;`` / ``.`` / ``then`` / ``in`` is a single branch, so
nested sums and parallel compositions need parentheses)::

    P ::= P | P  |  B + ... + B
    B ::= [p:] c!<e,..>; B  |  c?(x:S,..); B  |  [p:] c <+ l; B
        | c!!(t,..); B  |  c??(t,..); B  |  c >> { l: P, .. }
        | request a[n](s,..). B  |  accept a[q](s,..). B
        | if e then B else B  |  new n in B  |  new (n,..) in B
        | mu X. B  |  X  |  0  |  ( P )

Global and local types follow the same layering with ``,`` (parallel) and
``+`` (branches); see the README for the full grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import ast as A
from . import types as T
from .kernel import ProbInterval, format_rational, parse_rational

KEYWORDS = {
    "request", "accept", "if", "then", "else", "new", "in", "mu", "end", "true", "false",
    "and", "or", "not", "role", "global", "shared", "proc", "system", "local", "error",
}

_OPS = [
    "(+)", "->", "!!", "??", "<+", ">>", "<=", ">=", "==", "!=",
    "!", "?", "<", ">", "(", ")", "[", "]", "{", "}", ",", ";", ":", ".", "|", "+", "-", "*", "/", "&", "@", "=",
]

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+|//[^\n]*)"
    r"|(?P<num>\d+(?:\.\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_'#]*)"
    r'|(?P<str>"(?:[^"\\\n]|\\.)*")'
    r"|(?P<op>" + "|".join(re.escape(o) for o in _OPS) + r")"
)


class ParseError(Exception):
    def __init__(self, message: str, span: Optional[A.Span] = None, related: Optional[A.Span] = None):
        self.message = message
        self.span = span
        self.related = related
        where = f"{span.line}:{span.col}: " if span else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int
    end: int
    span: A.Span


def tokenize(text: str) -> list:
    tokens = []
    line, line_start = 1, 0
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            span = A.Span(line, i - line_start + 1, line, i - line_start + 2)
            raise ParseError(f"unexpected character {text[i]!r}", span)
        kind = m.lastgroup
        tok_text = m.group()
        start_line, start_col = line, i - line_start + 1
        nl = tok_text.count("\n")
        if nl:
            line += nl
            line_start = i + tok_text.rindex("\n") + 1
        end_col = m.end() - line_start + 1
        if kind != "ws":
            if kind == "ident" and tok_text in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, tok_text, i, m.end(), A.Span(start_line, start_col, line, end_col)))
        i = m.end()
    col = len(text) - line_start + 1
    tokens.append(Token("eof", "", len(text), len(text), A.Span(line, col, line, col)))
    return tokens


def _unescape(s: str) -> str:
    body = s[1:-1]
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), body)


def _join(a: A.Span, b: A.Span) -> A.Span:
    return A.Span(a.line, a.col, b.end_line, b.end_col)


class Parser:
    def __init__(self, text: str, roles: Optional[dict] = None):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.roles = dict(roles or {})

    # -- token helpers --

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.text == text and t.kind in ("op", "kw")

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def last(self) -> Token:
        return self.toks[self.i - 1]

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(f"{msg} (found {found})", tok.span)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.next()

    def ident(self, what: str = "identifier") -> str:
        t = self.peek()
        if t.kind != "ident":
            self.error(f"expected {what}")
        return self.next().text

    def span_from(self, start: Token) -> A.Span:
        return _join(start.span, self.last().span)

    def done(self):
        if self.peek().kind != "eof":
            self.error("unexpected trailing input")

    # -- numbers, probabilities, participants --

    def prob(self) -> Fraction:
        t = self.peek()
        if t.kind != "num":
            self.error("expected a probability")
        text = self.next().text
        if self.at("/"):
            self.next()
            d = self.peek()
            if d.kind != "num":
                self.error("expected a denominator")
            text += "/" + self.next().text
        try:
            return parse_rational(text)
        except ValueError as e:
            raise ParseError(str(e), t.span)

    def branch_prob(self) -> Fraction:
        t = self.peek()
        p = self.prob()
        if not (0 < p <= 1):
            raise ParseError(f"branch probability {format_rational(p)} must lie in (0,1]", t.span)
        self.expect(":")
        return p

    def starts_prob(self) -> bool:
        return self.peek().kind == "num" and (self.at(":", 1) or self.at("/", 1))

    def interval(self) -> ProbInterval:
        t = self.peek()
        if self.at("[") or self.at("("):
            lo_closed = self.next().text == "["
            lo = self.prob()
            self.expect(",")
            hi = self.prob()
            if not (self.at("]") or self.at(")")):
                self.error("expected ']' or ')'")
            hi_closed = self.next().text == "]"
            try:
                return ProbInterval(lo, hi, lo_closed, hi_closed)
            except ValueError as e:
                raise ParseError(str(e), self.span_from(t))
        p = self.prob()
        try:
            return ProbInterval(p, p)
        except ValueError as e:
            raise ParseError(str(e), t.span)

    def starts_interval(self) -> bool:
        if self.peek().kind == "num":
            return True
        if self.at("["):
            return True
        return self.at("(") and self.peek(1).kind == "num" and self.at(",", 2)

    def participant(self) -> int:
        t = self.peek()
        if t.kind == "num" and "." not in t.text:
            self.next()
            q = int(t.text)
            if q < 1:
                raise ParseError("participants are positive integers", t.span)
            return q
        if t.kind == "ident":
            if t.text not in self.roles:
                raise ParseError(f"unknown role {t.text!r}", t.span)
            self.next()
            return self.roles[t.text]
        self.error("expected a participant")

    def names(self, close: str = ")") -> tuple:
        out = []
        if not self.at(close):
            out.append(self.ident("name"))
            while self.at(","):
                self.next()
                out.append(self.ident("name"))
        self.expect(close)
        return tuple(out)

    # -- expressions --

    def expr(self, no_gt: bool = False) -> A.Expr:
        e = self._and(no_gt)
        while self.at("or"):
            self.next()
            e = A.BinOp("or", e, self._and(no_gt))
        return e

    def _and(self, no_gt):
        e = self._not(no_gt)
        while self.at("and"):
            self.next()
            e = A.BinOp("and", e, self._not(no_gt))
        return e

    def _not(self, no_gt):
        if self.at("not"):
            self.next()
            return A.Not(self._not(no_gt))
        return self._cmp(no_gt)

    def _cmp(self, no_gt):
        e = self._add(no_gt)
        ops = ["==", "!=", "<", "<=", ">="] + ([] if no_gt else [">"])
        for op in ops:
            if self.at(op):
                self.next()
                return A.BinOp(op, e, self._add(no_gt))
        return e

    def _add(self, no_gt):
        e = self._mul(no_gt)
        while self.at("+") or self.at("-"):
            op = self.next().text
            e = A.BinOp(op, e, self._mul(no_gt))
        return e

    def _mul(self, no_gt):
        e = self._unary(no_gt)
        while self.at("*") or self.at("/"):
            op = self.next().text
            e = A.BinOp(op, e, self._unary(no_gt))
        return e

    def _unary(self, no_gt):
        if self.at("-"):
            self.next()
            t = self.peek()
            if t.kind == "num" and "." not in t.text:
                self.next()
                return A.Lit(-int(t.text))
            return A.Neg(self._unary(no_gt))
        return self._atom()

    def _atom(self):
        t = self.peek()
        if t.kind == "num":
            if "." in t.text:
                self.error("decimal numbers are not values")
            self.next()
            return A.Lit(int(t.text))
        if t.kind == "str":
            self.next()
            return A.Lit(_unescape(t.text))
        if self.at("true") or self.at("false"):
            self.next()
            return A.Lit(t.text == "true")
        if t.kind == "ident":
            self.next()
            return A.Ref(t.text)
        if self.at("("):
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        self.error("expected an expression")

    # -- processes --

    def process(self) -> A.Process:
        start = self.peek()
        p = self.sum()
        while self.at("|"):
            self.next()
            p = A.Par(p, self.sum(), span=self.span_from(start))
        return p

    def sum(self) -> A.Process:
        start = self.peek()
        p, summable = self.branch()
        if not self.at("+"):
            return p
        items = [(p, summable, start)]
        while self.at("+"):
            self.next()
            t = self.peek()
            q, s = self.branch()
            items.append((q, s, t))
        return self._combine(items, self.span_from(start))

    def _combine(self, items, span):
        first, _, _ = items[0]
        for q, summable, tok in items:
            if not summable:
                raise ParseError("only sends, receives and selections can be summed", q.span or tok.span)
            if type(q) is not type(first) or q.chan != first.chan:
                raise ParseError(
                    "a sum must consist of branches of one kind on one channel "
                    f"({_kind(first)} on {first.chan} mixed with {_kind(q)} on {q.chan})",
                    q.span, first.span)
        branches = []
        spans = []
        for q, _, _ in items:
            branches.extend(q.branches)
            spans.extend([q.span] * len(q.branches))
        if isinstance(first, A.Recv):
            seen = {}
            for b, sp in zip(branches, spans):
                key = A.sorts_class(b.sorts)
                if key in seen:
                    raise ParseError(
                        f"two receive branches expect the same sorts ({', '.join(b.sorts)}); "
                        f"first branch at {seen[key]}", sp, seen[key])
                seen[key] = sp
        if isinstance(first, A.Select):
            seen = {}
            for b, sp in zip(branches, spans):
                if b.label in seen:
                    raise ParseError(f"label {b.label} selected twice; first at {seen[b.label]}", sp, seen[b.label])
                seen[b.label] = sp
        return type(first)(first.chan, tuple(branches), span=span)

    def cont(self) -> A.Process:
        """Continuation after a prefix: ``; B`` or nothing (meaning 0)."""
        if self.at(";"):
            self.next()
            return self.branch()[0]
        return A.Inact(span=self.last().span)

    def branch(self):
        """Parse one branch; returns (process, may-join-a-sum)."""
        start = self.peek()
        if self.starts_prob():
            p = self.branch_prob()
            chan = self.ident("channel")
            if self.at("!"):
                return self._send(start, chan, p), True
            if self.at("<+"):
                return self._select(start, chan, p), True
            self.error("expected '!' or '<+' after a probability")
        t = self.peek()
        if t.kind == "num":
            if t.text != "0":
                self.error("expected a process")
            self.next()
            return A.Inact(span=t.span), False
        if self.at("("):
            self.next()
            p = self.process()
            self.expect(")")
            return p, False
        if self.at("request") or self.at("accept"):
            kw = self.next().text
            shared = self.ident("shared name")
            self.expect("[")
            if kw == "request":
                nt = self.peek()
                if nt.kind != "num" or "." in nt.text:
                    self.error("expected the number of participants")
                n = int(self.next().text)
            else:
                n = self.participant()
            self.expect("]")
            self.expect("(")
            chans = self.names()
            self.expect(".")
            body = self.branch()[0]
            cls = A.Request if kw == "request" else A.Accept
            return cls(shared, n, chans, body, span=self.span_from(start)), False
        if self.at("if"):
            self.next()
            cond = self.expr()
            self.expect("then")
            then = self.branch()[0]
            self.expect("else")
            orelse = self.branch()[0]
            return A.If(cond, then, orelse, span=self.span_from(start)), False
        if self.at("new"):
            self.next()
            if self.at("("):
                self.next()
                names = self.names()
            else:
                names = (self.ident("name"),)
            self.expect("in")
            body = self.branch()[0]
            return A.Hide(names, body, span=self.span_from(start)), False
        if self.at("mu"):
            self.next()
            var = self.ident("process variable")
            self.expect(".")
            body = self.branch()[0]
            return A.Rec(var, body, span=self.span_from(start)), False
        if self.at("error"):
            self.next()
            return A.Error(span=t.span), False
        if t.kind != "ident":
            self.error("expected a process")
        nxt = self.peek(1)
        if nxt.kind == "op":
            if nxt.text == "!":
                chan = self.next().text
                return self._send(start, chan, Fraction(1)), True
            if nxt.text == "<+":
                chan = self.next().text
                return self._select(start, chan, Fraction(1)), True
            if nxt.text == "?":
                chan = self.next().text
                self.next()
                self.expect("(")
                binders = []
                if not self.at(")"):
                    binders.append(self._binder())
                    while self.at(","):
                        self.next()
                        binders.append(self._binder())
                self.expect(")")
                names = [x for x, _ in binders]
                dup = {x for x in names if names.count(x) > 1}
                if dup:
                    raise ParseError(f"variable {sorted(dup)[0]} bound twice", self.span_from(start))
                cont = self.cont()
                return A.Recv(chan, (A.RecvBranch(tuple(binders), cont),), span=self.span_from(start)), True
            if nxt.text in ("!!", "??"):
                chan = self.next().text
                op = self.next().text
                self.expect("(")
                names = self.names()
                cont = self.cont()
                cls = A.Deleg if op == "!!" else A.SessRecv
                return cls(chan, names, cont, span=self.span_from(start)), False
            if nxt.text == ">>":
                chan = self.next().text
                self.next()
                self.expect("{")
                branches = []
                seen = {}
                while True:
                    lt = self.peek()
                    label = self.ident("label")
                    if label in seen:
                        raise ParseError(f"label {label} offered twice; first at {seen[label]}", lt.span, seen[label])
                    seen[label] = lt.span
                    self.expect(":")
                    branches.append(A.OfferBranch(label, self.process()))
                    if self.at(","):
                        self.next()
                        continue
                    break
                self.expect("}")
                return A.Branching(chan, tuple(branches), span=self.span_from(start)), False
        self.next()
        return A.Var(t.text, span=t.span), False

    def _binder(self):
        x = self.ident("variable")
        self.expect(":")
        st = self.peek()
        s = self.ident("sort")
        if s not in A.SORTS:
            raise ParseError(f"unknown sort {s!r} (expected one of {', '.join(A.SORTS)})", st.span)
        return (x, s)

    def _send(self, start, chan, p):
        self.expect("!")
        self.expect("<")
        first = self.peek()
        exprs = []
        if not self.at(">"):
            exprs.append(self.expr(no_gt=True))
            while self.at(","):
                self.next()
                exprs.append(self.expr(no_gt=True))
        close = self.expect(">")
        text = " ".join(self.text[first.pos:close.pos].split())
        cont = self.cont()
        return A.Send(chan, (A.SendBranch(p, tuple(exprs), cont, text),), span=self.span_from(start))

    def _select(self, start, chan, p):
        self.expect("<+")
        label = self.ident("label")
        cont = self.cont()
        return A.Select(chan, (A.SelectBranch(p, label, cont),), span=self.span_from(start))

    # -- sorts helper shared by types --

    def starts_sorts(self, close: str) -> bool:
        k = 0
        if self.at(close):
            return True
        while True:
            t = self.peek(k)
            if t.kind != "ident" or t.text not in A.SORTS:
                return False
            if self.at(close, k + 1):
                return True
            if not self.at(",", k + 1):
                return False
            k += 2

    def sorts(self, close: str) -> tuple:
        out = []
        if not self.at(close):
            out.append(self.ident("sort"))
            while self.at(","):
                self.next()
                out.append(self.ident("sort"))
        self.expect(close)
        return tuple(out)

    # -- global types --

    def gtype(self) -> T.GlobalType:
        start = self.peek()
        g = self.gsum()
        while self.at(","):
            self.next()
            g = T.GPar(g, self.gsum(), span=self.span_from(start))
        return g

    def gsum(self) -> T.GlobalType:
        start = self.peek()
        g, summable = self.gbranch()
        if not self.at("+"):
            return g
        items = [(g, summable)]
        while self.at("+"):
            self.next()
            items.append(self.gbranch())
        first = items[0][0]
        branches = []
        for h, s in items:
            if not s or type(h) is not type(first) or (h.sender, h.receiver, h.chan) != (
                    first.sender, first.receiver, first.chan):
                raise ParseError("branches of a global sum must share sender, receiver, channel and kind",
                                 h.span, first.span)
            branches.extend(h.branches)
        return type(first)(first.sender, first.receiver, first.chan, tuple(branches), span=self.span_from(start))

    def gbranch(self):
        start = self.peek()
        t = self.peek()
        if (t.kind == "num" or t.kind == "ident") and self.at("->", 1):
            q1 = self.participant()
            self.expect("->")
            d = self.interval()
            q2 = self.participant()
            self.expect(":")
            chan = self.ident("channel")
            if self.at("{"):
                self.next()
                label = self.ident("label")
                self.expect(":")
                cont = self.gtype()
                self.expect("}")
                return T.GBranch(q1, q2, chan, (T.GLabelBranch(d, label, cont),), span=self.span_from(start)), True
            self.expect("<")
            if self.starts_sorts(">"):
                sorts = self._checked_sorts(">")
                self.expect(".")
                cont = self.gbranch()[0]
                return T.GMsg(q1, q2, chan, (T.GMsgBranch(d, sorts, cont),), span=self.span_from(start)), True
            carried = self.ltype()
            self.expect("@")
            role = self.participant()
            self.expect(">")
            self.expect(".")
            cont = self.gbranch()[0]
            if d != ProbInterval(1, 1):
                raise ParseError("delegation happens with probability 1", self.span_from(start))
            return T.GDeleg(q1, q2, chan, carried, role, cont, span=self.span_from(start)), False
        if self.at("mu"):
            self.next()
            var = self.ident("type variable")
            self.expect(".")
            body = self.gbranch()[0]
            return T.GRec(var, body, span=self.span_from(start)), False
        if self.at("end"):
            self.next()
            return T.GEnd(span=t.span), False
        if self.at("("):
            self.next()
            g = self.gtype()
            self.expect(")")
            return g, False
        if t.kind == "ident":
            self.next()
            return T.GVar(t.text, span=t.span), False
        self.error("expected a global type")

    def _checked_sorts(self, close):
        t = self.peek()
        sorts = self.sorts(close)
        for s in sorts:
            if s not in A.SORTS:
                raise ParseError(f"unknown sort {s!r}", t.span)
        return sorts

    # -- local types --

    def ltype(self) -> T.LocalType:
        start = self.peek()
        t, summable = self.lbranch()
        if not self.at("+"):
            return t
        items = [(t, summable, start)]
        while self.at("+"):
            self.next()
            tok = self.peek()
            u, s = self.lbranch()
            items.append((u, s, tok))
        first = items[0][0]
        branches = []
        for u, s, tok in items:
            if not s or type(u) is not type(first) or u.chan != first.chan:
                raise ParseError("branches of a local sum must be sends or receives on one channel", tok.span)
            branches.extend(u.branches)
        return type(first)(first.chan, tuple(branches))

    def lbranch(self):
        if self.starts_interval() and not (self.peek().kind == "ident"):
            d = self.interval()
            self.expect(":")
            chan = self.ident("channel")
            self.expect("!")
            self.expect("<")
            sorts = self._checked_sorts(">")
            self.expect(".")
            return T.LSend(chan, (T.LSendBranch(d, sorts, self.lbranch()[0]),)), True
        if self.at("mu"):
            self.next()
            var = self.ident("type variable")
            self.expect(".")
            return T.LRec(var, self.lbranch()[0]), False
        if self.at("end"):
            self.next()
            return T.END, False
        if self.at("("):
            self.next()
            t = self.ltype()
            self.expect(")")
            return t, False
        tok = self.peek()
        if tok.kind != "ident":
            self.error("expected a local type")
        chan = self.next().text
        if self.at("!"):
            self.next()
            self.expect("<")
            if self.starts_sorts(">"):
                sorts = self._checked_sorts(">")
                self.expect(".")
                return T.LSend(chan, (T.LSendBranch(ProbInterval(1, 1), sorts, self.lbranch()[0]),)), True
            carried = self.ltype()
            self.expect("@")
            role = self.participant()
            self.expect(">")
            self.expect(".")
            return T.LDeleg(chan, carried, role, self.lbranch()[0]), False
        if self.at("?"):
            self.next()
            self.expect("(")
            if self.starts_sorts(")"):
                sorts = self._checked_sorts(")")
                self.expect(".")
                return T.LRecv(chan, (T.LRecvBranch(sorts, self.lbranch()[0]),)), True
            carried = self.ltype()
            self.expect("@")
            role = self.participant()
            self.expect(")")
            self.expect(".")
            return T.LSessRecv(chan, carried, role, self.lbranch()[0]), False
        if self.at("(+)"):
            self.next()
            self.expect("{")
            branches = []
            while True:
                d = self.interval()
                self.expect(":")
                label = self.ident("label")
                self.expect(":")
                branches.append(T.LSelBranch(d, label, self.ltype()))
                if not self.at(","):
                    break
                self.next()
            self.expect("}")
            return T.LSelect(chan, tuple(branches)), False
        if self.at("&"):
            self.next()
            self.expect("{")
            branches = []
            while True:
                label = self.ident("label")
                self.expect(":")
                branches.append(T.LOfferBranch(label, self.ltype()))
                if not self.at(","):
                    break
                self.next()
            self.expect("}")
            return T.LBranch(chan, tuple(branches)), False
        return T.LVar(chan), False


def _kind(p) -> str:
    return {A.Send: "send", A.Recv: "receive", A.Select: "selection"}.get(type(p), type(p).__name__)


def parse_process(text: str, roles: Optional[dict] = None) -> A.Process:
    ps = Parser(text, roles)
    p = ps.process()
    ps.done()
    return p


def parse_expr(text: str) -> A.Expr:
    ps = Parser(text)
    e = ps.expr()
    ps.done()
    return e


def parse_global(text: str, roles: Optional[dict] = None) -> T.GlobalType:
    ps = Parser(text, roles)
    g = ps.gtype()
    ps.done()
    return g


def parse_local(text: str, roles: Optional[dict] = None) -> T.LocalType:
    ps = Parser(text, roles)
    t = ps.ltype()
    ps.done()
    return t


# -- source files ------------------------------------------------------------


@dataclass
class SourceFile:
    roles: dict = field(default_factory=dict)
    globals: dict = field(default_factory=dict)   # name -> Protocol
    shared: dict = field(default_factory=dict)    # shared name -> protocol name
    procs: dict = field(default_factory=dict)
    systems: dict = field(default_factory=dict)
    locals: dict = field(default_factory=dict)
    spans: dict = field(default_factory=dict)

    @property
    def role_names(self) -> dict:
        return {v: k for k, v in self.roles.items()}

    def protocol_of(self, shared: str) -> T.Protocol:
        return self.globals[self.shared[shared]]

    def gamma(self):
        from .typing import SortEnv
        return SortEnv(shared={a: self.globals[g] for a, g in self.shared.items()})

    def process(self, name: str) -> A.Process:
        if name in self.systems:
            return self.systems[name]
        if name in self.procs:
            return self.procs[name]
        raise KeyError(name)


_DECL_KW = ("role", "global", "shared", "proc", "system", "local")


def parse_file(text: str) -> SourceFile:
    ps = Parser(text)
    roles = _prescan_roles(ps.toks)
    ps.roles = dict(roles)
    out = SourceFile(roles=dict(roles))
    raw_globals, raw_procs = {}, {}
    declared = {}
    while ps.peek().kind != "eof":
        start = ps.peek()
        if not any(ps.at(k) for k in _DECL_KW):
            ps.error("expected a declaration (role, global, shared, proc, system or local)")
        kw = ps.next().text
        name_tok = ps.peek()
        name = ps.ident("declaration name")
        if kw != "role" and name in declared:
            raise ParseError(f"{name} declared twice; first at {declared[name]}", name_tok.span, declared[name])
        if kw == "role":
            ps.expect("=")
            ps.participant()
        elif kw == "global":
            chans = None
            if ps.at("("):
                ps.next()
                chans = ps.names()
            ps.expect("=")
            raw_globals[name] = (ps.gtype(), chans)
        elif kw == "shared":
            ps.expect(":")
            gt = ps.peek()
            out.shared[name] = ps.ident("global type name")
            out.spans[("shared", name)] = gt.span
        elif kw in ("proc", "system"):
            ps.expect("=")
            raw_procs[name] = (kw, ps.process())
        else:
            ps.expect("=")
            out.locals[name] = ps.ltype()
        if kw != "role":
            declared[name] = name_tok.span
            out.spans[name] = ps.span_from(start)
        if ps.at(";"):
            ps.next()
    for name, (g, chans) in raw_globals.items():
        g = _resolve_global(g, raw_globals, (name,), out.spans)
        found = T.channels(g)
        if chans is None:
            chans = found
        else:
            missing = [c for c in found if c not in chans]
            if missing or len(set(chans)) != len(chans):
                raise ParseError(
                    f"channel list of {name} must name each channel of the type once (missing {', '.join(missing)})"
                    if missing else f"channel list of {name} repeats a channel", out.spans[name])
        out.globals[name] = T.Protocol(name, g, tuple(chans))
    for a, gname in out.shared.items():
        if gname not in out.globals:
            raise ParseError(f"shared name {a} refers to unknown global type {gname}", out.spans[("shared", a)])
    for name, (kw, p) in raw_procs.items():
        p = _resolve_process(p, raw_procs, (name,), out.spans)
        (out.systems if kw == "system" else out.procs)[name] = p
    return out


def _prescan_roles(toks) -> dict:
    roles = {}
    for i, t in enumerate(toks):
        if t.kind == "kw" and t.text == "role" and i + 3 < len(toks):
            name, eq, num = toks[i + 1], toks[i + 2], toks[i + 3]
            if name.kind == "ident" and eq.text == "=" and num.kind == "num" and "." not in num.text:
                if name.text in roles:
                    raise ParseError(f"role {name.text} declared twice", name.span)
                roles[name.text] = int(num.text)
    return roles


def _resolve_global(g, table, stack, spans, bound=frozenset()):
    if isinstance(g, T.GVar):
        if g.name in bound:
            return g
        if g.name not in table:
            raise ParseError(f"unknown global type {g.name}", g.span or spans.get(stack[0]))
        if g.name in stack:
            raise ParseError(f"global type {g.name} refers to itself; use mu", g.span or spans.get(stack[0]))
        return _resolve_global(table[g.name][0], table, stack + (g.name,), spans)
    if isinstance(g, T.GRec):
        return T.GRec(g.var, _resolve_global(g.body, table, stack, spans, bound | {g.var}), span=g.span)
    if isinstance(g, T.GMsg):
        return T.GMsg(g.sender, g.receiver, g.chan, tuple(
            T.GMsgBranch(b.interval, b.sorts, _resolve_global(b.cont, table, stack, spans, bound))
            for b in g.branches), span=g.span)
    if isinstance(g, T.GBranch):
        return T.GBranch(g.sender, g.receiver, g.chan, tuple(
            T.GLabelBranch(b.interval, b.label, _resolve_global(b.cont, table, stack, spans, bound))
            for b in g.branches), span=g.span)
    if isinstance(g, T.GDeleg):
        return T.GDeleg(g.sender, g.receiver, g.chan, g.carried, g.role,
                        _resolve_global(g.cont, table, stack, spans, bound), span=g.span)
    if isinstance(g, T.GPar):
        return T.GPar(_resolve_global(g.left, table, stack, spans, bound),
                      _resolve_global(g.right, table, stack, spans, bound), span=g.span)
    return g


def _resolve_process(p, table, stack, spans, shadow=frozenset()):
    """Inline references to other declarations; channels in the inlined body
    are bound by the binders around the reference (textual expansion)."""
    if isinstance(p, A.Var):
        if p.name in shadow:
            return p
        if p.name not in table:
            raise ParseError(f"unknown process {p.name}", p.span or spans.get(stack[0]))
        if p.name in stack:
            raise ParseError(f"process {p.name} refers to itself; use mu", p.span or spans.get(stack[0]))
        return _resolve_process(table[p.name][1], table, stack + (p.name,), spans)
    if isinstance(p, A.Rec):
        shadow = shadow | {p.var}
    return A.map_children(p, lambda c: _resolve_process(c, table, stack, spans, shadow))


# -- printing ----------------------------------------------------------------

_PREC = {"or": 1, "and": 2, "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4, "+": 5, "-": 5, "*": 6, "/": 6}


def _has_gt(e) -> bool:
    if isinstance(e, A.BinOp):
        return e.op == ">" or _has_gt(e.left) or _has_gt(e.right)
    if isinstance(e, (A.Not, A.Neg)):
        return _has_gt(e.arg)
    return False


def print_expr(e: A.Expr, level: int = 0) -> str:
    if isinstance(e, A.Lit):
        s = A.format_value(e.value)
        return f"({s})" if isinstance(e.value, int) and not isinstance(e.value, bool) and e.value < 0 and level > 6 else s
    if isinstance(e, A.Ref):
        return e.name
    if isinstance(e, A.Not):
        s = "not " + print_expr(e.arg, 3)
        return f"({s})" if level > 3 else s
    if isinstance(e, A.Neg):
        inner = print_expr(e.arg, 8)
        if isinstance(e.arg, A.Lit) and not isinstance(e.arg.value, bool) and isinstance(e.arg.value, int):
            inner = f"({inner})"
        return "-" + inner
    prec = _PREC[e.op]
    if prec == 4:
        s = f"{print_expr(e.left, 5)} {e.op} {print_expr(e.right, 5)}"
    else:
        s = f"{print_expr(e.left, prec)} {e.op} {print_expr(e.right, prec + 1)}"
    return f"({s})" if level > prec else s


def _payload(e: A.Expr) -> str:
    s = print_expr(e)
    return f"({s})" if _has_gt(e) else s


def _participant(q: int, names: Optional[dict]) -> str:
    return names.get(q, str(q)) if names else str(q)


_PAR, _SUM, _BRANCH = 0, 1, 2


def print_process(p: A.Process, role_names: Optional[dict] = None) -> str:
    return _pp(p, _PAR, role_names)


def _wrap(s: str, own: int, level: int) -> str:
    return f"({s})" if level > own else s


def _cont(p: A.Process, names) -> str:
    if isinstance(p, A.Inact):
        return ""
    return "; " + _pp(p, _BRANCH, names)


def _prob(p: Fraction) -> str:
    return format_rational(p)


def _pp(p: A.Process, level: int, names) -> str:
    if isinstance(p, A.Par):
        return _wrap(f"{_pp(p.left, _PAR, names)} | {_pp(p.right, _SUM, names)}", _PAR, level)
    if isinstance(p, A.Inact):
        return "0"
    if isinstance(p, A.Error):
        return "error"
    if isinstance(p, A.Var):
        return p.name
    if isinstance(p, A.Send):
        parts = []
        for b in p.branches:
            prefix = "" if (len(p.branches) == 1 and b.prob == 1) else f"{_prob(b.prob)}: "
            parts.append(f"{prefix}{p.chan}!<{', '.join(_payload(e) for e in b.exprs)}>{_cont(b.cont, names)}")
        return _wrap(" + ".join(parts), _SUM if len(parts) > 1 else _BRANCH, level)
    if isinstance(p, A.Recv):
        parts = []
        for b in p.branches:
            binders = ", ".join(f"{x}: {s}" for x, s in b.binders)
            parts.append(f"{p.chan}?({binders}){_cont(b.cont, names)}")
        return _wrap(" + ".join(parts), _SUM if len(parts) > 1 else _BRANCH, level)
    if isinstance(p, A.Select):
        parts = []
        for b in p.branches:
            prefix = "" if (len(p.branches) == 1 and b.prob == 1) else f"{_prob(b.prob)}: "
            parts.append(f"{prefix}{p.chan} <+ {b.label}{_cont(b.cont, names)}")
        return _wrap(" + ".join(parts), _SUM if len(parts) > 1 else _BRANCH, level)
    if isinstance(p, A.Branching):
        inner = ", ".join(f"{b.label}: {_pp(b.cont, _PAR, names)}" for b in p.branches)
        return f"{p.chan} >> {{ {inner} }}"
    if isinstance(p, A.Deleg):
        return f"{p.chan}!!({', '.join(p.payload)}){_cont(p.cont, names)}"
    if isinstance(p, A.SessRecv):
        return f"{p.chan}??({', '.join(p.params)}){_cont(p.cont, names)}"
    if isinstance(p, A.If):
        return (f"if {print_expr(p.cond)} then {_pp(p.then, _BRANCH, names)} "
                f"else {_pp(p.orelse, _BRANCH, names)}")
    if isinstance(p, A.Hide):
        bound = p.names[0] if len(p.names) == 1 else "(" + ", ".join(p.names) + ")"
        return f"new {bound} in {_pp(p.body, _BRANCH, names)}"
    if isinstance(p, A.Rec):
        return f"mu {p.var}. {_pp(p.body, _BRANCH, names)}"
    if isinstance(p, A.Request):
        return f"request {p.shared}[{p.n}]({', '.join(p.chans)}). {_pp(p.body, _BRANCH, names)}"
    if isinstance(p, A.Accept):
        return (f"accept {p.shared}[{_participant(p.role, names)}]({', '.join(p.chans)}). "
                f"{_pp(p.body, _BRANCH, names)}")
    raise TypeError(f"not a process: {p!r}")


def print_global(g: T.GlobalType, role_names: Optional[dict] = None) -> str:
    return _pg(g, _PAR, role_names)


def _pg(g: T.GlobalType, level: int, names) -> str:
    if isinstance(g, T.GPar):
        return _wrap(f"{_pg(g.left, _PAR, names)}, {_pg(g.right, _SUM, names)}", _PAR, level)
    if isinstance(g, T.GEnd):
        return "end"
    if isinstance(g, T.GVar):
        return g.name
    if isinstance(g, T.GRec):
        return f"mu {g.var}. {_pg(g.body, _BRANCH, names)}"
    head = f"{_participant(g.sender, names)} ->%s {_participant(g.receiver, names)} : {g.chan}"
    if isinstance(g, T.GDeleg):
        return (head % "1") + f"<{print_local(g.carried, names)} @ {_participant(g.role, names)}>. " \
            + _pg(g.cont, _BRANCH, names)
    parts = []
    for b in g.branches:
        if isinstance(g, T.GMsg):
            parts.append((head % b.interval) + f"<{', '.join(b.sorts)}>. {_pg(b.cont, _BRANCH, names)}")
        else:
            parts.append((head % b.interval) + f" {{ {b.label} : {_pg(b.cont, _PAR, names)} }}")
    return _wrap(" + ".join(parts), _SUM if len(parts) > 1 else _BRANCH, level)


def print_local(t: T.LocalType, role_names: Optional[dict] = None) -> str:
    return _pl(t, _SUM, role_names)


def _pl(t: T.LocalType, level: int, names) -> str:
    if isinstance(t, T.LEnd):
        return "end"
    if isinstance(t, T.LVar):
        return t.name
    if isinstance(t, T.LRec):
        return f"mu {t.var}. {_pl(t.body, _BRANCH, names)}"
    if isinstance(t, T.LSend):
        parts = [f"{b.interval}: {t.chan}!<{', '.join(b.sorts)}>. {_pl(b.cont, _BRANCH, names)}" for b in t.branches]
        return _wrap(" + ".join(parts), _SUM if len(parts) > 1 else _BRANCH, level)
    if isinstance(t, T.LRecv):
        parts = [f"{t.chan}?({', '.join(b.sorts)}). {_pl(b.cont, _BRANCH, names)}" for b in t.branches]
        return _wrap(" + ".join(parts), _SUM if len(parts) > 1 else _BRANCH, level)
    if isinstance(t, T.LDeleg):
        return (f"{t.chan}!<{_pl(t.carried, _SUM, names)} @ {_participant(t.role, names)}>. "
                f"{_pl(t.cont, _BRANCH, names)}")
    if isinstance(t, T.LSessRecv):
        return (f"{t.chan}?({_pl(t.carried, _SUM, names)} @ {_participant(t.role, names)}). "
                f"{_pl(t.cont, _BRANCH, names)}")
    if isinstance(t, T.LSelect):
        inner = ", ".join(f"{b.interval}: {b.label}: {_pl(b.cont, _SUM, names)}" for b in t.branches)
        return f"{t.chan} (+) {{ {inner} }}"
    if isinstance(t, T.LBranch):
        inner = ", ".join(f"{b.label}: {_pl(b.cont, _SUM, names)}" for b in t.branches)
        return f"{t.chan} & {{ {inner} }}"
    raise TypeError(f"not a local type: {t!r}")
