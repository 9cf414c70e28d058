"""Random well-typed systems for property tests and the acceptance suite.

A system is built from a random well-formed global type: each participant's
process is a decoration of its projection (probabilities chosen inside the
intervals, values of the right sort), wrapped in request/accept. Delegation is
not generated.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

from . import ast as A
from . import types as T
from .kernel import ProbInterval, interval_contains
from .typing import SortEnv

SHARED = "a"
_CLASS_SORTS = {"num": ("nat", "int"), "bool": ("bool",), "string": ("string",)}


@dataclass(frozen=True)
class GeneratedSystem:
    seed: int
    protocol: T.Protocol
    gamma: SortEnv
    process: A.Process
    # participant -> body process under its request/accept
    bodies: tuple


# -- probabilities -----------------------------------------------------------


def _split_points(rng: random.Random, k: int, grain: int = 20) -> list:
    """k positive fractions with denominator ``grain`` summing to 1."""
    cuts = sorted(rng.sample(range(1, grain), k - 1))
    bounds = [0] + cuts + [grain]
    return [Fraction(bounds[i + 1] - bounds[i], grain) for i in range(k)]


def _interval_around(rng: random.Random, p: Fraction) -> ProbInterval:
    if rng.random() < 0.3:
        return ProbInterval(p, p)
    lo = max(Fraction(0), p - Fraction(rng.choice([0, 1, 2]), 20))
    hi = min(Fraction(1), p + Fraction(rng.choice([0, 1, 2]), 20))
    if lo == hi:
        return ProbInterval(p, p)
    lo_closed = lo == p or rng.random() < 0.5
    hi_closed = hi == p or rng.random() < 0.5
    return ProbInterval(lo, hi, lo_closed, hi_closed)


def choose_probabilities(rng: random.Random, intervals) -> Optional[list]:
    """A point of each interval such that the points sum to 1, or None."""
    los = [d.lo for d in intervals]
    caps = [d.hi - d.lo for d in intervals]
    rest = 1 - sum(los)
    total = sum(caps)
    if rest < 0 or rest > total:
        return None
    for attempt in range(20):
        ws = [Fraction(rng.randint(1, 4)) if attempt else Fraction(1) for _ in intervals]
        if attempt == 19:
            ws = [Fraction(1)] * len(intervals)
        denom = sum(w * c for w, c in zip(ws, caps))
        if denom == 0:
            ps = list(los)
        else:
            ps = [lo + rest * w * c / denom for lo, w, c in zip(los, ws, caps)]
        if sum(ps) == 1 and all(interval_contains(p, d) for p, d in zip(ps, intervals)):
            return ps
    return None


# -- global types ------------------------------------------------------------


class _GlobalGen:
    def __init__(self, rng: random.Random, parts: list):
        self.rng = rng
        self.parts = parts
        self.labels = 0

    def chan(self, p: int, q: int) -> str:
        a, b = sorted((p, q))
        return f"c{a}{b}"

    def label(self) -> str:
        self.labels += 1
        return f"l{self.labels}"

    def pair(self, parts) -> tuple:
        p, q = self.rng.sample(parts, 2)
        return p, q

    def sorts_for(self, k: int) -> list:
        classes = self.rng.sample(list(_CLASS_SORTS), k)
        return [(self.rng.choice(_CLASS_SORTS[c]),) for c in classes]

    def interaction(self, p, q, conts_for) -> T.GlobalType:
        """One exchange p -> q whose branches continue with ``conts_for(k)``."""
        rng = self.rng
        if rng.random() < 0.5:
            k = rng.choice([1, 1, 2, 3])
            conts = conts_for(k)
            pts = _split_points(rng, k)
            sorts = self.sorts_for(k)
            bs = tuple(T.GMsgBranch(_interval_around(rng, pt), s, c) for pt, s, c in zip(pts, sorts, conts))
            return T.GMsg(p, q, self.chan(p, q), bs)
        k = rng.choice([1, 2, 2, 3])
        conts = conts_for(k)
        pts = _split_points(rng, k)
        bs = tuple(T.GLabelBranch(_interval_around(rng, pt), self.label(), c) for pt, c in zip(pts, conts))
        return T.GBranch(p, q, self.chan(p, q), bs)

    def pair_prefix(self, p, q, n: int, tail: T.GlobalType) -> T.GlobalType:
        """``n`` single-branch exchanges between p and q, then ``tail``."""
        g = tail
        for _ in range(n):
            a, b = (p, q) if self.rng.random() < 0.5 else (q, p)
            g = self.interaction_single(a, b, g)
        return g

    def interaction_single(self, p, q, cont) -> T.GlobalType:
        if self.rng.random() < 0.6:
            sort = self.rng.choice(["nat", "int", "bool", "string"])
            return T.GMsg(p, q, self.chan(p, q), (T.GMsgBranch(T.point(1), (sort,), cont),))
        return T.GBranch(p, q, self.chan(p, q), (T.GLabelBranch(T.point(1), self.label(), cont),))

    def loop(self, parts) -> T.GlobalType:
        """A two-party loop: repeat an exchange or stop."""
        p, q = self.pair(parts)
        again = self.pair_prefix(p, q, self.rng.choice([0, 1]), T.GVar("t"))
        pts = _split_points(self.rng, 2)
        bs = (T.GLabelBranch(_interval_around(self.rng, pts[0]), "again", again),
              T.GLabelBranch(_interval_around(self.rng, pts[1]), "stop", T.GEND))
        return T.GRec("t", T.GBranch(p, q, self.chan(p, q), bs))

    def gen(self, parts, fuel: int) -> T.GlobalType:
        if fuel <= 0:
            if self.rng.random() < 0.15:
                return self.loop(parts)
            return T.GEND
        p, q = self.pair(parts)

        def conts_for(k):
            if k == 1:
                return [self.gen(parts, fuel - 1)]
            tail = self.gen(parts, fuel - 2)
            return [self.pair_prefix(p, q, self.rng.choice([0, 0, 1]), tail) for _ in range(k)]

        return self.interaction(p, q, conts_for)


def random_global(rng: random.Random, max_fuel: int = 5) -> tuple:
    """A well-formed global type and its participant list."""
    while True:
        n = rng.choice([2, 2, 3, 3, 4])
        parts = list(range(1, n + 1))
        gen = _GlobalGen(rng, parts)
        fuel = rng.randint(1, max_fuel)
        if n == 4 and rng.random() < 0.3:
            g = T.GPar(gen.gen([1, 2], fuel), gen.gen([3, 4], fuel))
        else:
            g = gen.gen(parts, fuel)
        if T.pid(g) != frozenset(parts):
            continue
        wf = T.well_formed(g)
        if wf.ok and all(not isinstance(T.project(g, q), T.Undefined) for q in parts):
            return g, parts


# -- decoration --------------------------------------------------------------


class _Decorator:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.vars = 0

    def fresh(self) -> str:
        self.vars += 1
        return f"x{self.vars}"

    def expr(self, sort: str, scope: dict) -> A.Expr:
        rng = self.rng
        same = [x for x, s in scope.items() if A.sort_class(s) == A.sort_class(sort)
                and (sort != "nat" or s == "nat")]
        if same and rng.random() < 0.4:
            x = rng.choice(same)
            if A.sort_class(sort) == "num" and rng.random() < 0.5:
                return A.BinOp("+", A.Ref(x), A.Lit(rng.randrange(0, 10)))
            if sort == "bool" and rng.random() < 0.5:
                return A.Not(A.Ref(x))
            return A.Ref(x)
        if sort == "bool":
            return A.Lit(rng.random() < 0.5)
        if sort == "nat":
            return A.Lit(rng.randrange(0, 100))
        if sort == "int":
            return A.Lit(rng.randrange(-50, 50))
        return A.Lit(rng.choice(["a", "b", "hello", "x y"]))

    def decorate(self, t: T.LocalType, scope: dict) -> A.Process:
        rng = self.rng
        if isinstance(t, T.LEnd):
            return A.INACT
        if isinstance(t, T.LVar):
            return A.Var("X_" + t.name)
        if isinstance(t, T.LRec):
            return A.Rec("X_" + t.var, self.decorate(t.body, scope))
        if isinstance(t, T.LSend):
            ps = choose_probabilities(rng, [b.interval for b in t.branches])
            out = []
            for p, b in zip(ps, t.branches):
                parts = [p]
                # a type branch may be played by several process branches of the same sort
                if len(b.sorts) == 1 and p > 0 and rng.random() < 0.25:
                    parts = [p / 2, p / 2]
                used = set()
                for share in parts:
                    for _ in range(10):
                        exprs = tuple(self.expr(s, scope) for s in b.sorts)
                        if exprs not in used:
                            break
                    used.add(exprs)
                    out.append(A.SendBranch(share, exprs, self.decorate(b.cont, scope)))
            return A.Send(t.chan, tuple(out))
        if isinstance(t, T.LRecv):
            out = []
            for b in t.branches:
                binders = tuple((self.fresh(), s) for s in b.sorts)
                out.append(A.RecvBranch(binders, self.decorate(b.cont, {**scope, **dict(binders)})))
            return A.Recv(t.chan, tuple(out))
        if isinstance(t, T.LSelect):
            ps = choose_probabilities(rng, [b.interval for b in t.branches])
            return A.Select(t.chan, tuple(A.SelectBranch(p, b.label, self.decorate(b.cont, scope))
                                          for p, b in zip(ps, t.branches)))
        if isinstance(t, T.LBranch):
            body = A.Branching(t.chan, tuple(A.OfferBranch(b.label, self.decorate(b.cont, scope))
                                             for b in t.branches))
            return body
        raise TypeError(f"cannot decorate {type(t).__name__}")

    def maybe_if(self, p: A.Process, scope: dict) -> A.Process:
        """Occasionally guard ``p`` by a conditional with two identical arms."""
        if isinstance(p, A.Inact) or self.rng.random() > 0.15:
            return p
        cond = self.expr("bool", scope)
        return A.If(cond, p, p)


def _decorate_nested(dec: _Decorator, p: A.Process) -> A.Process:
    # conditionals are inserted below the first prefix so the first action stays visible
    if isinstance(p, (A.Send, A.Recv, A.Select, A.Branching)):
        bs = []
        for b in p.branches:
            scope = dict(b.binders) if isinstance(b, A.RecvBranch) else {}
            bs.append(replace(b, cont=dec.maybe_if(b.cont, scope)))
        return A.with_branches(p, bs)
    return p


def generate_system(seed: int, max_fuel: int = 5) -> GeneratedSystem:
    rng = random.Random(seed)
    g, parts = random_global(rng, max_fuel)
    chans = T.channels(g)
    proto = T.Protocol("G", g, chans)
    dec = _Decorator(rng)
    bodies = []
    comps = []
    for q in parts:
        local = T.project(g, q)
        body = _decorate_nested(dec, dec.decorate(local, {}))
        bodies.append((q, body))
        if q == 1:
            comps.append(A.Request(SHARED, len(parts), chans, body))
        else:
            comps.append(A.Accept(SHARED, q, chans, body))
    return GeneratedSystem(seed, proto, SortEnv({}, {SHARED: proto}, {}), A.par(*comps), tuple(bodies))


def generate_systems(count: int, seed: int = 0, max_fuel: int = 5) -> list:
    return [generate_system(seed * 100003 + i, max_fuel) for i in range(count)]


# -- perturbation ------------------------------------------------------------


def _first_send(g: T.GlobalType):
    while isinstance(g, (T.GPar, T.GRec)):
        g = g.left if isinstance(g, T.GPar) else g.body
    if isinstance(g, (T.GMsg, T.GBranch)):
        return g.sender
    return None


def _scale_first(p: A.Process, factor: Fraction) -> Optional[A.Process]:
    if isinstance(p, (A.Send, A.Select)):
        b = p.branches[0]
        bs = (replace(b, prob=b.prob * factor),) + tuple(p.branches[1:])
        return A.with_branches(p, bs)
    if isinstance(p, A.Rec):
        body = _scale_first(p.body, factor)
        return None if body is None else A.Rec(p.var, body)
    return None


def perturb(system: GeneratedSystem, factor: Fraction = Fraction(1, 2)) -> GeneratedSystem:
    """Scale one branch probability of the protocol's first sender so that its
    branch probabilities no longer sum to 1."""
    sender = _first_send(system.protocol.gtype)
    comps = A.par_components(system.process)
    out = []
    done = False
    for c in comps:
        role = 1 if isinstance(c, A.Request) else c.role
        if not done and role == sender:
            body = _scale_first(c.body, factor)
            if body is not None:
                c = replace(c, body=body)
                done = True
        out.append(c)
    if not done:
        raise ValueError(f"system {system.seed} has no first sender to perturb")
    return GeneratedSystem(system.seed, system.protocol, system.gamma, A.par(*out), system.bodies)


__all__ = [
    "GeneratedSystem", "generate_system", "generate_systems", "perturb", "random_global",
    "choose_probabilities", "SHARED",
]
