"""Path predicates over reduction graphs, their exact probability, the most
probable class of a partition, and Monte Carlo estimation.

A predicate holds of a complete run (a path from the root to a terminal or
depth-truncated node). Atoms ask whether some step on the run performed a
matching action; atoms combine with ``!``, ``|`` and ``&``. ``|`` binds
tighter than ``&``, so ``A | B & C`` reads ``(A | B) & C``.

Atoms::

    sent(c, v)        a value exchange on c carried value v
    chose(c, text)    a send or selection on c whose source text is ``text``
    label(c, l)       a selection of label l on c
    sort(c, S, ...)   a value exchange on c carried values of sorts S, ...
    on(c)             any action on c
    rule(R)           an action by reduction rule R
    true, false
"""

from __future__ import annotations

import itertools
import math
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import ast as A
from . import semantics as M
from .kernel import format_rational


class QueryError(Exception):
    pass


# -- predicates --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Atom:
    kind: str
    args: tuple

    def _key(self) -> tuple:
        # True == 1 in Python, but sent(c, true) and sent(c, 1) are different atoms
        return (self.kind, tuple((type(x).__name__, x) for x in self.args))

    def __eq__(self, other):
        return isinstance(other, Atom) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def matches(self, a: M.Action) -> bool:
        k = self.kind
        if k == "true":
            return True
        if k == "false":
            return False
        if k == "rule":
            return a.rule == self.args[0]
        chan = self.args[0]
        if a.channel is None or chan not in (a.channel, a.base_channel):
            return False
        if k == "on":
            return True
        if k == "sent":
            return a.rule == "Com" and any(A.same_value(v, self.args[1]) for v in a.values)
        if k == "chose":
            return a.rule in ("Com", "Label") and a.text is not None and _squash(a.text) == _squash(self.args[1])
        if k == "label":
            return a.rule == "Label" and a.label == self.args[1]
        if k == "sort":
            return a.rule == "Com" and A.sorts_class(a.sorts) == A.sorts_class(self.args[1:])
        raise QueryError(f"unknown atom {k}")

    def __str__(self):
        if self.kind in ("true", "false"):
            return self.kind
        args = [A.format_value(x) if self.kind == "sent" and i == 1 else str(x) for i, x in enumerate(self.args)]
        return f"{self.kind}({', '.join(args)})"


@dataclass(frozen=True)
class Not:
    arg: object

    def __str__(self):
        return f"!{_wrap(self.arg)}"


@dataclass(frozen=True)
class And:
    left: object
    right: object

    def __str__(self):
        return f"{_wrap(self.left)} & {_wrap(self.right)}"


@dataclass(frozen=True)
class Or:
    left: object
    right: object

    def __str__(self):
        return f"{_wrap(self.left)} | {_wrap(self.right)}"


Predicate = object


def _wrap(p) -> str:
    return str(p) if isinstance(p, (Atom, Not)) else f"({p})"


def _squash(text: str) -> str:
    return re.sub(r"\s+", "", text)


def atoms_of(p) -> list:
    """Distinct atoms of ``p`` in first-occurrence order."""
    out = []

    def walk(q):
        if isinstance(q, Atom):
            if q not in out:
                out.append(q)
        elif isinstance(q, Not):
            walk(q.arg)
        else:
            walk(q.left)
            walk(q.right)

    walk(p)
    return out


def evaluate(p, holds) -> bool:
    """Truth of ``p`` given ``holds(atom)``."""
    if isinstance(p, Atom):
        return holds(p)
    if isinstance(p, Not):
        return not evaluate(p.arg, holds)
    if isinstance(p, And):
        return evaluate(p.left, holds) and evaluate(p.right, holds)
    return evaluate(p.left, holds) or evaluate(p.right, holds)


def holds_on_run(p, actions) -> bool:
    """Truth of ``p`` on a run given as the sequence of its actions."""
    actions = list(actions)
    return evaluate(p, lambda at: any(at.matches(a) for a in actions))


_TOKEN = re.compile(r"""\s*(?:(?P<str>"(?:[^"\\]|\\.)*")|(?P<num>-?\d+)|(?P<id>[A-Za-z_][\w#]*)|(?P<op>[!&|(),]))""")
_ARITY = {"sent": 2, "chose": 2, "label": 2, "on": 1, "rule": 1}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str):
        raise QueryError(f"{msg} at column {self.pos + 1}")

    def peek(self):
        m = _TOKEN.match(self.text, self.pos)
        if not m or m.end() == m.start():
            return None, None
        kind = m.lastgroup
        return kind, m.group(kind)

    def next(self):
        m = _TOKEN.match(self.text, self.pos)
        if not m:
            self.error("unexpected character")
        self.pos = m.end()
        return m.lastgroup, m.group(m.lastgroup)

    def expect(self, op):
        kind, tok = self.next()
        if tok != op:
            self.error(f"expected '{op}'")

    def at_end(self) -> bool:
        return self.text[self.pos:].strip() == ""

    def parse(self):
        p = self.conj()
        if not self.at_end():
            self.error("unexpected input")
        return p

    def conj(self):
        p = self.disj()
        while self.peek()[1] == "&":
            self.next()
            p = And(p, self.disj())
        return p

    def disj(self):
        p = self.unary()
        while self.peek()[1] == "|":
            self.next()
            p = Or(p, self.unary())
        return p

    def unary(self):
        kind, tok = self.peek()
        if tok == "!" or (kind == "id" and tok == "not"):
            self.next()
            return Not(self.unary())
        if tok == "(":
            self.next()
            p = self.conj()
            self.expect(")")
            return p
        if kind == "id":
            return self.atom()
        self.error("expected a predicate")

    def raw_arg(self) -> str:
        """Text up to the next top-level ',' or ')'."""
        depth = 0
        start = self.pos
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == '"':
                m = re.compile(r'"(?:[^"\\]|\\.)*"').match(self.text, self.pos)
                if not m:
                    self.error("unterminated string")
                self.pos = m.end()
                continue
            if ch == "(":
                depth += 1
            elif ch == ")":
                if depth == 0:
                    break
                depth -= 1
            elif ch == "," and depth == 0:
                break
            self.pos += 1
        arg = self.text[start:self.pos].strip()
        if not arg:
            self.error("empty argument")
        return arg

    def value(self):
        kind, tok = self.next()
        if kind == "str":
            return re.sub(r"\\(.)", r"\1", tok[1:-1])
        if kind == "num":
            return int(tok)
        if tok in ("true", "false"):
            return tok == "true"
        self.error("expected a value")

    def atom(self):
        _, name = self.next()
        if name in ("true", "false"):
            return Atom(name, ())
        if name not in _ARITY and name != "sort":
            self.error(f"unknown atom '{name}'")
        self.expect("(")
        args = []
        if name == "sent":
            args = [self.ident(), None]
            self.expect(",")
            args[1] = self.value()
        elif name == "chose":
            args.append(self.ident())
            self.expect(",")
            args.append(self.raw_arg())
        else:
            args.append(self.ident())
            while self.peek()[1] == ",":
                self.next()
                args.append(self.ident())
            want = _ARITY.get(name)
            if want is not None and len(args) != want:
                self.error(f"'{name}' takes {want} argument(s)")
            if name == "sort" and len(args) < 2:
                self.error("'sort' needs a channel and at least one sort")
        self.expect(")")
        return Atom(name, tuple(args))

    def ident(self) -> str:
        kind, tok = self.next()
        if kind != "id":
            self.error("expected a name")
        return tok


def parse_predicate(text: str):
    return _Parser(text).parse()


def _as_predicate(pred):
    return parse_predicate(pred) if isinstance(pred, str) else pred


# -- exact probability -------------------------------------------------------


@dataclass(frozen=True)
class QueryResult:
    """Probability of a predicate. ``kind`` is 'Exact' when no reachable node
    offers a nondeterministic choice, otherwise 'Range' with the bounds over
    all resolutions of that choice."""

    lo: Fraction
    hi: Fraction
    kind: str
    paths_counted: int
    nondeterministic_nodes: int
    truncated_nodes: int = 0
    schedulers: str = "memoryless"

    @property
    def exact(self) -> bool:
        return self.kind == "Exact"

    @property
    def value(self) -> Fraction:
        if not self.exact:
            raise QueryError(f"the probability is a range [{self.lo}, {self.hi}]")
        return self.lo

    def __str__(self):
        if self.exact:
            return f"{self.lo} ({format_rational(self.lo)})"
        return f"[{self.lo}, {self.hi}] ([{format_rational(self.lo)}, {format_rational(self.hi)}])"


def _edge_mask(label: M.StepLabel, atoms: list) -> int:
    m = 0
    for i, at in enumerate(atoms):
        if any(at.matches(a) for a in label.actions):
            m |= 1 << i
    return m


def _mask_holds(pred, atoms: list, mask: int) -> bool:
    return evaluate(pred, lambda at: bool(mask >> atoms.index(at) & 1))


def _check_graph(g: M.ReductionGraph):
    if g.has_error():
        raise QueryError("the reduction graph reaches the error process; the process is not well-typed")
    if not g.is_acyclic():
        raise QueryError("the reduction graph has cycles; build it with unroll=True")


def reachable(g: M.ReductionGraph) -> list:
    seen = {g.root}
    order = [g.root]
    for n in order:
        for e in g.successors(n):
            if e.dst not in seen:
                seen.add(e.dst)
                order.append(e.dst)
    return order


MAX_SCHEDULERS = 4096


def _schedulers(g: M.ReductionGraph):
    """Memoryless schedulers as {node: family edges}, or None when there are
    more than :data:`MAX_SCHEDULERS` of them."""
    choices = [(n, list(g.families(n).values())) for n in reachable(g) if len(g.families(n)) > 1]
    count = 1
    for _, fams in choices:
        count *= len(fams)
        if count > MAX_SCHEDULERS:
            return None
    return [dict(zip((n for n, _ in choices), pick)) for pick in itertools.product(*(f for _, f in choices))]


def event_probability(g: M.ReductionGraph, pred) -> QueryResult:
    """Exact probability of ``pred`` over complete runs of ``g``, by dynamic
    programming over (node, atoms satisfied so far).

    Where nodes offer several step families, the result is the range over
    memoryless schedulers (one family per node). When there are more than
    :data:`MAX_SCHEDULERS` of them, the bounds are taken over schedulers that
    may also look at the run so far, which can only widen the range; the
    result's ``schedulers`` field says which.
    """
    pred = _as_predicate(pred)
    _check_graph(g)
    atoms = atoms_of(pred)
    masks = {}

    def mask_of(e):
        k = id(e)
        if k not in masks:
            masks[k] = _edge_mask(e.label, atoms)
        return masks[k]

    def solve(fams_at):
        memo = {}
        # iterative post-order so deep graphs do not hit the recursion limit
        stack = [(g.root, 0, False)]
        while stack:
            n, m, ready = stack.pop()
            if (n, m) in memo:
                continue
            fams = fams_at(n)
            if not fams:
                v = Fraction(int(_mask_holds(pred, atoms, m)))
                memo[(n, m)] = (v, v)
                continue
            if not ready:
                stack.append((n, m, True))
                stack.extend((e.dst, m | mask_of(e), False) for es in fams for e in es
                             if (e.dst, m | mask_of(e)) not in memo)
                continue
            los, his = [], []
            for es in fams:
                los.append(sum((e.label.probability * memo[(e.dst, m | mask_of(e))][0] for e in es), Fraction(0)))
                his.append(sum((e.label.probability * memo[(e.dst, m | mask_of(e))][1] for e in es), Fraction(0)))
            memo[(n, m)] = (min(los), max(his))
        return memo[(g.root, 0)]

    nodes = reachable(g)
    nondet = sum(1 for n in nodes if len(g.families(n)) > 1)
    truncated = sum(1 for n in nodes if n in g.truncated)
    scheds = _schedulers(g) if nondet else [{}]
    if scheds is None:
        lo, hi = solve(lambda n: list(g.families(n).values()))
        kind = "history-dependent"
    else:
        values = [solve(lambda n, s=s: [s[n]] if n in s else list(g.families(n).values()))[0] for s in scheds]
        lo, hi = min(values), max(values)
        kind = "memoryless"
    return QueryResult(lo, hi, "Exact" if nondet == 0 else "Range", count_paths(g), nondet, truncated, kind)


def count_paths(g: M.ReductionGraph) -> int:
    """Number of complete runs (root to terminal) of an acyclic graph."""
    memo = {}
    for n in reversed(_topological(g)):
        outs = g.successors(n)
        memo[n] = 1 if not outs else sum(memo[e.dst] for e in outs)
    return memo[g.root]


def _topological(g: M.ReductionGraph) -> list:
    order, seen = [], set()
    stack = [(g.root, False)]
    while stack:
        n, done = stack.pop()
        if done:
            order.append(n)
            continue
        if n in seen:
            continue
        seen.add(n)
        stack.append((n, True))
        stack.extend((e.dst, False) for e in g.successors(n) if e.dst not in seen)
    return order[::-1]


def enumerate_paths(g: M.ReductionGraph, limit: Optional[int] = None) -> list:
    """All complete runs of an acyclic graph as (probability, [edges])."""
    return _scheduled_paths(g, {}, limit)


def brute_force_probability(g: M.ReductionGraph, pred, limit: Optional[int] = None) -> tuple:
    """Bounds of ``pred`` without memoisation: for each memoryless scheduler
    (just one when there is no nondeterminism), the sum over its explicitly
    enumerated runs. With too many schedulers, a min/max recursion over the
    tree of runs instead, matching :func:`event_probability`."""
    pred = _as_predicate(pred)
    _check_graph(g)
    scheds = _schedulers(g)
    if scheds is not None:
        totals = []
        for s in scheds:
            total = Fraction(0)
            for prob, path in _scheduled_paths(g, s, limit):
                if holds_on_run(pred, [a for e in path for a in e.label.actions]):
                    total += prob
            totals.append(total)
        return min(totals), max(totals)

    def walk(n, actions):
        fams = g.families(n)
        if not fams:
            v = Fraction(int(holds_on_run(pred, actions)))
            return v, v
        los, his = [], []
        for es in fams.values():
            lo = hi = Fraction(0)
            for e in es:
                a, b = walk(e.dst, actions + list(e.label.actions))
                lo += e.label.probability * a
                hi += e.label.probability * b
            los.append(lo)
            his.append(hi)
        return min(los), max(his)

    return walk(g.root, [])


def _scheduled_paths(g: M.ReductionGraph, sched: dict, limit: Optional[int]) -> list:
    out = []

    def walk(n, prob, path):
        outs = sched[n] if n in sched else g.successors(n)
        if not outs:
            out.append((prob, list(path)))
            if limit is not None and len(out) > limit:
                raise QueryError(f"more than {limit} paths")
            return
        for e in outs:
            path.append(e)
            walk(e.dst, prob * e.label.probability, path)
            path.pop()

    walk(g.root, Fraction(1), [])
    return out


# -- most probable class -----------------------------------------------------


@dataclass(frozen=True)
class MostProbable:
    best: str
    probability: Fraction
    ties: tuple
    classes: tuple  # ((name, probability), ...)

    def __str__(self):
        names = " = ".join(self.ties)
        return f"{names}: {self.probability} ({format_rational(self.probability)})"


def most_probable(g: M.ReductionGraph, classes) -> MostProbable:
    """The most probable of named predicates that partition the runs.

    Raises :class:`QueryError` unless the class probabilities are exact and
    sum to 1. All classes attaining the maximum are reported as ties.
    """
    classes = [(name, _as_predicate(p)) for name, p in classes]
    if not classes:
        raise QueryError("no classes given")
    probs = []
    for name, p in classes:
        r = event_probability(g, p)
        if not r.exact:
            raise QueryError(f"class {name} has a probability range, not a value")
        probs.append((name, r.value))
    total = sum(p for _, p in probs)
    if total != 1:
        raise QueryError(f"the classes do not partition the runs: probabilities sum to {total}")
    top = max(p for _, p in probs)
    ties = tuple(name for name, p in probs if p == top)
    return MostProbable(ties[0], top, ties, tuple(probs))


def product_classes(*factors) -> list:
    """Classes of a product partition: each factor is a list of (name, predicate)."""
    out = [("", None)]
    for factor in factors:
        nxt = []
        for name, p in out:
            for name2, p2 in factor:
                q = _as_predicate(p2)
                nxt.append((f"{name} & {name2}" if name else name2, q if p is None else And(p, q)))
        out = nxt
    return out


# -- Monte Carlo -------------------------------------------------------------


@dataclass
class MonteCarloResult:
    estimate: float
    stderr: float
    runs: int
    divergent: int = 0
    nondeterministic_choices: int = 0
    errors: int = 0

    def __iter__(self):
        # unpacks as (estimate, stderr)
        return iter((self.estimate, self.stderr))

    def __str__(self):
        extra = f", {self.divergent} divergent" if self.divergent else ""
        return f"{self.estimate:.4f} ± {self.stderr:.4f} ({self.runs} runs{extra})"


@dataclass
class _Explorer:
    """Lazily expanded successors of canonical processes, cached by alpha key."""

    atoms: list
    index: dict = field(default_factory=dict)
    nodes: list = field(default_factory=list)
    succ: dict = field(default_factory=dict)

    def node(self, q: A.Process) -> int:
        key = "error" if isinstance(q, A.Error) else A.alpha_key(q)
        if key not in self.index:
            self.index[key] = len(self.nodes)
            self.nodes.append(q)
        return self.index[key]

    def families(self, n: int) -> list:
        """[(cumulative float weights, [(dst, mask)])] per family."""
        if n not in self.succ:
            q = self.nodes[n]
            fams = {}
            if not isinstance(q, A.Error):
                for label, dst in M.enabled_steps(q):
                    fams.setdefault(label.family, []).append(
                        (float(label.probability), self.node(dst), _edge_mask(label, self.atoms)))
            out = []
            for es in fams.values():
                cum, acc = [], 0.0
                for w, _, _ in es:
                    acc += w
                    cum.append(acc)
                out.append((cum, [(d, m) for _, d, m in es]))
            self.succ[n] = out
        return self.succ[n]


def monte_carlo(p: A.Process, pred, runs: int, seed: int, max_steps: int = 1000) -> MonteCarloResult:
    """Estimate the probability of ``pred`` by simulating ``runs`` runs of ``p``.

    Nondeterministic choices between step families are resolved uniformly
    at random and counted. Runs longer than ``max_steps`` are reported as
    divergent and left out of the estimate.
    """
    if runs <= 0:
        raise ValueError("runs must be positive")
    pred = _as_predicate(pred)
    atoms = atoms_of(pred)
    rng = random.Random(seed)
    ex = _Explorer(atoms)
    root = ex.node(M.canonicalize(p))
    hits = done = divergent = choices = errors = 0
    verdict = {}
    for _ in range(runs):
        n, mask = root, 0
        for _step in range(max_steps):
            fams = ex.families(n)
            if not fams:
                break
            if len(fams) > 1:
                choices += 1
                cum, es = fams[rng.randrange(len(fams))]
            else:
                cum, es = fams[0]
            r = rng.random() * cum[-1]
            k = 0
            while k < len(cum) - 1 and r >= cum[k]:
                k += 1
            n, m = es[k]
            mask |= m
        else:
            if ex.families(n):
                divergent += 1
                continue
        if isinstance(ex.nodes[n], A.Error):
            errors += 1
        if mask not in verdict:
            verdict[mask] = _mask_holds(pred, atoms, mask)
        hits += verdict[mask]
        done += 1
    if done == 0:
        return MonteCarloResult(float("nan"), float("nan"), runs, divergent, choices, errors)
    est = hits / done
    return MonteCarloResult(est, math.sqrt(est * (1 - est) / done), runs, divergent, choices, errors)


__all__ = [
    "Atom", "Not", "And", "Or", "QueryError", "QueryResult", "MostProbable", "MonteCarloResult",
    "parse_predicate", "atoms_of", "evaluate", "holds_on_run", "event_probability", "brute_force_probability",
    "enumerate_paths", "count_paths", "most_probable", "product_classes", "monte_carlo", "reachable",
]
