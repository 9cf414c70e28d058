"""Structural equivalence, probabilistic reduction and reduction graphs.

A process is put in canonical form before stepping: all hidings that can be
extruded sit on top, followed by a flat parallel composition of non-parallel
components. Redexes are found among those components; a step fires a maximal
set of pairwise independent redexes at once (each redex contributes one of
its probabilistic branches), which is how the parallel rules read on a flat
composition: a component that can move may not stay idle next to another one
that moves.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import ast as A
from .kernel import ONE, format_fraction

# -- canonical forms ---------------------------------------------------------


def _branch_key(p: A.Process, b) -> tuple:
    return A.alpha_key(type(p)(p.chan, (b,)))


def _canon_inner(p: A.Process) -> A.Process:
    """Canonicalize inside prefixes (continuations are canonicalized independently)."""
    if isinstance(p, (A.Send, A.Recv, A.Select, A.Branching)):
        q = A.map_children(p, canonicalize)
        if isinstance(q, A.Branching):
            branches = sorted(q.branches, key=lambda b: b.label)
        else:
            branches = sorted(q.branches, key=lambda b: _branch_key(q, b))
        return A.with_branches(q, branches)
    if isinstance(p, (A.Request, A.Accept, A.Deleg, A.SessRecv, A.If)):
        return A.map_children(p, canonicalize)
    if isinstance(p, A.Rec):
        return A.Rec(p.var, canonicalize(p.body), span=p.span)
    return p


def _flatten(p: A.Process, avoid: set, hides: list, comps: list):
    """Collect extrudable hidings as (original vector, renamed vector) pairs."""
    if isinstance(p, A.Par):
        _flatten(p.left, avoid, hides, comps)
        _flatten(p.right, avoid, hides, comps)
        return
    if isinstance(p, A.Inact):
        return
    if isinstance(p, A.Hide):
        mapping = {}
        for n in p.names:
            if n in avoid:
                nn = A.fresh_name(n, avoid | set(p.names))
                mapping[n] = nn
                avoid.add(nn)
            else:
                avoid.add(n)
        body = A.rename(p.body, mapping) if mapping else p.body
        hides.append((p.names, tuple(mapping.get(n, n) for n in p.names)))
        _flatten(body, avoid, hides, comps)
        return
    q = _canon_inner(p)
    if isinstance(q, A.Rec) and isinstance(q.body, A.Inact):
        return
    comps.append(q)


def _all_names(p: A.Process) -> set:
    """Every identifier occurring in ``p``, bound or free."""
    out = set(A.free_names(p))
    for q in A.subterms(p):
        if isinstance(q, (A.Request, A.Accept)):
            out.update(q.chans)
        elif isinstance(q, A.Hide):
            out.update(q.names)
        elif isinstance(q, A.SessRecv):
            out.update(q.params)
        elif isinstance(q, A.Recv):
            for b in q.branches:
                out.update(x for x, _ in b.binders)
    return out


def _first_occurrence(comps, names) -> list:
    order = []
    for c in comps:
        for x in _occurrences(c):
            if x in names and x not in order:
                order.append(x)
    return order


def _occurrences(p: A.Process):
    """Free identifiers of ``p`` in a deterministic traversal order."""
    key = A.alpha_key(p)
    stack = [key]
    while stack:
        k = stack.pop()
        if isinstance(k, tuple):
            if len(k) == 2 and k[0] == "f" and isinstance(k[1], str):
                yield k[1]
                continue
            stack.extend(reversed(k))


def canonicalize(p: A.Process) -> A.Process:
    """Normal form for structural equivalence."""
    if isinstance(p, A.Error):
        return p
    return canonicalize_with_map(p)[0]


def canonicalize_with_map(p: A.Process):
    """Canonical form plus, for each top-level hiding of ``p`` in traversal
    order, the pair (its name vector, the vector it became or None if dropped)."""
    if isinstance(p, A.Error):
        return p, []
    free = set(A.free_names(p))
    hides, comps = [], []
    _flatten(p, set(free), hides, comps)
    used = set()
    for c in comps:
        used |= A.free_names(c)
    kept = [[orig, cur] for orig, cur in hides if any(n in used for n in cur)]
    dropped = [(orig, None) for orig, cur in hides if not any(n in used for n in cur)]
    # two passes: sort with hidden names masked, rename, then re-sort fully
    for _ in range(2):
        hidden = frozenset(n for _, cur in kept for n in cur)
        comps = sorted(comps, key=lambda c: (A.alpha_key(c, masked=hidden), A.alpha_key(c)))
        rank = {n: i for i, n in enumerate(_first_occurrence(comps, hidden))}
        kept.sort(key=lambda h: min(rank.get(n, len(rank)) for n in h[1]))
        counters, taken, step = {}, set(free), {}
        for _, cur in kept:
            for n in cur:
                base = A.base_name(n)
                j = counters.get(base, 0) + 1
                while f"{base}#{j}" in taken:
                    j += 1
                counters[base] = j
                step[n] = f"{base}#{j}"
                taken.add(step[n])
        tmp = {n: f"\x00{i}" for i, n in enumerate(step)}
        back = {tmp[n]: step[n] for n in step}
        comps = [A.rename(A.rename(c, tmp), back) for c in comps]
        for h in kept:
            h[1] = tuple(step[n] for n in h[1])
    out = A.par(*comps)
    for _, cur in reversed(kept):
        out = A.Hide(cur, out)
    return out, [(o, c) for o, c in kept] + dropped


def struct_equiv(p: A.Process, q: A.Process) -> bool:
    return A.alpha_key(canonicalize(p)) == A.alpha_key(canonicalize(q))


def split_canonical(p: A.Process):
    """(hide vectors, components) of a canonical process."""
    hides = []
    while isinstance(p, A.Hide):
        hides.append(p.names)
        p = p.body
    comps = [] if isinstance(p, A.Inact) else A.par_components(p)
    return hides, comps


# -- steps -------------------------------------------------------------------

RULES = ("Link", "Com", "Deleg", "Label", "IfT", "IfF", "Call", "Scope", "Par1", "Par2", "Struct", "ECom", "ELabel")


@dataclass(frozen=True)
class Action:
    """One fired redex inside a step."""

    rule: str
    probability: Fraction
    channel: Optional[str] = None
    branch: Optional[int] = None
    text: Optional[str] = None
    values: tuple = ()
    label: Optional[str] = None
    group_probability: Optional[Fraction] = None
    shared: Optional[str] = None
    new_names: tuple = ()

    @property
    def base_channel(self) -> Optional[str]:
        return A.base_name(self.channel) if self.channel else None

    @property
    def sorts(self) -> tuple:
        return tuple(A.value_sort(v) for v in self.values)


@dataclass(frozen=True)
class StepLabel:
    rule: str
    probability: Fraction
    actions: tuple
    family: int
    via: tuple = ()

    def __str__(self):
        return f"{self.rule} p={format_fraction(self.probability)}"


@dataclass(frozen=True)
class _Redex:
    comps: frozenset
    options: tuple  # ((prob, {index: new component}, [new hide vectors], Action), ...)


def _eval_all(exprs):
    return tuple(A.eval_expr(e) for e in exprs)


def _kinds(values) -> tuple:
    return tuple(A.value_kind(v) for v in values)


def _link_redexes(comps, avoid) -> list:
    out = []
    for i, r in enumerate(comps):
        if not isinstance(r, A.Request):
            continue
        k = len(r.chans)
        candidates = []
        for q in range(2, r.n + 1):
            cs = [j for j, c in enumerate(comps)
                  if isinstance(c, A.Accept) and c.shared == r.shared and c.role == q and len(c.chans) == k]
            candidates.append(cs)
        if any(not cs for cs in candidates):
            continue
        for choice in itertools.product(*candidates):
            taken = set(avoid)
            fresh = []
            for s in r.chans:
                n = A.fresh_name(s, taken)
                taken.add(n)
                fresh.append(n)
            fresh = tuple(fresh)
            new = {i: A.rename(r.body, dict(zip(r.chans, fresh)))}
            for j in choice:
                new[j] = A.rename(comps[j].body, dict(zip(comps[j].chans, fresh)))
            action = _link_action(r.shared, fresh)
            out.append(_Redex(frozenset((i,) + tuple(choice)), ((ONE, new, [fresh], action),)))
    return out


def _link_action(shared, fresh) -> Action:
    return Action("Link", ONE, shared=shared, new_names=fresh)


def _com_redexes(comps):
    out, errors = [], []
    for i, s in enumerate(comps):
        if not isinstance(s, A.Send):
            continue
        try:
            evaluated = [_eval_all(b.exprs) for b in s.branches]
        except A.EvalError:
            continue
        total = sum((b.prob for b in s.branches), Fraction(0))
        for j, r in enumerate(comps):
            if j == i or not isinstance(r, A.Recv) or r.chan != s.chan:
                continue
            if total != 1:
                errors.append(_Redex(frozenset((i, j)), ((ONE, None, [], Action("ECom", ONE, channel=s.chan)),)))
            options = []
            for bi, (b, vals) in enumerate(zip(s.branches, evaluated)):
                kinds = _kinds(vals)
                match = [rb for rb in r.branches if A.sorts_class(rb.sorts) == kinds]
                if not match:
                    continue
                rb = match[0]
                group = sum((b2.prob for b2, v2 in zip(s.branches, evaluated) if _kinds(v2) == kinds), Fraction(0))
                cont = A.subst_values(rb.cont, {x: v for (x, _), v in zip(rb.binders, vals)})
                action = Action("Com", b.prob, channel=s.chan, branch=bi, text=b.text, values=vals,
                                group_probability=group)
                options.append((b.prob, {i: b.cont, j: cont}, [], action))
            if options:
                out.append(_Redex(frozenset((i, j)), tuple(options)))
    return out, errors


def _label_redexes(comps):
    out, errors = [], []
    for i, s in enumerate(comps):
        if not isinstance(s, A.Select):
            continue
        total = sum((b.prob for b in s.branches), Fraction(0))
        for j, r in enumerate(comps):
            if j == i or not isinstance(r, A.Branching) or r.chan != s.chan:
                continue
            if total != 1:
                errors.append(_Redex(frozenset((i, j)), ((ONE, None, [], Action("ELabel", ONE, channel=s.chan)),)))
            offered = {b.label: b.cont for b in r.branches}
            options = []
            for bi, b in enumerate(s.branches):
                if b.label not in offered:
                    continue
                action = Action("Label", b.prob, channel=s.chan, branch=bi, text=b.label, label=b.label,
                                group_probability=b.prob)
                options.append((b.prob, {i: b.cont, j: offered[b.label]}, [], action))
            if options:
                out.append(_Redex(frozenset((i, j)), tuple(options)))
    return out, errors


def _deleg_redexes(comps):
    out = []
    for i, s in enumerate(comps):
        if not isinstance(s, A.Deleg):
            continue
        for j, r in enumerate(comps):
            if j == i or not isinstance(r, A.SessRecv) or r.chan != s.chan or len(r.params) != len(s.payload):
                continue
            cont = A.rename(r.cont, dict(zip(r.params, s.payload)))
            action = Action("Deleg", ONE, channel=s.chan, values=tuple(A.Name(n) for n in s.payload))
            out.append(_Redex(frozenset((i, j)), ((ONE, {i: s.cont, j: cont}, [], action),)))
    return out


def _local_redexes(comps):
    out = []
    for i, c in enumerate(comps):
        if isinstance(c, A.If):
            try:
                v = A.eval_expr(c.cond)
            except A.EvalError:
                continue
            if not isinstance(v, bool):
                continue
            rule = "IfT" if v else "IfF"
            out.append(_Redex(frozenset((i,)), ((ONE, {i: c.then if v else c.orelse}, [], Action(rule, ONE)),)))
        elif isinstance(c, A.Rec):
            out.append(_Redex(frozenset((i,)), ((ONE, {i: A.unfold(c)}, [], Action("Call", ONE)),)))
    return out


def _maximal_independent(redexes) -> list:
    """All maximal sets of pairwise disjoint redexes, in a deterministic order."""
    n = len(redexes)
    compatible = [set(j for j in range(n) if j != i and not (redexes[i].comps & redexes[j].comps))
                  for i in range(n)]
    found = []

    def bk(r, p, x):
        if not p and not x:
            found.append(tuple(sorted(r)))
            return
        pivot = max(p | x, key=lambda u: len(compatible[u] & p))
        for v in sorted(p - compatible[pivot]):
            bk(r | {v}, p & compatible[v], x & compatible[v])
            p = p - {v}
            x = x | {v}

    if n:
        bk(set(), set(range(n)), set())
    return sorted(found)


def _redexes(hides, comps):
    avoid = set()
    for c in comps:
        avoid |= _all_names(c)
    for h in hides:
        avoid.update(h)
    link = _link_redexes(comps, avoid)
    com, ecom = _com_redexes(comps)
    lab, elab = _label_redexes(comps)
    return link + com + _deleg_redexes(comps) + lab + _local_redexes(comps), ecom + elab


def raw_steps(p: A.Process) -> list:
    """Steps of a canonical process as (label, successor before canonicalization)."""
    if isinstance(p, A.Error):
        return []
    hides, comps = split_canonical(p)
    redexes, errors = _redexes(hides, comps)
    steps = []
    family = 0
    for chosen in _maximal_independent(redexes):
        involved = set()
        for k in chosen:
            involved |= redexes[k].comps
        idle = len(comps) > len(involved)
        for combo in itertools.product(*(redexes[k].options for k in chosen)):
            prob = ONE
            new = dict()
            new_hides = []
            actions = []
            for opt_prob, repl, vecs, action in combo:
                prob *= opt_prob
                new.update(repl)
                new_hides.extend(vecs)
                actions.append(action)
            succ_comps = [new.get(i, c) for i, c in enumerate(comps)]
            succ = A.par(*succ_comps)
            for h in reversed(list(hides) + new_hides):
                succ = A.Hide(h, succ)
            rule = actions[0].rule if len(actions) == 1 else "Par2"
            via = tuple(v for v, on in (("Par1", idle), ("Scope", bool(hides))) if on)
            steps.append((StepLabel(rule, prob, tuple(actions), family, via), succ))
        family += 1
    for e in errors:
        action = e.options[0][3]
        via = tuple(v for v, on in (("Par1", len(comps) > 2), ("Scope", bool(hides))) if on)
        steps.append((StepLabel(action.rule, ONE, (action,), family, via), A.ERROR))
        family += 1
    return steps


def enabled_steps(p: A.Process) -> list:
    """All one-step reducts of ``p`` as (label, canonical successor)."""
    p = canonicalize(p)
    return [(label, canonicalize(q)) for label, q in raw_steps(p)]


def is_stuck(p: A.Process) -> bool:
    return not enabled_steps(p)


# -- reduction graphs --------------------------------------------------------


@dataclass(frozen=True)
class Edge:
    src: int
    label: StepLabel
    dst: int


@dataclass
class ReductionGraph:
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    out: dict = field(default_factory=dict)
    depth: dict = field(default_factory=dict)
    truncated: set = field(default_factory=set)
    root: int = 0
    max_depth: int = 0
    error: Optional[int] = None
    unrolled: bool = False

    def successors(self, n: int) -> list:
        return [self.edges[k] for k in self.out.get(n, [])]

    def is_terminal(self, n: int) -> bool:
        return not self.out.get(n)

    def families(self, n: int) -> dict:
        fams = {}
        for e in self.successors(n):
            fams.setdefault(e.label.family, []).append(e)
        return fams

    def has_error(self) -> bool:
        return self.error is not None

    def error_edges(self) -> list:
        return [e for e in self.edges if e.label.rule in ("ECom", "ELabel")]

    def is_acyclic(self) -> bool:
        indeg = {n: 0 for n in range(len(self.nodes))}
        for e in self.edges:
            indeg[e.dst] += 1
        queue = deque(n for n, d in indeg.items() if d == 0)
        seen = 0
        while queue:
            n = queue.popleft()
            seen += 1
            for e in self.successors(n):
                indeg[e.dst] -= 1
                if indeg[e.dst] == 0:
                    queue.append(e.dst)
        return seen == len(self.nodes)


def build_graph(p: A.Process, max_depth: int, unroll: bool = False) -> ReductionGraph:
    """Breadth-first exploration of canonical successors up to ``max_depth`` steps.

    With ``unroll`` the node identity includes the depth, so the graph is a
    DAG even for recursive processes.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be non-negative")
    g = ReductionGraph(max_depth=max_depth, unrolled=unroll)
    index = {}

    def node(q, d):
        if isinstance(q, A.Error):
            if g.error is None:
                g.error = len(g.nodes)
                g.nodes.append(q)
                g.depth[g.error] = d
            return g.error, False
        key = (A.alpha_key(q), d) if unroll else A.alpha_key(q)
        if key in index:
            return index[key], False
        n = len(g.nodes)
        index[key] = n
        g.nodes.append(q)
        g.depth[n] = d
        return n, True

    root, _ = node(canonicalize(p), 0)
    g.root = root
    queue = deque([root])
    while queue:
        n = queue.popleft()
        q = g.nodes[n]
        if isinstance(q, A.Error):
            continue
        steps = enabled_steps(q)
        if not steps:
            continue
        d = g.depth[n]
        if d >= max_depth:
            g.truncated.add(n)
            continue
        for label, succ in steps:
            m, fresh = node(succ, d + 1)
            g.out.setdefault(n, []).append(len(g.edges))
            g.edges.append(Edge(n, label, m))
            if fresh:
                queue.append(m)
    return g


def to_dot(g: ReductionGraph, full_text: bool = False, role_names: Optional[dict] = None) -> str:
    from .syntax import print_process
    lines = ["digraph reductions {", "  node [shape=box, fontname=monospace];"]
    for n, q in enumerate(g.nodes):
        text = print_process(q, role_names)
        short = f"#{n} {abs(hash(A.alpha_key(q))) % 10 ** 8:08d}"
        label = f"{short}\\n{_dot_escape(text)}" if full_text else short
        attrs = [f'label="{label}"']
        if n == g.root:
            attrs.append("penwidth=2")
        if isinstance(q, A.Error):
            attrs.append("color=red")
        if n in g.truncated:
            attrs.append("style=dashed")
        lines.append(f"  n{n} [{', '.join(attrs)}];")
    for e in g.edges:
        lines.append(f'  n{e.src} -> n{e.dst} [label="{e.label.rule} p={format_fraction(e.label.probability)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')
