"""Typing judgements ``Gamma |- P |> Delta`` and reduction of session environments.

The checker works bottom-up. For every session vector in scope it
synthesizes the local type each parallel component follows on that vector:
sends get point intervals (the summed probability of the branches that send
the same sorts), receives and branchings list what the process accepts.
Where a session is bound (request, accept, or a restriction with a known
reference family) the synthesized types are compared against the expected
local types: every synthesized interval must lie inside the declared one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from . import ast as A
from . import types as T
from .kernel import ONE, ZERO, interval_contains, interval_subset, point


class TypeCheckError(Exception):
    """A failed typing judgement; ``kind`` names the violated condition."""

    KINDS = ("probability-sum", "interval", "projection", "disjointness", "branch-mismatch", "unbound",
             "arity", "sort", "recursion", "delegation", "incoherent", "participants", "error-process")

    def __init__(self, kind: str, message: str, span: Optional[A.Span] = None):
        assert kind in self.KINDS, kind
        super().__init__(f"{span}: {message}" if span else message)
        self.kind = kind
        self.message = message
        self.span = span


# -- environments ------------------------------------------------------------


@dataclass
class SortEnv:
    """Gamma: sorts of value variables, global types of shared names, and
    session environments of process variables."""

    vars: dict = field(default_factory=dict)
    shared: dict = field(default_factory=dict)
    procs: dict = field(default_factory=dict)

    def protocol(self, name: str) -> Optional[T.Protocol]:
        if name in self.shared:
            return self.shared[name]
        return self.shared.get(A.base_name(name))

    def with_vars(self, binders) -> "SortEnv":
        return SortEnv({**self.vars, **dict(binders)}, self.shared, self.procs)


@dataclass(frozen=True)
class SessionEnv:
    """Delta: session vectors mapped to families of located types."""

    entries: tuple = ()

    @classmethod
    def of(cls, mapping: dict) -> "SessionEnv":
        items = []
        for vec, fam in mapping.items():
            if isinstance(fam, dict):
                fam = tuple(T.Located(t, q) for q, t in fam.items())
            items.append((tuple(vec), tuple(fam)))
        return cls(tuple(sorted(items, key=lambda kv: kv[0])))

    def as_dict(self) -> dict:
        return {vec: fam for vec, fam in self.entries}

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def vectors(self) -> tuple:
        return tuple(v for v, _ in self.entries)

    def family(self, vec) -> tuple:
        return self.as_dict().get(tuple(vec), ())

    def without_end(self) -> "SessionEnv":
        items = []
        for vec, fam in self.entries:
            fam = tuple(m for m in fam if not _is_end(m.type))
            if fam:
                items.append((vec, fam))
        return SessionEnv(tuple(items))

    def is_end_only(self) -> bool:
        return not self.without_end().entries

    def equivalent(self, other: "SessionEnv") -> bool:
        """Equal up to end-typed members and equi-recursive type equality."""
        a, b = self.without_end().as_dict(), other.without_end().as_dict()
        if set(a) != set(b):
            return False
        for vec in a:
            if not _families_equal(a[vec], b[vec]):
                return False
        return True

    def __str__(self) -> str:
        from .syntax import print_local
        if not self.entries:
            return "{}"
        parts = []
        for vec, fam in self.entries:
            members = ", ".join(
                f"{_print_type(m.type, print_local)}@{m.role if m.role is not None else '?'}" for m in fam)
            parts.append(f"({', '.join(vec)}): {{{members}}}")
        return "; ".join(parts)


def _print_type(t, printer) -> str:
    try:
        return printer(t)
    except TypeError:
        return "?"


def _families_equal(fa, fb) -> bool:
    if len(fa) != len(fb):
        return False
    used = set()
    for m in fa:
        for j, n in enumerate(fb):
            if j not in used and m.role == n.role and _types_equal(m.type, n.type):
                used.add(j)
                break
        else:
            return False
    return True


# -- holes for delegated sessions ---------------------------------------------


@dataclass(frozen=True)
class _Hole(T.LocalType):
    """Type of a session delegated away, fixed by the expected type elsewhere."""

    ident: int


def _has_hole(t) -> bool:
    if isinstance(t, _Hole):
        return True
    if isinstance(t, (T.LDeleg, T.LSessRecv)) and _has_hole(t.carried):
        return True
    return any(_has_hole(c) for c in T._lchildren(t))


def _is_end(t) -> bool:
    if isinstance(t, T.LEnd):
        return True
    if not isinstance(t, T.LRec):
        return False
    return not _has_hole(t) and T.is_end(t)


def _types_equal(a, b) -> bool:
    if _has_hole(a) or _has_hole(b):
        return a == b
    return T.types_equal(a, b)


def _join(a, b):
    if a == b:
        return a
    if _has_hole(a) or _has_hole(b):
        return None
    return T.join_types(a, b)


def _key(t):
    try:
        return T.local_key(t)
    except (TypeError, AttributeError):
        return ("raw", repr(t))


# -- expression sorts --------------------------------------------------------

_CLASS_SORT = {"num": "int", "bool": "bool", "string": "string"}


def expr_class(e: A.Expr, env: dict) -> str:
    """Sort class ('num', 'bool', 'string' or 'name') of ``e`` under ``env``."""
    if isinstance(e, A.Lit):
        return e.kind
    if isinstance(e, A.Ref):
        if e.name not in env:
            raise TypeCheckError("unbound", f"variable {e.name} is not bound")
        return A.sort_class(env[e.name])
    if isinstance(e, A.Not):
        if expr_class(e.arg, env) != "bool":
            raise TypeCheckError("sort", "'not' needs a bool operand")
        return "bool"
    if isinstance(e, A.Neg):
        if expr_class(e.arg, env) != "num":
            raise TypeCheckError("sort", "unary minus needs a number")
        return "num"
    left, right = expr_class(e.left, env), expr_class(e.right, env)
    if e.op in A.LOGIC:
        if left != "bool" or right != "bool":
            raise TypeCheckError("sort", f"'{e.op}' needs bool operands")
        return "bool"
    if e.op in ("==", "!="):
        if left != right:
            raise TypeCheckError("sort", f"'{e.op}' compares a {left} with a {right}")
        return "bool"
    if left != "num" or right != "num":
        raise TypeCheckError("sort", f"'{e.op}' needs numeric operands")
    return "bool" if e.op in A.COMPARE else "num"


# -- free channels -----------------------------------------------------------


def free_channels(p: A.Process) -> frozenset:
    """Names used freely in channel position (subjects and delegated channels)."""
    if isinstance(p, (A.Request, A.Accept)):
        return free_channels(p.body) - set(p.chans)
    if isinstance(p, A.Recv):
        out = {p.chan}
        for b in p.branches:
            out |= free_channels(b.cont) - {x for x, _ in b.binders}
        return frozenset(out)
    if isinstance(p, (A.Send, A.Select, A.Branching)):
        out = {p.chan}
        for b in p.branches:
            out |= free_channels(b.cont)
        return frozenset(out)
    if isinstance(p, A.Deleg):
        return frozenset([p.chan, *p.payload]) | free_channels(p.cont)
    if isinstance(p, A.SessRecv):
        return frozenset([p.chan]) | (free_channels(p.cont) - set(p.params))
    if isinstance(p, A.Hide):
        return free_channels(p.body) - set(p.names)
    out = frozenset()
    for c in A.children(p):
        out |= free_channels(c)
    return out


def _shared_uses(p: A.Process) -> frozenset:
    """Names used freely as shared names of requests and accepts."""
    if isinstance(p, (A.Request, A.Accept)):
        return frozenset([p.shared]) | (_shared_uses(p.body) - set(p.chans))
    if isinstance(p, A.Hide):
        return _shared_uses(p.body) - set(p.names)
    if isinstance(p, A.Recv):
        out = frozenset()
        for b in p.branches:
            out |= _shared_uses(b.cont) - {x for x, _ in b.binders}
        return out
    if isinstance(p, A.SessRecv):
        return _shared_uses(p.cont) - set(p.params)
    out = frozenset()
    for c in A.children(p):
        out |= _shared_uses(c)
    return out


# -- the checker -------------------------------------------------------------


@dataclass(frozen=True)
class Reference:
    """Expected family of a session vector: role -> local type, plus the type
    channel name of each vector position."""

    family: dict
    tchans: tuple


@dataclass
class _Vec:
    names: tuple
    tchans: tuple
    origin: str


@dataclass
class _Env:
    vars: dict
    chans: dict      # process channel -> (vector id, type channel)
    shared: dict     # shared name -> Protocol
    recs: dict       # process variable -> (type variable, vector ids)


@dataclass
class Typing:
    delta: SessionEnv
    warnings: list


# global types are immutable, so well-formedness and projections are shared
# between checker runs; entries hold the type itself so its id stays valid
_PROJECTIONS: dict = {}


def _projection(g: T.GlobalType, q: int):
    entry = _PROJECTIONS.get(id(g))
    if entry is None or entry[0] is not g:
        if len(_PROJECTIONS) > 4096:
            _PROJECTIONS.clear()
        entry = (g, T.well_formed(g), T.simplify_global(g), {})
        _PROJECTIONS[id(g)] = entry
    _, wf, simple, projs = entry
    if q not in projs and wf.ok:
        projs[q] = T.project(simple, q)
    return wf, projs.get(q)


class _Checker:
    def __init__(self, gamma: SortEnv, reference: Optional[dict] = None):
        self.gamma = gamma
        self.reference = dict(reference or {})
        self.vecs = {}
        self.holes = {}
        self.warnings = []
        self._tvars = itertools.count(1)
        self._holes = itertools.count(1)
        self._proj = {}

    # vectors

    def new_vec(self, names, tchans, origin) -> int:
        vid = len(self.vecs)
        self.vecs[vid] = _Vec(tuple(names), tuple(tchans), origin)
        return vid

    def chan(self, c: str, env: _Env, span):
        if c not in env.chans:
            raise TypeCheckError("unbound", f"channel {c} is not bound to a session", span)
        return env.chans[c]

    def expected(self, proto: T.Protocol, q: int, span):
        key = (proto.name, id(proto.gtype), q)
        if key not in self._proj:
            wf, t = _projection(proto.gtype, q)
            if not wf.ok:
                raise TypeCheckError("projection", f"global type {proto.name} is not well formed: {wf.errors[0]}",
                                     span)
            if isinstance(t, T.Undefined):
                raise TypeCheckError("projection", str(t), span)
            self._proj[key] = t
        return self._proj[key]

    # branch merging

    def single(self, d: dict, vid: int, span):
        members = d.get(vid, [])
        if len(members) > 1:
            names = ", ".join(self.vecs[vid].names)
            raise TypeCheckError("disjointness", f"session ({names}) is used by {len(members)} parallel components "
                                 "where one component is expected", span)
        return members[0] if members else T.END

    def merge(self, ds: list, skip, span, what: str) -> dict:
        """Join the environments of alternative branches (all but ``skip``)."""
        vids = set()
        for d in ds:
            vids |= set(d)
        vids.discard(skip)
        out = {}
        for vid in sorted(vids):
            ts = [self.single(d, vid, span) for d in ds]
            acc = ts[0]
            for t in ts[1:]:
                acc = _join(acc, t)
                if acc is None:
                    names = ", ".join(self.vecs[vid].names)
                    raise TypeCheckError("branch-mismatch",
                                         f"the {what} use session ({names}) differently", span)
            if not _is_end(acc):
                out[vid] = [acc]
        return out

    def put(self, d: dict, vid: int, t) -> dict:
        d = dict(d)
        if _is_end(t):
            d.pop(vid, None)
        else:
            d[vid] = [t]
        return d

    # synthesis

    def synth(self, p: A.Process, env: _Env) -> dict:
        sp = p.span
        if isinstance(p, A.Inact):
            return {}
        if isinstance(p, A.Error):
            raise TypeCheckError("error-process", "the error process has no type", sp)
        if isinstance(p, A.Par):
            left, right = self.synth(p.left, env), self.synth(p.right, env)
            out = {k: list(v) for k, v in left.items()}
            for k, v in right.items():
                out.setdefault(k, []).extend(v)
            return out
        if isinstance(p, A.Var):
            if p.name not in env.recs:
                raise TypeCheckError("unbound", f"process variable {p.name} is not bound", sp)
            tv, vids = env.recs[p.name]
            return {vid: [T.LVar(tv)] for vid in vids}
        if isinstance(p, A.Rec):
            return self.synth_rec(p, env)
        if isinstance(p, A.If):
            try:
                cls = expr_class(p.cond, env.vars)
            except TypeCheckError as e:
                raise TypeCheckError(e.kind, e.message, sp) from None
            if cls != "bool":
                raise TypeCheckError("sort", "the condition of 'if' must be a bool", sp)
            d1, d2 = self.synth(p.then, env), self.synth(p.orelse, env)
            if not self.env_equal(d1, d2):
                raise TypeCheckError("branch-mismatch", "the two branches of 'if' need the same session environment", sp)
            return d1
        if isinstance(p, A.Send):
            return self.synth_send(p, env)
        if isinstance(p, A.Recv):
            return self.synth_recv(p, env)
        if isinstance(p, A.Select):
            return self.synth_select(p, env)
        if isinstance(p, A.Branching):
            vid, tc = self.chan(p.chan, env, sp)
            ds = [self.synth(b.cont, env) for b in p.branches]
            out = self.merge(ds, vid, sp, "branches")
            t = T.LBranch(tc, tuple(T.LOfferBranch(b.label, self.single(d, vid, sp)) for b, d in zip(p.branches, ds)))
            return self.put(out, vid, t)
        if isinstance(p, A.Deleg):
            return self.synth_deleg(p, env)
        if isinstance(p, A.SessRecv):
            return self.synth_sessrecv(p, env)
        if isinstance(p, (A.Request, A.Accept)):
            return self.synth_session(p, env)
        if isinstance(p, A.Hide):
            return self.synth_hide(p, env)
        raise TypeError(f"not a process: {p!r}")

    def env_equal(self, d1: dict, d2: dict) -> bool:
        if set(d1) != set(d2):
            return False
        for vid in d1:
            fa = tuple(T.Located(t, None) for t in d1[vid])
            fb = tuple(T.Located(t, None) for t in d2[vid])
            if not _families_equal(fa, fb):
                return False
        return True

    def synth_rec(self, p: A.Rec, env: _Env) -> dict:
        if not A.guarded(p.body, p.var):
            raise TypeCheckError("recursion", f"recursion variable {p.var} is not guarded", p.span)
        vids = frozenset(env.chans[c][0] for c in free_channels(p.body) if c in env.chans)
        tv = f"t{next(self._tvars)}"
        env2 = _Env(env.vars, env.chans, env.shared, {**env.recs, p.var: (tv, vids)})
        d = self.synth(p.body, env2)
        out = {k: v for k, v in d.items() if k not in vids}
        for vid in vids:
            t = self.single(d, vid, p.span)
            if t == T.LVar(tv):
                continue
            if tv in T.local_free_vars(t):
                t = T.LRec(tv, t)
            if not _is_end(t):
                out[vid] = [t]
        return out

    def _branch_classes(self, exprs, env, span) -> tuple:
        out = []
        for e in exprs:
            try:
                cls = expr_class(e, env.vars)
            except TypeCheckError as err:
                raise TypeCheckError(err.kind, err.message, span) from None
            if cls == "name":
                raise TypeCheckError("sort", "shared names cannot be sent as values", span)
            out.append(cls)
        return tuple(out)

    def _check_sum(self, probs, span, what):
        total = sum(probs, ZERO)
        if total != ONE:
            shown = " + ".join(str(p) for p in probs)
            raise TypeCheckError("probability-sum", f"{what} probabilities sum to {total} ({shown}), not 1", span)

    def synth_send(self, p: A.Send, env: _Env) -> dict:
        sp = p.span
        vid, tc = self.chan(p.chan, env, sp)
        self._check_sum([b.prob for b in p.branches], sp, "send")
        ds, groups = [], {}
        for b in p.branches:
            cls = self._branch_classes(b.exprs, env, sp)
            d = self.synth(b.cont, env)
            ds.append(d)
            groups.setdefault(cls, []).append((b.prob, self.single(d, vid, sp)))
        out = self.merge(ds, vid, sp, "send branches")
        branches = []
        for cls, items in groups.items():
            cont = items[0][1]
            for _, t in items[1:]:
                cont = _join(cont, t)
                if cont is None:
                    raise TypeCheckError("branch-mismatch",
                                         f"send branches of sorts ({', '.join(cls)}) continue differently on {p.chan}",
                                         sp)
            prob = sum((q for q, _ in items), ZERO)
            branches.append(T.LSendBranch(point(prob), tuple(_CLASS_SORT[c] for c in cls), cont))
        return self.put(out, vid, T.LSend(tc, tuple(branches)))

    def synth_recv(self, p: A.Recv, env: _Env) -> dict:
        sp = p.span
        vid, tc = self.chan(p.chan, env, sp)
        ds = []
        for b in p.branches:
            vars2 = {**env.vars, **dict(b.binders)}
            chans2 = {c: v for c, v in env.chans.items() if c not in vars2}
            ds.append(self.synth(b.cont, _Env(vars2, chans2, env.shared, env.recs)))
        out = self.merge(ds, vid, sp, "receive branches")
        t = T.LRecv(tc, tuple(T.LRecvBranch(b.sorts, self.single(d, vid, sp)) for b, d in zip(p.branches, ds)))
        return self.put(out, vid, t)

    def synth_select(self, p: A.Select, env: _Env) -> dict:
        sp = p.span
        vid, tc = self.chan(p.chan, env, sp)
        self._check_sum([b.prob for b in p.branches], sp, "selection")
        ds = [self.synth(b.cont, env) for b in p.branches]
        out = self.merge(ds, vid, sp, "selection branches")
        t = T.LSelect(tc, tuple(T.LSelBranch(point(b.prob), b.label, self.single(d, vid, sp))
                                for b, d in zip(p.branches, ds)))
        return self.put(out, vid, t)

    def synth_deleg(self, p: A.Deleg, env: _Env) -> dict:
        sp = p.span
        vid, tc = self.chan(p.chan, env, sp)
        targets = {self.chan(c, env, sp)[0] for c in p.payload}
        if len(targets) != 1:
            raise TypeCheckError("delegation", "delegated channels must form one session", sp)
        wid = targets.pop()
        if wid == vid:
            raise TypeCheckError("delegation", "a session cannot be delegated over itself", sp)
        if tuple(self.vecs[wid].names) != tuple(p.payload):
            raise TypeCheckError("delegation", f"delegation must pass the whole session "
                                 f"({', '.join(self.vecs[wid].names)}) in order", sp)
        d = self.synth(p.cont, env)
        if d.get(wid):
            raise TypeCheckError("delegation", "a delegated session is used after the delegation", sp)
        h = _Hole(next(self._holes))
        out = self.put(d, vid, T.LDeleg(tc, h, None, self.single(d, vid, sp)))
        out[wid] = [h]
        return out

    def synth_sessrecv(self, p: A.SessRecv, env: _Env) -> dict:
        sp = p.span
        vid, tc = self.chan(p.chan, env, sp)
        placeholders = tuple(f"\x01{i}" for i in range(len(p.params)))
        wid = self.new_vec(p.params, placeholders, "received")
        chans2 = {**env.chans, **{c: (wid, ph) for c, ph in zip(p.params, placeholders)}}
        d = self.synth(p.cont, _Env(env.vars, chans2, env.shared, env.recs))
        carried = self.single(d, wid, sp)
        d.pop(wid, None)
        return self.put(d, vid, T.LSessRecv(tc, carried, None, self.single(d, vid, sp)))

    def synth_session(self, p, env: _Env) -> dict:
        sp = p.span
        proto = env.shared.get(p.shared) or self.gamma.protocol(p.shared)
        if proto is None:
            raise TypeCheckError("unbound", f"shared name {p.shared} has no global type", sp)
        parts = T.pid(proto.gtype)
        if isinstance(p, A.Request):
            role = 1
            if set(range(1, p.n + 1)) != set(parts):
                raise TypeCheckError("participants", f"request for {p.n} participants but {proto.name} has "
                                     f"participants {sorted(parts)}", sp)
        else:
            role = p.role
            if role not in parts:
                raise TypeCheckError("participants", f"role {role} is not a participant of {proto.name}", sp)
        if len(p.chans) != len(proto.channels):
            raise TypeCheckError("arity", f"{len(p.chans)} session channels given, {proto.name} uses "
                                 f"{len(proto.channels)}", sp)
        expected = self.expected(proto, role, sp)
        vid = self.new_vec(p.chans, proto.channels, "session")
        chans2 = {**env.chans, **{c: (vid, tc) for c, tc in zip(p.chans, proto.channels)}}
        d = self.synth(p.body, _Env(env.vars, chans2, env.shared, env.recs))
        t = self.single(d, vid, sp)
        d.pop(vid, None)
        self.conform(t, expected, role, sp, f"role {role} of {proto.name}")
        return d

    def synth_hide(self, p: A.Hide, env: _Env) -> dict:
        sp = p.span
        shared_used = _shared_uses(p.body) & set(p.names)
        shared = dict(env.shared)
        for n in shared_used:
            proto = self.gamma.protocol(n)
            if proto is None:
                raise TypeCheckError("unbound", f"restricted shared name {n} has no global type", sp)
            shared[n] = proto
        session = tuple(n for n in p.names if n not in shared_used)
        used = free_channels(p.body) & set(session)
        if not used:
            chans2 = {c: v for c, v in env.chans.items() if c not in p.names}
            return self.synth(p.body, _Env(env.vars, chans2, shared, env.recs))
        ref = self.reference.get(tuple(p.names)) or self.reference.get(session)
        if ref is not None:
            if len(ref.tchans) != len(session):
                raise TypeCheckError("arity", "reference family does not match the restricted vector", sp)
            tchans = ref.tchans
        else:
            bases = [A.base_name(n) for n in session]
            tchans = tuple(bases) if len(set(bases)) == len(bases) else session
        vid = self.new_vec(session, tchans, "restricted")
        chans2 = {c: v for c, v in env.chans.items() if c not in p.names}
        chans2.update({c: (vid, tc) for c, tc in zip(session, tchans)})
        d = self.synth(p.body, _Env(env.vars, chans2, shared, env.recs))
        members = d.pop(vid, [])
        if ref is not None:
            self.match_family(members, ref.family, sp, f"restricted session ({', '.join(session)})")
        else:
            self.coherent(members, sp, session)
        return d

    # matching synthesized types against expected ones

    def match_family(self, members: list, family: dict, span, what: str) -> dict:
        """Assign each member to a distinct role it conforms to; left-over roles must be end."""
        roles = sorted(family)
        last_error = [None]

        def go(i, free, assignment):
            if i == len(members):
                rest = [q for q in free if not _is_end(family[q])]
                if rest:
                    last_error[0] = TypeCheckError(
                        "projection", f"{what}: no process plays role {rest[0]}", span)
                    return None
                return dict(assignment)
            for q in sorted(free):
                saved = dict(self.holes)
                saved_w = len(self.warnings)
                try:
                    self.conform(members[i], family[q], q, span, f"{what}, role {q}")
                except TypeCheckError as e:
                    self.holes = saved
                    del self.warnings[saved_w:]
                    last_error[0] = e
                    continue
                found = go(i + 1, free - {q}, assignment + [(i, q)])
                if found is not None:
                    return found
                self.holes = saved
                del self.warnings[saved_w:]
            return None

        if len(members) > len(roles):
            raise TypeCheckError("disjointness", f"{what}: {len(members)} components for {len(roles)} roles", span)
        found = go(0, frozenset(roles), [])
        if found is None:
            raise last_error[0] or TypeCheckError("projection", f"{what}: no role assignment fits", span)
        return found

    def conform(self, s, e, role, span, what: str):
        """Synthesized ``s`` follows expected ``e`` (intervals of ``s`` inside those of ``e``)."""
        assumed = set()

        def fail(kind, msg):
            raise TypeCheckError(kind, f"{what}: {msg}", span)

        def bind(h, t, q):
            if h.ident in self.holes:
                t0, q0 = self.holes[h.ident]
                if not _types_equal(t0, t) or (q0 is not None and q is not None and q0 != q):
                    fail("delegation", "delegated session does not have the declared type")
                if q0 is None:
                    self.holes[h.ident] = (t0, q)
            else:
                self.holes[h.ident] = (t, q)

        def go(x, y):
            if isinstance(x, _Hole):
                bind(x, y, role)
                return
            x, y = T.unfold_local(x), T.unfold_local(y)
            key = (_key(x), _key(y))
            if key in assumed:
                return
            assumed.add(key)
            if isinstance(y, T.LEnd):
                if not isinstance(x, T.LEnd):
                    fail("projection", f"process continues with {_head(x)} where the protocol has ended")
                return
            if isinstance(x, T.LEnd):
                fail("projection", f"process stops where the protocol expects {_head(y)}")
            if type(x) is not type(y) or getattr(x, "chan", None) != getattr(y, "chan", None):
                if isinstance(x, T.LVar) and isinstance(y, T.LVar) and x.name == y.name:
                    return
                fail("projection", f"process does {_head(x)} where the protocol expects {_head(y)}")
            if isinstance(x, T.LSend):
                for bx in x.branches:
                    m = [by for by in y.branches if A.sorts_class(by.sorts) == A.sorts_class(bx.sorts)]
                    if not m:
                        fail("branch-mismatch", f"sends ({', '.join(bx.sorts)}) on {x.chan}, "
                             "which the protocol does not allow")
                    if not interval_subset(bx.interval, m[0].interval):
                        fail("interval", f"probability {bx.interval} of sending ({', '.join(m[0].sorts)}) "
                             f"on {x.chan} is outside {m[0].interval}")
                    go(bx.cont, m[0].cont)
                for by in y.branches:
                    if not any(A.sorts_class(bx.sorts) == A.sorts_class(by.sorts) for bx in x.branches):
                        if not interval_contains(ZERO, by.interval):
                            fail("interval", f"never sends ({', '.join(by.sorts)}) on {x.chan}, "
                                 f"but the protocol requires probability in {by.interval}")
            elif isinstance(x, T.LSelect):
                for bx in x.branches:
                    m = [by for by in y.branches if by.label == bx.label]
                    if not m:
                        fail("branch-mismatch", f"selects {bx.label} on {x.chan}, which the protocol does not offer")
                    if not interval_subset(bx.interval, m[0].interval):
                        fail("interval", f"probability {bx.interval} of selecting {bx.label} on {x.chan} "
                             f"is outside {m[0].interval}")
                    go(bx.cont, m[0].cont)
                for by in y.branches:
                    if not any(bx.label == by.label for bx in x.branches):
                        if not interval_contains(ZERO, by.interval):
                            fail("interval", f"never selects {by.label} on {x.chan}, "
                                 f"but the protocol requires probability in {by.interval}")
            elif isinstance(x, T.LRecv):
                for by in y.branches:
                    m = [bx for bx in x.branches if A.sorts_class(bx.sorts) == A.sorts_class(by.sorts)]
                    if not m:
                        fail("branch-mismatch", f"cannot receive ({', '.join(by.sorts)}) on {x.chan}")
                    go(m[0].cont, by.cont)
                for bx in x.branches:
                    if not any(A.sorts_class(bx.sorts) == A.sorts_class(by.sorts) for by in y.branches):
                        self.warnings.append(f"{span}: {what}: receive branch ({', '.join(bx.sorts)}) on "
                                             f"{x.chan} is never used")
            elif isinstance(x, T.LBranch):
                for by in y.branches:
                    m = [bx for bx in x.branches if bx.label == by.label]
                    if not m:
                        fail("branch-mismatch", f"does not offer label {by.label} on {x.chan}")
                    go(m[0].cont, by.cont)
                for bx in x.branches:
                    if not any(bx.label == by.label for by in y.branches):
                        self.warnings.append(f"{span}: {what}: offered label {bx.label} on {x.chan} is never selected")
            elif isinstance(x, T.LDeleg):
                if isinstance(x.carried, _Hole):
                    bind(x.carried, y.carried, y.role)
                elif x.role != y.role or not _types_equal(x.carried, y.carried):
                    fail("delegation", f"delegates a session of the wrong type on {x.chan}")
                go(x.cont, y.cont)
            elif isinstance(x, T.LSessRecv):
                chans = T.local_channels(y.carried)
                mapping = {f"\x01{i}": c for i, c in enumerate(chans)}
                carried = T.rename_local_channels(x.carried, mapping)
                leftover = [c for c in T.local_channels(carried) if c.startswith("\x01")]
                if leftover:
                    fail("arity", f"receives a session with more channels than {_head(y)} carries")
                self.conform(carried, y.carried, y.role, span, what + " (received session)")
                go(x.cont, y.cont)
            elif isinstance(x, T.LVar):
                if x.name != y.name:
                    fail("recursion", f"recursion variable {x.name} does not match {y.name}")
            else:
                fail("projection", f"unexpected type {x!r}")

        go(s, e)

    def coherent(self, members: list, span, names):
        """Explore the joint behaviour of a restricted session without a reference."""
        start = tuple(members)
        seen = set()
        stack = [start]
        label = f"restricted session ({', '.join(names)})"
        while stack:
            state = stack.pop()
            key = tuple(_key(t) for t in state)
            if key in seen:
                continue
            seen.add(key)
            if len(seen) > 5000:
                self.warnings.append(f"{span}: {label}: coherence exploration stopped after 5000 states")
                return
            if all(_is_end(t) for t in state):
                continue
            succ = _pair_steps(list(state), strict=True, on_error=lambda m: self._incoherent(label, m, span))
            if not succ:
                waiting = ", ".join(_head(T.unfold_local(t)) for t in state if not _is_end(t))
                raise TypeCheckError("incoherent", f"{label} can get stuck waiting on {waiting}", span)
            for _, nxt in succ:
                stack.append(tuple(nxt))

    def _incoherent(self, label, msg, span):
        raise TypeCheckError("incoherent", f"{label}: {msg}", span)


def _head(t) -> str:
    if isinstance(t, T.LSend):
        return f"a send on {t.chan}"
    if isinstance(t, T.LRecv):
        return f"a receive on {t.chan}"
    if isinstance(t, T.LSelect):
        return f"a selection on {t.chan}"
    if isinstance(t, T.LBranch):
        return f"a branching on {t.chan}"
    if isinstance(t, T.LDeleg):
        return f"a delegation on {t.chan}"
    if isinstance(t, T.LSessRecv):
        return f"a session reception on {t.chan}"
    if isinstance(t, T.LEnd):
        return "end"
    if isinstance(t, _Hole):
        return "a delegated session"
    return repr(t)


# -- reduction of session environments ---------------------------------------


def _pair_steps(members: list, strict: bool = False, on_error=None) -> list:
    """One-step reducts of a family as (interval, new members)."""
    out = []
    heads = [T.unfold_local(t) if not isinstance(t, _Hole) else t for t in members]
    for i, x in enumerate(heads):
        for j, y in enumerate(heads):
            if i == j:
                continue
            if isinstance(x, T.LSend) and isinstance(y, T.LRecv) and x.chan == y.chan:
                for bx in x.branches:
                    m = [by for by in y.branches if A.sorts_class(by.sorts) == A.sorts_class(bx.sorts)]
                    if not m:
                        if strict and on_error:
                            on_error(f"({', '.join(bx.sorts)}) sent on {x.chan} cannot be received")
                        continue
                    nxt = list(members)
                    nxt[i], nxt[j] = bx.cont, m[0].cont
                    out.append((bx.interval, nxt))
            elif isinstance(x, T.LSelect) and isinstance(y, T.LBranch) and x.chan == y.chan:
                for bx in x.branches:
                    m = [by for by in y.branches if by.label == bx.label]
                    if not m:
                        if strict and on_error:
                            on_error(f"label {bx.label} selected on {x.chan} is not offered")
                        continue
                    nxt = list(members)
                    nxt[i], nxt[j] = bx.cont, m[0].cont
                    out.append((bx.interval, nxt))
            elif isinstance(x, T.LDeleg) and isinstance(y, T.LSessRecv) and x.chan == y.chan:
                nxt = list(members)
                nxt[i], nxt[j] = x.cont, y.cont
                out.append((point(ONE), nxt))
    return out


def type_reduce(delta: SessionEnv) -> list:
    """All ``(interval, Delta')`` with ``Delta =>_interval Delta'`` in one step."""
    out = []
    entries = list(delta.entries)
    for k, (vec, fam) in enumerate(entries):
        members = [m.type for m in fam]
        for interval, nxt in _pair_steps(members):
            new_fam = tuple(T.Located(t, m.role) for t, m in zip(nxt, fam))
            new_entries = entries[:k] + [(vec, new_fam)] + entries[k + 1:]
            out.append((interval, SessionEnv(tuple(new_entries))))
    return out


# -- entry points ------------------------------------------------------------


def _role(q):
    return None if isinstance(q, int) and q < 0 else q


def typecheck_full(gamma: SortEnv, p: A.Process, expected: Optional[SessionEnv] = None,
                   reference: Optional[dict] = None) -> Typing:
    """Type ``p`` under ``gamma``.

    Free channels not covered by ``expected`` each form a one-channel session
    whose type is synthesized. ``reference`` maps restricted name vectors to
    :class:`Reference` families, used instead of the coherence check.
    """
    ch = _Checker(gamma, reference)
    chans = {}
    exp_vids = {}
    if expected is not None:
        for vec, fam in expected.entries:
            vid = ch.new_vec(vec, vec, "expected")
            exp_vids[vid] = fam
            for c in vec:
                chans[c] = (vid, c)
    for c in sorted(free_channels(p)):
        if c not in chans:
            if expected is not None:
                raise TypeCheckError("unbound", f"channel {c} is not in the expected session environment", p.span)
            chans[c] = (ch.new_vec((c,), (c,), "free"), c)
    env = _Env(dict(gamma.vars), chans, dict(gamma.shared), {})
    d = ch.synth(p, env)
    items = {}
    for vid, v in ch.vecs.items():
        if v.origin not in ("free", "expected"):
            continue
        members = d.get(vid, [])
        if vid in exp_vids:
            fam = exp_vids[vid]
            # synthesized members carry no role; key them by position instead
            family = {(m.role if m.role is not None else -(i + 1)): m.type for i, m in enumerate(fam)}
            if len(family) != len(fam):
                raise TypeCheckError("disjointness", f"expected family of ({', '.join(v.names)}) repeats a role")
            assignment = ch.match_family(members, family, p.span, f"session ({', '.join(v.names)})")
            roles = dict(assignment)
            located = [T.Located(members[i], _role(roles[i])) for i in range(len(members))]
            assigned = set(roles.values())
            located += [T.Located(t, _role(q)) for q, t in family.items() if q not in assigned]
            items[v.names] = tuple(located)
        elif members:
            items[v.names] = tuple(T.Located(t, None) for t in members)
    return Typing(SessionEnv.of(items), list(ch.warnings))


def typecheck(gamma: SortEnv, p: A.Process, expected: Optional[SessionEnv] = None,
              reference: Optional[dict] = None) -> SessionEnv:
    """``Delta`` with ``gamma |- p |> Delta``; raises :class:`TypeCheckError`."""
    return typecheck_full(gamma, p, expected, reference).delta


def is_typable(gamma: SortEnv, p: A.Process, **kw) -> bool:
    try:
        typecheck(gamma, p, **kw)
        return True
    except TypeCheckError:
        return False


def session_reference(proto: T.Protocol, chans=None) -> Reference:
    """Reference family of a freshly linked session of ``proto``."""
    g = T.simplify_global(proto.gtype)
    family = {}
    for q in sorted(T.pid(proto.gtype)):
        t = T.project(g, q)
        if isinstance(t, T.Undefined):
            raise TypeCheckError("projection", str(t))
        family[q] = t
    return Reference(family, tuple(proto.channels))


__all__ = [
    "TypeCheckError", "SortEnv", "SessionEnv", "Reference", "Typing", "expr_class", "free_channels",
    "typecheck", "typecheck_full", "is_typable", "type_reduce", "session_reference",
]
