"""Global and local types, projection, branch merging and well-formedness."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .ast import Span, sort_class, sorts_class
from .kernel import ProbInterval, feasible_sum, interval_add, interval_contains, interval_hull, point  # noqa: F401


# -- global types ------------------------------------------------------------


@dataclass(frozen=True)
class GlobalType:
    span: Optional[Span] = field(default=None, compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class GMsgBranch:
    interval: ProbInterval
    sorts: tuple
    cont: GlobalType


@dataclass(frozen=True)
class GMsg(GlobalType):
    """Probabilistic value exchange ``q ->δ q' : k<S>. G`` summed over branches."""

    sender: int
    receiver: int
    chan: str
    branches: tuple


@dataclass(frozen=True)
class GDeleg(GlobalType):
    sender: int
    receiver: int
    chan: str
    carried: "LocalType"
    role: int
    cont: GlobalType


@dataclass(frozen=True)
class GLabelBranch:
    interval: ProbInterval
    label: str
    cont: GlobalType


@dataclass(frozen=True)
class GBranch(GlobalType):
    sender: int
    receiver: int
    chan: str
    branches: tuple


@dataclass(frozen=True)
class GPar(GlobalType):
    left: GlobalType
    right: GlobalType


@dataclass(frozen=True)
class GRec(GlobalType):
    var: str
    body: GlobalType


@dataclass(frozen=True)
class GVar(GlobalType):
    name: str


@dataclass(frozen=True)
class GEnd(GlobalType):
    pass


# -- local types -------------------------------------------------------------


@dataclass(frozen=True)
class LocalType:
    pass


@dataclass(frozen=True)
class LSendBranch:
    interval: ProbInterval
    sorts: tuple
    cont: LocalType


@dataclass(frozen=True)
class LSend(LocalType):
    chan: str
    branches: tuple


@dataclass(frozen=True)
class LRecvBranch:
    sorts: tuple
    cont: LocalType


@dataclass(frozen=True)
class LRecv(LocalType):
    chan: str
    branches: tuple


@dataclass(frozen=True)
class LDeleg(LocalType):
    chan: str
    carried: LocalType
    role: int
    cont: LocalType


@dataclass(frozen=True)
class LSessRecv(LocalType):
    chan: str
    carried: LocalType
    role: int
    cont: LocalType


@dataclass(frozen=True)
class LSelBranch:
    interval: ProbInterval
    label: str
    cont: LocalType


@dataclass(frozen=True)
class LSelect(LocalType):
    chan: str
    branches: tuple


@dataclass(frozen=True)
class LOfferBranch:
    label: str
    cont: LocalType


@dataclass(frozen=True)
class LBranch(LocalType):
    chan: str
    branches: tuple


@dataclass(frozen=True)
class LRec(LocalType):
    var: str
    body: LocalType


@dataclass(frozen=True)
class LVar(LocalType):
    name: str


@dataclass(frozen=True)
class LEnd(LocalType):
    pass


END = LEnd()
GEND = GEnd()


@dataclass(frozen=True)
class Located:
    """``T@q``; ``role`` is None when the role is not known (synthesized)."""

    type: LocalType
    role: Optional[int]


@dataclass(frozen=True)
class Protocol:
    """A named global type with the order of its session channels."""

    name: str
    gtype: GlobalType
    channels: tuple

    @property
    def participants(self) -> frozenset:
        return pid(self.gtype)


@dataclass(frozen=True)
class Undefined:
    """Failed projection: which clause failed and where."""

    reason: str
    path: tuple = ()
    span: Optional[Span] = None

    def __str__(self):
        where = f" at {self.span}" if self.span else ""
        trail = " / ".join(self.path)
        return f"projection undefined{where}: {self.reason}" + (f" (in {trail})" if trail else "")


# -- basic queries -----------------------------------------------------------


def _gchildren(g: GlobalType) -> list:
    if isinstance(g, (GMsg, GBranch)):
        return [b.cont for b in g.branches]
    if isinstance(g, GDeleg):
        return [g.cont]
    if isinstance(g, GPar):
        return [g.left, g.right]
    if isinstance(g, GRec):
        return [g.body]
    return []


def pid(g: GlobalType) -> frozenset:
    """Participants occurring in ``g``."""
    out = set()
    stack = [g]
    while stack:
        h = stack.pop()
        if isinstance(h, (GMsg, GBranch, GDeleg)):
            out.update((h.sender, h.receiver))
        stack.extend(_gchildren(h))
    return frozenset(out)


def channels(g: GlobalType) -> tuple:
    """Session channels of ``g`` in order of first occurrence."""
    seen = []

    def walk(h):
        if isinstance(h, (GMsg, GBranch, GDeleg)) and h.chan not in seen:
            seen.append(h.chan)
        for c in _gchildren(h):
            walk(c)

    walk(g)
    return tuple(seen)


def sid(g: GlobalType) -> int:
    return len(channels(g))


def local_channels(t: LocalType) -> tuple:
    seen = []

    def walk(u):
        if isinstance(u, (LSend, LRecv, LDeleg, LSessRecv, LSelect, LBranch)) and u.chan not in seen:
            seen.append(u.chan)
        for c in _lchildren(u):
            walk(c)

    walk(t)
    return tuple(seen)


def _lchildren(t: LocalType) -> list:
    if isinstance(t, (LSend, LRecv, LSelect, LBranch)):
        return [b.cont for b in t.branches]
    if isinstance(t, (LDeleg, LSessRecv)):
        return [t.cont]
    if isinstance(t, LRec):
        return [t.body]
    return []


# -- alpha keys, substitution, unfolding -------------------------------------


def _ikey(d: ProbInterval) -> tuple:
    return (d.lo, d.hi, d.lo_closed, d.hi_closed)


def _level(env: dict) -> int:
    return max(env.values(), default=-1) + 1


def local_key(t: LocalType, env: Optional[dict] = None, by_class: bool = False) -> tuple:
    """Key equal exactly for types equal up to renaming of type variables."""
    env = env or {}
    sk = sorts_class if by_class else tuple
    if isinstance(t, LEnd):
        return ("end",)
    if isinstance(t, LVar):
        return ("t", env[t.name]) if t.name in env else ("tf", t.name)
    if isinstance(t, LRec):
        env2 = dict(env)
        env2[t.var] = _level(env)
        return ("mu", local_key(t.body, env2, by_class))
    if isinstance(t, LSend):
        return ("send", t.chan, tuple((_ikey(b.interval), sk(b.sorts), local_key(b.cont, env, by_class))
                                      for b in t.branches))
    if isinstance(t, LRecv):
        return ("recv", t.chan, tuple((sk(b.sorts), local_key(b.cont, env, by_class)) for b in t.branches))
    if isinstance(t, (LDeleg, LSessRecv)):
        return (type(t).__name__, t.chan, local_key(t.carried, {}, by_class), t.role,
                local_key(t.cont, env, by_class))
    if isinstance(t, LSelect):
        return ("sel", t.chan, tuple((_ikey(b.interval), b.label, local_key(b.cont, env, by_class))
                                     for b in t.branches))
    if isinstance(t, LBranch):
        return ("bra", t.chan, tuple((b.label, local_key(b.cont, env, by_class)) for b in t.branches))
    raise TypeError(f"not a local type: {t!r}")


def global_key(g: GlobalType, env: Optional[dict] = None) -> tuple:
    env = env or {}
    if isinstance(g, GEnd):
        return ("end",)
    if isinstance(g, GVar):
        return ("t", env[g.name]) if g.name in env else ("tf", g.name)
    if isinstance(g, GRec):
        env2 = dict(env)
        env2[g.var] = _level(env)
        return ("mu", global_key(g.body, env2))
    if isinstance(g, GMsg):
        return ("msg", g.sender, g.receiver, g.chan,
                tuple((_ikey(b.interval), tuple(b.sorts), global_key(b.cont, env)) for b in g.branches))
    if isinstance(g, GBranch):
        return ("bra", g.sender, g.receiver, g.chan,
                tuple((_ikey(b.interval), b.label, global_key(b.cont, env)) for b in g.branches))
    if isinstance(g, GDeleg):
        return ("deleg", g.sender, g.receiver, g.chan, local_key(g.carried), g.role, global_key(g.cont, env))
    if isinstance(g, GPar):
        return ("par", global_key(g.left, env), global_key(g.right, env))
    raise TypeError(f"not a global type: {g!r}")


def local_alpha_equal(a: LocalType, b: LocalType) -> bool:
    return local_key(a) == local_key(b)


def global_alpha_equal(a: GlobalType, b: GlobalType) -> bool:
    return global_key(a) == global_key(b)


def local_free_vars(t: LocalType) -> frozenset:
    if isinstance(t, LVar):
        return frozenset([t.name])
    if isinstance(t, LRec):
        return local_free_vars(t.body) - {t.var}
    out = frozenset()
    for c in _lchildren(t):
        out |= local_free_vars(c)
    return out


def _map_local(t: LocalType, f) -> LocalType:
    """Rebuild ``t`` applying ``f`` to each immediate continuation."""
    if isinstance(t, LSend):
        return LSend(t.chan, tuple(LSendBranch(b.interval, b.sorts, f(b.cont)) for b in t.branches))
    if isinstance(t, LRecv):
        return LRecv(t.chan, tuple(LRecvBranch(b.sorts, f(b.cont)) for b in t.branches))
    if isinstance(t, LSelect):
        return LSelect(t.chan, tuple(LSelBranch(b.interval, b.label, f(b.cont)) for b in t.branches))
    if isinstance(t, LBranch):
        return LBranch(t.chan, tuple(LOfferBranch(b.label, f(b.cont)) for b in t.branches))
    if isinstance(t, LDeleg):
        return LDeleg(t.chan, t.carried, t.role, f(t.cont))
    if isinstance(t, LSessRecv):
        return LSessRecv(t.chan, t.carried, t.role, f(t.cont))
    if isinstance(t, LRec):
        return LRec(t.var, f(t.body))
    return t


def local_subst(t: LocalType, var: str, u: LocalType) -> LocalType:
    """``t{u/var}``, renaming inner binders that would capture free variables of ``u``."""
    if isinstance(t, LVar):
        return u if t.name == var else t
    if isinstance(t, LRec):
        if t.var == var:
            return t
        if t.var in local_free_vars(u):
            avoid = local_free_vars(u) | local_free_vars(t.body) | {var}
            i = 1
            while f"{t.var}{i}" in avoid:
                i += 1
            nv = f"{t.var}{i}"
            body = local_subst(t.body, t.var, LVar(nv))
            return LRec(nv, local_subst(body, var, u))
        return LRec(t.var, local_subst(t.body, var, u))
    return _map_local(t, lambda c: local_subst(c, var, u))


def unfold_local(t: LocalType) -> LocalType:
    """Unfold top-level recursion until a prefix, a variable or ``end`` is exposed."""
    seen = 0
    while isinstance(t, LRec):
        t = local_subst(t.body, t.var, t)
        seen += 1
        if seen > 64:
            break
    return t


def rename_local_channels(t: LocalType, mapping: dict) -> LocalType:
    if not mapping:
        return t
    t2 = _map_local(t, lambda c: rename_local_channels(c, mapping))
    if hasattr(t2, "chan"):
        return replace(t2, chan=mapping.get(t2.chan, t2.chan))
    return t2


def is_end(t: LocalType) -> bool:
    u = unfold_local(t)
    return isinstance(u, LEnd)


def types_equal(a: LocalType, b: LocalType, by_class: bool = True) -> bool:
    """Equi-recursive equality: equal infinite unfoldings (sorts compared by class)."""
    assumed = set()

    def eq(x, y) -> bool:
        x, y = unfold_local(x), unfold_local(y)
        key = (local_key(x, by_class=by_class), local_key(y, by_class=by_class))
        if key[0] == key[1] or key in assumed:
            return True
        assumed.add(key)
        if type(x) is not type(y):
            return False
        if isinstance(x, LEnd):
            return True
        if isinstance(x, LVar):
            return x.name == y.name
        if x.chan != y.chan:
            return False
        if isinstance(x, (LDeleg, LSessRecv)):
            return x.role == y.role and eq(x.carried, y.carried) and eq(x.cont, y.cont)
        if len(x.branches) != len(y.branches):
            return False
        sk = sorts_class if by_class else tuple
        for bx in x.branches:
            if isinstance(x, LSend):
                m = [by for by in y.branches if sk(by.sorts) == sk(bx.sorts) and by.interval == bx.interval]
            elif isinstance(x, LRecv):
                m = [by for by in y.branches if sk(by.sorts) == sk(bx.sorts)]
            elif isinstance(x, LSelect):
                m = [by for by in y.branches if by.label == bx.label and by.interval == bx.interval]
            else:
                m = [by for by in y.branches if by.label == bx.label]
            if len(m) != 1 or not eq(bx.cont, m[0].cont):
                return False
        return True

    return eq(a, b)


def join_types(a: LocalType, b: LocalType) -> Optional[LocalType]:
    """Same shape as ``a`` and ``b`` with each interval the hull of both; None if shapes differ."""
    if type(a) is not type(b):
        return None
    if isinstance(a, LEnd):
        return a
    if isinstance(a, LVar):
        return a if a.name == b.name else None
    if isinstance(a, LRec):
        if a.var != b.var:
            b = LRec(a.var, local_subst(b.body, b.var, LVar(a.var)))
        body = join_types(a.body, b.body)
        return None if body is None else LRec(a.var, body)
    if a.chan != b.chan:
        return None
    if isinstance(a, (LDeleg, LSessRecv)):
        if a.role != b.role or not types_equal(a.carried, b.carried):
            return None
        cont = join_types(a.cont, b.cont)
        return None if cont is None else type(a)(a.chan, a.carried, a.role, cont)
    if len(a.branches) != len(b.branches):
        return None
    out = []
    for ba in a.branches:
        if isinstance(a, (LSend, LRecv)):
            m = [bb for bb in b.branches if sorts_class(bb.sorts) == sorts_class(ba.sorts)]
        else:
            m = [bb for bb in b.branches if bb.label == ba.label]
        if len(m) != 1:
            return None
        cont = join_types(ba.cont, m[0].cont)
        if cont is None:
            return None
        if isinstance(a, LSend):
            out.append(LSendBranch(interval_hull(ba.interval, m[0].interval), ba.sorts, cont))
        elif isinstance(a, LRecv):
            out.append(LRecvBranch(ba.sorts, cont))
        elif isinstance(a, LSelect):
            out.append(LSelBranch(interval_hull(ba.interval, m[0].interval), ba.label, cont))
        else:
            out.append(LOfferBranch(ba.label, cont))
    return type(a)(a.chan, tuple(out))


# -- projection --------------------------------------------------------------


def project(g: GlobalType, q: int) -> Union[LocalType, Undefined]:
    """``g`` restricted to participant ``q``, or :class:`Undefined`."""
    return _project(g, q, ())


def _where(g: GlobalType) -> str:
    if isinstance(g, (GMsg, GBranch, GDeleg)):
        return f"{g.sender}->{g.receiver}:{g.chan}"
    if isinstance(g, GRec):
        return f"mu {g.var}"
    return type(g).__name__


def _project(g: GlobalType, q: int, path: tuple):
    here = path + (_where(g),)
    if isinstance(g, GEnd):
        return END
    if isinstance(g, GVar):
        return LVar(g.name)
    if isinstance(g, GRec):
        body = _project(g.body, q, here)
        if isinstance(body, Undefined):
            return body
        if isinstance(body, LEnd) or (isinstance(body, LVar) and body.name == g.var):
            return END
        return LRec(g.var, body)
    if isinstance(g, GPar):
        in_left, in_right = q in pid(g.left), q in pid(g.right)
        if in_left and in_right:
            return Undefined(f"participant {q} occurs in both parallel components", here, g.span)
        if in_left:
            return _project(g.left, q, here)
        if in_right:
            return _project(g.right, q, here)
        return END
    if isinstance(g, (GMsg, GBranch, GDeleg)) and g.sender == g.receiver:
        return Undefined(f"reflexive interaction {g.sender}->{g.receiver}", here, g.span)
    if isinstance(g, GDeleg):
        cont = _project(g.cont, q, here)
        if isinstance(cont, Undefined):
            return cont
        if q == g.sender:
            return LDeleg(g.chan, g.carried, g.role, cont)
        if q == g.receiver:
            return LSessRecv(g.chan, g.carried, g.role, cont)
        return cont
    conts = []
    for b in g.branches:
        c = _project(b.cont, q, here)
        if isinstance(c, Undefined):
            return c
        conts.append(c)
    if isinstance(g, GMsg):
        if q == g.sender:
            return LSend(g.chan, tuple(LSendBranch(b.interval, b.sorts, c) for b, c in zip(g.branches, conts)))
        if q == g.receiver:
            return LRecv(g.chan, tuple(LRecvBranch(b.sorts, c) for b, c in zip(g.branches, conts)))
    else:
        if q == g.sender:
            return LSelect(g.chan, tuple(LSelBranch(b.interval, b.label, c) for b, c in zip(g.branches, conts)))
        if q == g.receiver:
            return LBranch(g.chan, tuple(LOfferBranch(b.label, c) for b, c in zip(g.branches, conts)))
    first = local_key(conts[0])
    for i, c in enumerate(conts[1:], start=2):
        if local_key(c) != first:
            return Undefined(
                f"participant {q} is not involved in {_where(g)} but branches 1 and {i} "
                f"give it different behaviour", here, g.span)
    return conts[0]


# -- branch merging ----------------------------------------------------------


def simplify_global(g: GlobalType) -> GlobalType:
    """Merge branches with identical sort (label) and identical continuation."""
    sp = g.span
    if isinstance(g, GMsg):
        groups = {}
        order = []
        for b in g.branches:
            cont = simplify_global(b.cont)
            key = (tuple(b.sorts), global_key(cont))
            if key in groups:
                d, _ = groups[key]
                groups[key] = (interval_add(d, b.interval), cont)
            else:
                groups[key] = (b.interval, cont)
                order.append(key)
        return GMsg(g.sender, g.receiver, g.chan,
                    tuple(GMsgBranch(groups[k][0], k[0], groups[k][1]) for k in order), span=sp)
    if isinstance(g, GBranch):
        groups = {}
        order = []
        for b in g.branches:
            cont = simplify_global(b.cont)
            key = (b.label, global_key(cont))
            if key in groups:
                d, _ = groups[key]
                groups[key] = (interval_add(d, b.interval), cont)
            else:
                groups[key] = (b.interval, cont)
                order.append(key)
        return GBranch(g.sender, g.receiver, g.chan,
                       tuple(GLabelBranch(groups[k][0], k[0], groups[k][1]) for k in order), span=sp)
    if isinstance(g, GDeleg):
        return GDeleg(g.sender, g.receiver, g.chan, g.carried, g.role, simplify_global(g.cont), span=sp)
    if isinstance(g, GPar):
        left, right = simplify_global(g.left), simplify_global(g.right)
        # G, end and end, G are identified with G
        if isinstance(left, GEnd):
            return right
        if isinstance(right, GEnd):
            return left
        return GPar(left, right, span=sp)
    if isinstance(g, GRec):
        return GRec(g.var, simplify_global(g.body), span=sp)
    return g


def simplify_local(t: LocalType) -> LocalType:
    """The local counterpart of :func:`simplify_global` (send and select sums)."""
    if isinstance(t, (LSend, LSelect)):
        groups = {}
        order = []
        for b in t.branches:
            cont = simplify_local(b.cont)
            tag = tuple(b.sorts) if isinstance(t, LSend) else b.label
            key = (tag, local_key(cont))
            if key in groups:
                d, _ = groups[key]
                groups[key] = (interval_add(d, b.interval), cont)
            else:
                groups[key] = (b.interval, cont)
                order.append(key)
        if isinstance(t, LSend):
            return LSend(t.chan, tuple(LSendBranch(groups[k][0], k[0], groups[k][1]) for k in order))
        return LSelect(t.chan, tuple(LSelBranch(groups[k][0], k[0], groups[k][1]) for k in order))
    return _map_local(t, simplify_local)


# -- well-formedness ---------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    span: Optional[Span] = None

    def __str__(self):
        where = f"{self.span}: " if self.span else ""
        return f"{where}{self.kind}: {self.message}"


@dataclass
class WellFormedness:
    errors: list
    warnings: list

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self):
        return self.ok


def _guarded(g: GlobalType, var: str, under: bool) -> bool:
    if isinstance(g, GVar):
        return g.name != var or under
    if isinstance(g, GRec):
        return g.var == var or _guarded(g.body, var, under)
    if isinstance(g, (GMsg, GBranch, GDeleg)):
        return all(_guarded(c, var, True) for c in _gchildren(g))
    return all(_guarded(c, var, under) for c in _gchildren(g))


def _interactions(g: GlobalType):
    yield g
    for c in _gchildren(g):
        yield from _interactions(c)


def well_formed(g: GlobalType) -> WellFormedness:
    """Check reflexivity, guardedness, distinctness, projectability and channel disjointness."""
    errors, warnings = [], []

    def walk(h, bound):
        if isinstance(h, GVar) and h.name not in bound:
            errors.append(Diagnostic("unbound", f"type variable {h.name} is not bound", h.span))
        if isinstance(h, GRec):
            if not _guarded(h.body, h.var, False):
                errors.append(Diagnostic("recursion", f"type variable {h.var} is not guarded", h.span))
            bound = bound | {h.var}
        if isinstance(h, (GMsg, GBranch, GDeleg)) and h.sender == h.receiver:
            errors.append(Diagnostic("reflexive", f"participant {h.sender} interacts with itself", h.span))
        if isinstance(h, GPar):
            left, right = set(channels(h.left)), set(channels(h.right))
            shared = sorted(left & right)
            if shared:
                errors.append(Diagnostic("linearity", "parallel components share channels " + ", ".join(shared), h.span))
        if isinstance(h, (GMsg, GBranch)):
            total_ok = feasible_sum(b.interval for b in h.branches)
            if not total_ok:
                warnings.append(Diagnostic(
                    "interval", f"branch intervals of {_where(h)} cannot add up to 1", h.span))
        for c in _gchildren(h):
            walk(c, bound)

    walk(g, frozenset())
    simple = simplify_global(g)
    for h in _interactions(simple):
        if isinstance(h, GMsg):
            seen = {}
            for i, b in enumerate(h.branches):
                k = sorts_class(b.sorts)
                if k in seen:
                    errors.append(Diagnostic(
                        "distinctness",
                        f"branches {seen[k] + 1} and {i + 1} of {_where(h)} carry the same sorts "
                        f"but continue differently", h.span))
                seen.setdefault(k, i)
        elif isinstance(h, GBranch):
            seen = {}
            for i, b in enumerate(h.branches):
                if b.label in seen:
                    errors.append(Diagnostic(
                        "distinctness",
                        f"branches {seen[b.label] + 1} and {i + 1} of {_where(h)} select label "
                        f"{b.label} but continue differently", h.span))
                seen.setdefault(b.label, i)
    for q in sorted(pid(g)):
        r = project(simple, q)
        if isinstance(r, Undefined):
            errors.append(Diagnostic("projection", f"participant {q}: {r.reason}", r.span))
    return WellFormedness(errors, warnings)


def first_channels(t: LocalType) -> frozenset:
    """Channels the type can act on first."""
    u = unfold_local(t)
    if hasattr(u, "chan"):
        return frozenset([u.chan])
    return frozenset()


__all__ = [
    "GlobalType", "GMsg", "GMsgBranch", "GDeleg", "GBranch", "GLabelBranch", "GPar", "GRec", "GVar", "GEnd",
    "LocalType", "LSend", "LSendBranch", "LRecv", "LRecvBranch", "LDeleg", "LSessRecv", "LSelect",
    "LSelBranch", "LBranch", "LOfferBranch", "LRec", "LVar", "LEnd", "END", "GEND",
    "Located", "Protocol", "Undefined", "Diagnostic", "WellFormedness",
    "pid", "sid", "channels", "local_channels", "project", "simplify_global", "simplify_local",
    "well_formed", "unfold_local", "local_subst", "types_equal", "join_types", "local_key", "global_key",
    "local_alpha_equal", "global_alpha_equal", "is_end", "first_channels", "rename_local_channels",
    "interval_contains", "point", "sort_class",
]
