"""Executable checks of the soundness properties of the type system.

Each harness returns a :class:`Report` holding one :class:`Record` per
individual check, so failures can be inspected or emitted as JSON lines.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import ast as A
from . import semantics as M
from . import types as T
from .kernel import interval_contains
from .typing import (Reference, SessionEnv, SortEnv, TypeCheckError, session_reference, type_reduce,
                     typecheck)


@dataclass
class Record:
    rule: str
    location: str
    expected: str
    actual: str
    ok: bool

    def to_json(self) -> str:
        return json.dumps({"rule": self.rule, "location": self.location, "expected": self.expected,
                           "actual": self.actual, "ok": self.ok})


@dataclass
class Report:
    name: str
    records: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.records)

    def failures(self) -> list:
        return [r for r in self.records if not r.ok]

    def first_failure(self) -> Optional[Record]:
        fs = self.failures()
        return fs[0] if fs else None

    def add(self, rule, location, expected, actual, ok) -> Record:
        r = Record(rule, location, str(expected), str(actual), bool(ok))
        self.records.append(r)
        return r

    def summary(self) -> str:
        status = "ok" if self.ok else f"FAILED ({len(self.failures())} of {len(self.records)})"
        return f"{self.name}: {status}, {len(self.records)} checks"


# -- subject reduction -------------------------------------------------------


def _vector_of(refs: dict, chan: str):
    for vec, ref in refs.items():
        if chan in vec:
            return vec, ref
    return None, None


def _advance(refs: dict, action: M.Action, gamma: SortEnv) -> list:
    """Candidate reference states after ``action`` with the interval it used.

    Returns a list of (refs', interval or None, note); an empty list means
    the typing has no matching reduction.
    """
    if action.rule == "Link":
        proto = gamma.protocol(action.shared)
        new = dict(refs)
        new[tuple(action.new_names)] = session_reference(proto)
        return [(new, None, "link")]
    if action.rule not in ("Com", "Label", "Deleg"):
        return [(refs, None, action.rule)]
    vec, ref = _vector_of(refs, action.channel)
    if vec is None:
        return [(refs, None, "untracked")]
    tc = ref.tchans[vec.index(action.channel)]
    heads = {q: T.unfold_local(t) for q, t in ref.family.items()}
    out = []
    for qs, ts in heads.items():
        for qr, tr in heads.items():
            if qs == qr:
                continue
            if action.rule == "Com" and isinstance(ts, T.LSend) and isinstance(tr, T.LRecv) \
                    and ts.chan == tc and tr.chan == tc:
                kinds = tuple(A.value_kind(v) for v in action.values)
                bs = [b for b in ts.branches if A.sorts_class(b.sorts) == kinds]
                br = [b for b in tr.branches if A.sorts_class(b.sorts) == kinds]
                if bs and br:
                    fam = dict(ref.family)
                    fam[qs], fam[qr] = bs[0].cont, br[0].cont
                    out.append(({**refs, vec: Reference(fam, ref.tchans)}, bs[0].interval, f"{qs}->{qr}"))
            elif action.rule == "Label" and isinstance(ts, T.LSelect) and isinstance(tr, T.LBranch) \
                    and ts.chan == tc and tr.chan == tc:
                bs = [b for b in ts.branches if b.label == action.label]
                br = [b for b in tr.branches if b.label == action.label]
                if bs and br:
                    fam = dict(ref.family)
                    fam[qs], fam[qr] = bs[0].cont, br[0].cont
                    out.append(({**refs, vec: Reference(fam, ref.tchans)}, bs[0].interval, f"{qs}->{qr}"))
            elif action.rule == "Deleg" and isinstance(ts, T.LDeleg) and isinstance(tr, T.LSessRecv) \
                    and ts.chan == tc and tr.chan == tc:
                fam = dict(ref.family)
                fam[qs], fam[qr] = ts.cont, tr.cont
                out.append(({**refs, vec: Reference(fam, ref.tchans)}, None, f"{qs}->{qr}"))
    return out


def _remap(refs: dict, pairs) -> dict:
    mapping = {orig: final for orig, final in pairs}
    out = {}
    for vec, ref in refs.items():
        if vec in mapping:
            if mapping[vec] is not None:
                out[mapping[vec]] = ref
        else:
            out[vec] = ref
    return out


def _refs_key(refs: dict) -> tuple:
    return tuple(sorted((vec, tuple(sorted((q, T.local_key(t)) for q, t in ref.family.items())))
                        for vec, ref in refs.items()))


def _delta_follows(before: SessionEnv, after: SessionEnv, steps: int) -> bool:
    frontier = [before]
    for _ in range(steps + 1):
        if any(d.equivalent(after) for d in frontier):
            return True
        frontier = [d2 for d in frontier for _, d2 in type_reduce(d)]
    return False


def check_subject_reduction(gamma: SortEnv, p: A.Process, depth: int,
                            reference: Optional[dict] = None) -> Report:
    """Every step of a well-typed process leads to a well-typed process whose
    session environment is unchanged or obtained by a type reduction whose
    interval contains the probability of the step."""
    report = Report("subject reduction")
    reference = dict(reference or {})
    root, pairs = M.canonicalize_with_map(p)
    refs = _remap(reference, pairs)
    try:
        delta = typecheck(gamma, root, reference=refs)
    except TypeCheckError as e:
        report.add("typecheck", "root", "well-typed", f"{e.kind}: {e}", False)
        return report
    report.add("typecheck", "root", "well-typed", str(delta), True)
    seen = {(A.alpha_key(root), _refs_key(refs))}
    queue = deque([(root, refs, delta, 0, "root")])
    while queue:
        node, refs, delta, d, where = queue.popleft()
        if d >= depth:
            continue
        for k, (label, raw) in enumerate(M.raw_steps(node)):
            loc = f"{where}/{k}"
            if label.rule in ("ECom", "ELabel"):
                continue
            candidates = [(refs, [])]
            for action in label.actions:
                nxt = []
                for r, used in candidates:
                    for r2, interval, note in _advance(r, action, gamma):
                        nxt.append((r2, used + [(action, interval, note)]))
                candidates = nxt
            if not candidates:
                report.add(label.rule, loc, "a matching type reduction", "none", False)
                continue
            succ, succ_pairs = M.canonicalize_with_map(raw)
            errors = []
            accepted = None
            for r2, used in candidates:
                bad = [(a, iv) for a, iv, _ in used if iv is not None and a.group_probability is not None
                       and not interval_contains(a.group_probability, iv)]
                if bad:
                    a, iv = bad[0]
                    errors.append(f"probability {a.group_probability} outside {iv}")
                    continue
                r3 = _remap(r2, succ_pairs)
                try:
                    delta2 = typecheck(gamma, succ, reference=r3)
                except TypeCheckError as e:
                    errors.append(f"{e.kind}: {e}")
                    continue
                if not _delta_follows(delta, delta2, len(label.actions)):
                    errors.append(f"environment {delta2} does not follow from {delta}")
                    continue
                accepted = (r3, delta2, used)
                break
            if accepted is None:
                report.add(label.rule, loc, "well-typed successor", errors[0] if errors else "no candidate", False)
                continue
            r3, delta2, used = accepted
            intervals = ", ".join(f"{a.group_probability} in {iv}" for a, iv, _ in used if iv is not None)
            report.add(label.rule, loc, "well-typed successor", intervals or "environment unchanged", True)
            key = (A.alpha_key(succ), _refs_key(r3))
            if key not in seen:
                seen.add(key)
                queue.append((succ, r3, delta2, d + 1, loc))
    return report


# -- error freedom -----------------------------------------------------------


def check_error_freedom(gamma: SortEnv, p: A.Process, depth: int) -> Report:
    """A well-typed process has no error step within ``depth``."""
    report = Report("error freedom")
    try:
        typecheck(gamma, p)
        report.add("typecheck", "root", "well-typed", "well-typed", True)
    except TypeCheckError as e:
        report.add("typecheck", "root", "well-typed", f"{e.kind}: {e}", False)
    g = M.build_graph(p, depth)
    errors = g.error_edges()
    for e in errors:
        report.add(e.label.rule, f"node {e.src}", "no error step", f"{e.label.rule} on {e.label.actions[0].channel}",
                   False)
    if not errors:
        report.add("graph", f"{len(g.nodes)} nodes", "no error step", "none", True)
    return report


def error_edges(p: A.Process, depth: int) -> list:
    return M.build_graph(p, depth).error_edges()


# -- preservation under structural equivalence -------------------------------


def _positions(p: A.Process, rebuild):
    """Yield (subterm, rebuild-function) for every process position in ``p``."""
    yield p, rebuild
    if isinstance(p, (A.Request, A.Accept, A.Hide, A.Rec)):
        yield from _positions(p.body, lambda q, p=p: rebuild(_with(p, body=q)))
    elif isinstance(p, (A.Deleg, A.SessRecv)):
        yield from _positions(p.cont, lambda q, p=p: rebuild(_with(p, cont=q)))
    elif isinstance(p, A.Par):
        yield from _positions(p.left, lambda q, p=p: rebuild(A.Par(q, p.right)))
        yield from _positions(p.right, lambda q, p=p: rebuild(A.Par(p.left, q)))
    elif isinstance(p, A.If):
        yield from _positions(p.then, lambda q, p=p: rebuild(A.If(p.cond, q, p.orelse)))
        yield from _positions(p.orelse, lambda q, p=p: rebuild(A.If(p.cond, p.then, q)))
    elif isinstance(p, (A.Send, A.Recv, A.Select, A.Branching)):
        for i, b in enumerate(p.branches):
            def rb(q, p=p, i=i, b=b):
                bs = list(p.branches)
                bs[i] = _with(b, cont=q)
                return rebuild(A.with_branches(p, bs))
            yield from _positions(b.cont, rb)


def _with(obj, **kw):
    from dataclasses import replace
    return replace(obj, **kw)


def equiv_rewrites(p: A.Process):
    """All processes obtained from ``p`` by one structural-equivalence equation
    applied in either direction at one position, as (equation, process)."""
    fresh = A.fresh_name("n", A.free_names(p) | M._all_names(p))
    for q, rebuild in _positions(p, lambda x: x):
        yield "P|0 => P (intro)", rebuild(A.Par(q, A.INACT))
        if isinstance(q, A.Par):
            yield "P|Q => Q|P", rebuild(A.Par(q.right, q.left))
            if isinstance(q.right, A.Inact):
                yield "P|0 => P", rebuild(q.left)
            if isinstance(q.left, A.Inact):
                yield "0|P => P", rebuild(q.right)
            if isinstance(q.left, A.Par):
                yield "(P|Q)|R => P|(Q|R)", rebuild(A.Par(q.left.left, A.Par(q.left.right, q.right)))
            if isinstance(q.right, A.Par):
                yield "P|(Q|R) => (P|Q)|R", rebuild(A.Par(A.Par(q.left, q.right.left), q.right.right))
            if isinstance(q.left, A.Hide) and not (set(q.left.names) & A.free_names(q.right)):
                yield "(nu n)P|Q => (nu n)(P|Q)", rebuild(A.Hide(q.left.names, A.Par(q.left.body, q.right)))
            if isinstance(q.right, A.Hide) and not (set(q.right.names) & A.free_names(q.left)):
                yield "P|(nu n)Q => (nu n)(P|Q)", rebuild(A.Hide(q.right.names, A.Par(q.left, q.right.body)))
        if isinstance(q, (A.Send, A.Recv, A.Select, A.Branching)) and len(q.branches) > 1:
            for i in range(len(q.branches) - 1):
                bs = list(q.branches)
                bs[i], bs[i + 1] = bs[i + 1], bs[i]
                yield "P+Q => Q+P", rebuild(A.with_branches(q, bs))
        if isinstance(q, A.Inact):
            yield "0 => (nu n)0", rebuild(A.Hide((fresh,), A.INACT))
            yield "0 => mu X.0", rebuild(A.Rec("X_eq", A.INACT))
        if isinstance(q, A.Hide):
            if isinstance(q.body, A.Inact):
                yield "(nu n)0 => 0", rebuild(A.INACT)
            if isinstance(q.body, A.Hide):
                yield "(nu n)(nu m)P => (nu m)(nu n)P", rebuild(A.Hide(q.body.names, A.Hide(q.names, q.body.body)))
            if isinstance(q.body, A.Par):
                left, right = q.body.left, q.body.right
                if not (set(q.names) & A.free_names(right)):
                    yield "(nu n)(P|Q) => (nu n)P|Q", rebuild(A.Par(A.Hide(q.names, left), right))
                if not (set(q.names) & A.free_names(left)):
                    yield "(nu n)(P|Q) => P|(nu n)Q", rebuild(A.Par(left, A.Hide(q.names, right)))
        if isinstance(q, A.Rec) and isinstance(q.body, A.Inact):
            yield "mu X.0 => 0", rebuild(A.INACT)


def check_equiv_preservation(gamma: SortEnv, p: A.Process, reference: Optional[dict] = None) -> Report:
    """Every one-equation structural rewrite of ``p`` has the same typing."""
    report = Report("equivalence preservation")
    try:
        delta = typecheck(gamma, p, reference=reference)
    except TypeCheckError as e:
        report.add("typecheck", "original", "well-typed", f"{e.kind}: {e}", False)
        return report
    for k, (rule, q) in enumerate(equiv_rewrites(p)):
        try:
            delta2 = typecheck(gamma, q, reference=reference)
        except TypeCheckError as e:
            report.add(rule, f"rewrite {k}", str(delta), f"{e.kind}: {e}", False)
            continue
        report.add(rule, f"rewrite {k}", str(delta), str(delta2), delta.equivalent(delta2))
    return report


# -- substitution and weakening ----------------------------------------------


@dataclass(frozen=True)
class SubstitutionSample:
    gamma: SortEnv
    process: A.Process
    var: str
    value: object


def check_substitution(gamma: SortEnv, p: A.Process, var: str, value) -> Record:
    """Typing of ``p`` under ``var: S`` equals that of ``p{value/var}``."""
    sort = gamma.vars.get(var)
    if sort is None or not A.value_fits(value, sort):
        return Record("substitution", var, f"{var}: {sort}", f"value {A.format_value(value)} does not fit", False)
    before = typecheck(gamma, p)
    rest = SortEnv({k: v for k, v in gamma.vars.items() if k != var}, gamma.shared, gamma.procs)
    try:
        after = typecheck(rest, A.subst_values(p, {var: value}))
    except TypeCheckError as e:
        return Record("substitution", var, str(before), f"{e.kind}: {e}", False)
    return Record("substitution", var, str(before), str(after), before.equivalent(after))


def check_weakening(gamma: SortEnv, p: A.Process, extra: SessionEnv) -> Record:
    """Adding an end-only environment on fresh channels keeps ``p`` typable."""
    delta = typecheck(gamma, p)
    if not extra.is_end_only():
        return Record("weakening", "extra", "end-only environment", str(extra), False)
    overlap = {c for v in delta.vectors() for c in v} & {c for v in extra.vectors() for c in v}
    if overlap:
        return Record("weakening", "extra", "disjoint channels", ", ".join(sorted(overlap)), False)
    combined = SessionEnv.of({**delta.as_dict(), **extra.as_dict()})
    try:
        typecheck(gamma, p, expected=combined)
    except TypeCheckError as e:
        return Record("weakening", "extra", str(combined), f"{e.kind}: {e}", False)
    return Record("weakening", "extra", str(combined), "derivable", True)


def open_samples(gamma: SortEnv, p: A.Process, rng, limit: int = 8) -> list:
    """Open subterms of ``p`` under value binders, with values fitting the binders' sorts."""
    out = []

    def walk(q, vars_):
        if isinstance(q, A.Recv):
            for b in q.branches:
                inner = {**vars_, **dict(b.binders)}
                for x, s in b.binders:
                    if A.free_vars(b.cont):
                        # under a recursion the body's process variable is unbound
                        continue
                    out.append(SubstitutionSample(SortEnv(inner, gamma.shared, gamma.procs), b.cont, x,
                                                  sample_value(s, rng)))
                walk(b.cont, inner)
            return
        for c in A.children(q):
            walk(c, vars_)

    walk(p, dict(gamma.vars))
    rng.shuffle(out)
    return out[:limit]


def sample_value(sort: str, rng):
    if sort == "bool":
        return rng.random() < 0.5
    if sort == "nat":
        return rng.randrange(0, 1000)
    if sort == "int":
        return rng.randrange(-500, 500)
    return rng.choice(["", "x", "hello", "War and Peace"])


def check_substitution_weakening(samples) -> Report:
    """Substitution on each sample, and weakening by a fresh end-typed channel."""
    report = Report("substitution and weakening")
    for k, s in enumerate(samples):
        try:
            r = check_substitution(s.gamma, s.process, s.var, s.value)
        except TypeCheckError as e:
            r = Record("substitution", s.var, "well-typed open term", f"{e.kind}: {e}", False)
        r.location = f"sample {k}: {r.location}"
        report.records.append(r)
        try:
            fresh = A.fresh_name("w", A.free_names(s.process))
            r = check_weakening(s.gamma, s.process, SessionEnv.of({(fresh,): {1: T.END}}))
        except TypeCheckError as e:
            r = Record("weakening", "extra", "well-typed open term", f"{e.kind}: {e}", False)
        r.location = f"sample {k}: {r.location}"
        report.records.append(r)
    return report


def run_all(gamma: SortEnv, p: A.Process, depth: int, rng=None) -> list:
    import random
    rng = rng or random.Random(0)
    return [
        check_equiv_preservation(gamma, p),
        check_subject_reduction(gamma, p, depth),
        check_error_freedom(gamma, p, depth),
        check_substitution_weakening(open_samples(gamma, p, rng)),
    ]


__all__ = [
    "Record", "Report", "check_subject_reduction", "check_error_freedom", "check_equiv_preservation",
    "check_substitution", "check_weakening", "check_substitution_weakening", "equiv_rewrites", "open_samples",
    "run_all", "error_edges",
]

