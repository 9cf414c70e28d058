"""Command-line front end: ``pmps <command> FILE.pmps [flags]``.

Exit codes: 0 success, 1 a check or query failed, 2 the input could not be
read or parsed. ``--format records`` prints one JSON object per line instead
of human-readable text.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from . import metatheory as MT
from . import query as Q
from . import semantics as M
from . import syntax as S
from . import types as T
from .ast import format_value
from .kernel import format_fraction, format_rational
from .typing import TypeCheckError, typecheck_full

DEPTH_ENV = "PMPS_DEPTH"
DEFAULT_DEPTH = 20


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class Output:
    def __init__(self, fmt: str, out):
        self.fmt = fmt
        self.out = out

    def emit(self, text: str, **record):
        if self.fmt == "records":
            self.out.write(json.dumps(record, sort_keys=True, default=str) + "\n")
        else:
            self.out.write(text + "\n")


def default_depth() -> int:
    raw = os.environ.get(DEPTH_ENV)
    if raw is None:
        return DEFAULT_DEPTH
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{DEPTH_ENV} must be an integer, got {raw!r}", 2)


def load(path: str) -> S.SourceFile:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}", 2)
    try:
        return S.parse_file(text)
    except S.ParseError as e:
        raise CliError(f"{path}:{e}", 2)


def pick_process(src: S.SourceFile, name: Optional[str]):
    if name is None:
        if not src.systems:
            raise CliError("the file declares no system; name a process with --process", 1)
        name = next(iter(src.systems))
    try:
        return name, src.process(name)
    except KeyError:
        raise CliError(f"no system or process named {name}", 1)


def parse_role(src: S.SourceFile, text: str) -> int:
    if text.isdigit():
        return int(text)
    if text in src.roles:
        return src.roles[text]
    raise CliError(f"unknown role {text}", 1)


def pick_globals(src: S.SourceFile, name: Optional[str]) -> list:
    if name is not None:
        if name not in src.globals:
            raise CliError(f"no global type named {name}", 1)
        return [src.globals[name]]
    used = list(dict.fromkeys(src.shared.values()))
    return [src.globals[g] for g in (used or list(src.globals))]


def parse_query(text: str):
    try:
        return Q.parse_predicate(text)
    except Q.QueryError as e:
        raise CliError(f"query: {e}", 2)


# -- commands ----------------------------------------------------------------


def cmd_check(args, src, out: Output) -> int:
    gamma = src.gamma()
    failed = False
    for name, proto in src.globals.items():
        wf = T.well_formed(proto.gtype)
        for msg in wf.errors:
            failed = True
            out.emit(f"global {name}: {msg}", kind="global", name=name, ok=False, message=str(msg))
        for msg in wf.warnings:
            out.emit(f"global {name}: warning: {msg}", kind="global", name=name, ok=True, warning=str(msg))
    names = [args.system] if args.system else list(src.systems)
    if args.system and args.system not in src.systems:
        raise CliError(f"no system named {args.system}", 1)
    for name in names:
        p = src.systems[name]
        try:
            res = typecheck_full(gamma, p)
        except TypeCheckError as e:
            failed = True
            where = f" at {e.span}" if e.span else ""
            out.emit(f"{name}: ill-typed ({e.kind}){where}: {e}", kind="system", name=name, ok=False,
                     error=e.kind, message=str(e), span=str(e.span) if e.span else None)
            continue
        out.emit(f"{name}: well-typed, Delta = {res.delta}", kind="system", name=name, ok=True,
                 delta=str(res.delta))
        for w in res.warnings:
            out.emit(f"{name}: warning: {w}", kind="warning", name=name, ok=True, message=str(w))
    return 1 if failed else 0


def cmd_project(args, src, out: Output) -> int:
    q = parse_role(src, args.role)
    code = 0
    protos = pick_globals(src, args.global_name)
    for proto in protos:
        t = T.project(T.simplify_global(proto.gtype), q)
        if isinstance(t, T.Undefined):
            code = 1
            out.emit(f"{proto.name}@{q}: {t}", kind="projection", name=proto.name, role=q, ok=False,
                     message=str(t))
        else:
            text = S.print_local(t, src.role_names)
            out.emit(f"{proto.name}@{q}: {text}" if len(protos) > 1 else text,
                     kind="projection", name=proto.name, role=q, ok=True, type=text)
    return code


def cmd_simplify(args, src, out: Output) -> int:
    for proto in pick_globals(src, args.global_name):
        text = S.print_global(T.simplify_global(proto.gtype), src.role_names)
        out.emit(f"{proto.name} = {text}", kind="simplify", name=proto.name, type=text)
    return 0


def _describe(action: M.Action) -> str:
    if action.rule == "Com":
        vals = ", ".join(format_value(v) for v in action.values)
        return f"{action.channel}: {vals}" + (f" [{action.text}]" if action.text else "")
    if action.rule == "Label":
        return f"{action.channel}: {action.label}"
    if action.rule == "Link":
        return f"{action.shared}: ({', '.join(action.new_names)})"
    if action.channel:
        return action.channel
    return ""


def cmd_step(args, src, out: Output) -> int:
    name, p = pick_process(src, args.process)
    steps = M.enabled_steps(p)
    if not steps:
        out.emit(f"{name}: no enabled step", kind="step", process=name, steps=0)
    for label, succ in steps:
        via = "+".join((label.rule,) + tuple(label.via))
        acts = "; ".join(_describe(a) for a in label.actions)
        text = S.print_process(succ, src.role_names)
        out.emit(f"{via} p={format_fraction(label.probability)} family={label.family} {acts}\n    -> {text}",
                 kind="step", process=name, rule=label.rule, via=list(label.via),
                 probability=format_fraction(label.probability), family=label.family,
                 actions=[_describe(a) for a in label.actions], target=text)
    return 0


def cmd_graph(args, src, out: Output) -> int:
    name, p = pick_process(src, args.process)
    g = M.build_graph(p, args.depth, unroll=args.unroll)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(M.to_dot(g, args.full_text, src.role_names))
    errors = len(g.error_edges())
    out.emit(f"{name}: {len(g.nodes)} nodes, {len(g.edges)} edges, {len(g.truncated)} truncated, "
             f"{errors} error edges" + (f", written to {args.dot}" if args.dot else ""),
             kind="graph", process=name, nodes=len(g.nodes), edges=len(g.edges), truncated=len(g.truncated),
             error_edges=errors, dot=args.dot)
    return 0


def cmd_prob(args, src, out: Output) -> int:
    name, p = pick_process(src, args.process)
    pred = parse_query(args.query)
    g = M.build_graph(p, args.depth, unroll=True)
    try:
        r = Q.event_probability(g, pred)
    except Q.QueryError as e:
        out.emit(f"{name}: {e}", kind="prob", process=name, ok=False, message=str(e))
        return 1
    if r.exact:
        text = f"{format_fraction(r.lo)} ({format_rational(r.lo)})"
    else:
        text = f"[{format_fraction(r.lo)}, {format_fraction(r.hi)}] " \
               f"([{format_rational(r.lo)}, {format_rational(r.hi)}])"
    if r.schedulers != "memoryless":
        text += "  (bounds over history-dependent schedulers)"
    if r.truncated_nodes:
        text += f"  (depth bound reached at {r.truncated_nodes} nodes)"
    out.emit(text, kind="prob", process=name, ok=True, result=r.kind, lo=format_fraction(r.lo),
             hi=format_fraction(r.hi), paths_counted=r.paths_counted,
             nondeterministic_nodes=r.nondeterministic_nodes, truncated_nodes=r.truncated_nodes, schedulers=r.schedulers)
    return 0


def cmd_mc(args, src, out: Output) -> int:
    name, p = pick_process(src, args.process)
    pred = parse_query(args.query)
    r = Q.monte_carlo(p, pred, args.runs, args.seed, args.max_steps)
    text = f"{r.estimate:.4f} ± {r.stderr:.4f} ({r.runs} runs, seed {args.seed}"
    if r.divergent:
        text += f", {r.divergent} divergent"
    if r.nondeterministic_choices:
        text += f", {r.nondeterministic_choices} nondeterministic choices resolved uniformly"
    out.emit(text + ")", kind="mc", process=name, estimate=r.estimate, stderr=r.stderr, runs=r.runs,
             seed=args.seed, divergent=r.divergent, nondeterministic_choices=r.nondeterministic_choices)
    return 0


def cmd_meta(args, src, out: Output) -> int:
    import random
    gamma = src.gamma()
    names = [args.process] if args.process else list(src.systems)
    failed = False
    for name in names:
        _, p = pick_process(src, name)
        for rep in MT.run_all(gamma, p, args.depth, random.Random(args.seed)):
            failed = failed or not rep.ok
            if out.fmt == "records":
                for r in rep.records:
                    out.emit("", kind="meta", process=name, harness=rep.name, rule=r.rule, location=r.location,
                             expected=r.expected, actual=r.actual, ok=r.ok)
            else:
                out.emit(f"{name}: {rep.summary()}")
                bad = rep.first_failure()
                if bad:
                    out.emit(f"    first failure: {bad.rule} at {bad.location}: expected {bad.expected}, "
                             f"got {bad.actual}")
    return 1 if failed else 0


COMMANDS = {
    "check": cmd_check, "project": cmd_project, "simplify": cmd_simplify, "step": cmd_step,
    "graph": cmd_graph, "prob": cmd_prob, "mc": cmd_mc, "meta": cmd_meta,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmps", description="Probabilistic multiparty session toolchain.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="input .pmps file")
    common.add_argument("--format", choices=("text", "records"), default="text")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="type-check every system")
    p.add_argument("--system")
    p = sub.add_parser("project", parents=[common], help="project a global type onto a role")
    p.add_argument("--role", required=True)
    p.add_argument("--global", dest="global_name")
    p = sub.add_parser("simplify", parents=[common], help="merge branches of a global type")
    p.add_argument("--global", dest="global_name")
    p = sub.add_parser("step", parents=[common], help="list enabled reduction steps")
    p.add_argument("--process")
    p = sub.add_parser("graph", parents=[common], help="build the reduction graph")
    p.add_argument("--process")
    p.add_argument("--depth", type=int)
    p.add_argument("--dot")
    p.add_argument("--full-text", action="store_true")
    p.add_argument("--unroll", action="store_true")
    p = sub.add_parser("prob", parents=[common], help="exact probability of a path predicate")
    p.add_argument("--process")
    p.add_argument("--depth", type=int)
    p.add_argument("--query", required=True)
    p = sub.add_parser("mc", parents=[common], help="Monte Carlo estimate of a path predicate")
    p.add_argument("--process")
    p.add_argument("--query", required=True)
    p.add_argument("--runs", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=1000)
    p = sub.add_parser("meta", parents=[common], help="run the soundness harnesses")
    p.add_argument("--process")
    p.add_argument("--depth", type=int)
    p.add_argument("--seed", type=int, default=0)
    return ap


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "depth", 0) is None:
            args.depth = default_depth()
        if getattr(args, "runs", 1) <= 0:
            raise CliError("--runs must be positive", 2)
        src = load(args.file)
        return COMMANDS[args.command](args, src, Output(args.format, stdout))
    except CliError as e:
        stderr.write(f"pmps: {e}\n")
        return e.code


def main(argv=None) -> int:
    try:
        return run(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2


if __name__ == "__main__":
    sys.exit(main())
