"""The ten acceptance criteria, each printing one PASS/FAIL line."""

import random
import time
from fractions import Fraction as F

import pytest

from pmps import ast as A
from pmps import metatheory as MT
from pmps import query as Q
from pmps import semantics as M
from pmps import types as T
from pmps.generate import generate_systems, perturb
from pmps.syntax import parse_local
from pmps.typing import TypeCheckError, is_typable, typecheck

QUERY = 'sent(as,"The Art of War") | sent(as,0195014766) & chose(ab, quote/3)'
BOOKS = [("War and Peace", 'sent(as,"War and Peace")'),
         ("The Art of War", 'sent(as,"The Art of War") | sent(as,0195014766)')]
CONTRIBUTIONS = [(f"quote/{k}", f"chose(ab, quote/{k})") for k in (2, 3, 4)]
DEPTH = 12


@pytest.fixture
def verdict(capsys):
    def show(n, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
        assert ok, detail
    return show


@pytest.fixture(scope="module")
def systems():
    return generate_systems(500, seed=0)


def test_1_golden_typability(twobuyers, gamma, verdict):
    times, deltas = [], []
    for name in ("TwoBuyers", "TwoBuyersVariant"):
        t0 = time.perf_counter()
        try:
            deltas.append(typecheck(gamma, twobuyers.systems[name]))
        except TypeCheckError as e:
            deltas.append(e)
        times.append(time.perf_counter() - t0)
    ok = all(not isinstance(d, Exception) and d.is_end_only() for d in deltas) and deltas[0] == deltas[1]
    ok = ok and max(times) < 1.0
    verdict(1, ok, f"both systems typed against Purchase, Delta = {deltas[0]} / {deltas[1]}, "
                   f"times {times[0]:.3f}s and {times[1]:.3f}s")


def test_2_exact_query(twobuyers, verdict):
    t0 = time.perf_counter()
    g = M.build_graph(twobuyers.systems["TwoBuyers"], 20, unroll=True)
    r = Q.event_probability(g, QUERY)
    dt = time.perf_counter() - t0
    ok = r.exact and r.value == F(7, 50) and dt < 1.0
    verdict(2, ok, f"probability {r}, {dt:.3f}s")


def test_3_most_probable(twobuyers, verdict):
    t0 = time.perf_counter()
    g = M.build_graph(twobuyers.systems["TwoBuyers"], 20, unroll=True)
    best = Q.most_probable(g, Q.product_classes(BOOKS, CONTRIBUTIONS))
    dt = time.perf_counter() - t0
    ok = (best.probability == F(7, 25) and set(best.ties) == {"The Art of War & quote/2", "The Art of War & quote/4"}
          and dt < 1.0)
    verdict(3, ok, f"{best}, {dt:.3f}s")


def test_4_projection(twobuyers, verdict):
    expected = parse_local("[0.7,0.9]: as!<string>. as?(int). 1: ab!<int>. end"
                           " + [0.15,0.25]: as!<nat>. as?(int). 1: ab!<int>. end")
    got = T.project(twobuyers.globals["Purchase"].gtype, 1)
    verdict(4, T.local_alpha_equal(got, expected), "projection onto participant 1 matches Alice's local type")


def test_5_reduction(twobuyers, verdict):
    procs = twobuyers.procs
    target = A.par(procs["Alice3"], A.subst_values(procs["Seller2"], {"ISBN": 195014766}), procs["Bob"])
    steps = M.enabled_steps(twobuyers.systems["Open"])
    hits = [lab for lab, q in steps if M.struct_equiv(q, target)]
    ok = len(hits) == 1 and hits[0].probability == F(1, 5) and hits[0].rule == "Com" and "Par1" in hits[0].via
    verdict(5, ok, f"step to Alice3 | Seller2{{0195014766/ISBN}} | Bob: {[str(h) + ' via ' + '+'.join(h.via) for h in hits]}")


def test_6_subject_reduction(systems, verdict):
    t0 = time.perf_counter()
    bad, checks, sizes = [], 0, []
    for s in systems:
        sizes.append(len(T.pid(s.protocol.gtype)))
        rep = MT.check_subject_reduction(s.gamma, s.process, DEPTH)
        checks += len(rep.records)
        if not rep.ok:
            bad.append((s.seed, rep.first_failure()))
    dt = time.perf_counter() - t0
    ok = not bad and max(sizes) <= 4 and dt < 300
    verdict(6, ok, f"{len(systems)} systems, {checks} checks, {len(bad)} counterexamples, {dt:.1f}s"
                   + (f"; first {bad[0]}" if bad else ""))


def test_7_error_freedom(systems, verdict):
    with_errors = [s.seed for s in systems if M.build_graph(s.process, DEPTH).error_edges()]
    perturbed = [perturb(s) for s in systems[:100]]
    accepted = [s.seed for s in perturbed if is_typable(s.gamma, s.process)]
    no_error = [s.seed for s in perturbed if not M.build_graph(s.process, DEPTH).error_edges()]
    ok = not with_errors and not accepted and not no_error
    verdict(7, ok, f"{len(with_errors)} of 500 well-typed systems with error edges; of 100 perturbed, "
                   f"{100 - len(accepted)} rejected and {100 - len(no_error)} with an error edge")


def test_8_equivalence_preservation(systems, verdict):
    bad, rewrites = [], 0
    for s in systems:
        rep = MT.check_equiv_preservation(s.gamma, s.process)
        rewrites += len(rep.records)
        if not rep.ok:
            bad.append((s.seed, rep.first_failure()))
    verdict(8, not bad, f"{len(systems)} terms, {rewrites} single-equation rewrites, {len(bad)} with a different Delta"
                        + (f"; first {bad[0]}" if bad else ""))


def _random_predicate(rng, g):
    atoms = []
    for e in g.edges:
        for a in e.label.actions:
            if a.rule == "Com":
                atoms.append(Q.Atom("sent", (a.channel, a.values[0])))
            elif a.rule == "Label":
                atoms.append(Q.Atom("label", (a.channel, a.label)))
            elif a.channel:
                atoms.append(Q.Atom("on", (a.channel,)))
    atoms = atoms or [Q.Atom("true", ())]

    def build(depth):
        if depth == 0 or rng.random() < 0.3:
            return rng.choice(atoms)
        op = rng.choice(["and", "or", "not"])
        if op == "not":
            return Q.Not(build(depth - 1))
        cls = Q.And if op == "and" else Q.Or
        return cls(build(depth - 1), build(depth - 1))

    return build(3)


def test_9_dp_matches_enumeration(verdict):
    rng = random.Random(9)
    checked, mismatches, seed = 0, [], 0
    while checked < 100:
        s = generate_systems(1, seed=1000 + seed)[0]
        seed += 1
        g = M.build_graph(s.process, DEPTH, unroll=True)
        if Q.count_paths(g) > 10 ** 4:
            continue
        pred = _random_predicate(rng, g)
        r = Q.event_probability(g, pred)
        if (r.lo, r.hi) != Q.brute_force_probability(g, pred):
            mismatches.append((s.seed, str(pred)))
        checked += 1
    verdict(9, not mismatches, f"{checked} graphs, {len(mismatches)} mismatches between DP and path enumeration")


def test_10_monte_carlo(twobuyers, verdict):
    p = twobuyers.systems["TwoBuyers"]
    est, err = Q.monte_carlo(p, QUERY, 10 ** 4, seed=20261017)
    within = 0
    for seed in range(100):
        e, se = Q.monte_carlo(p, QUERY, 10 ** 4, seed=seed)
        within += abs(e - 0.14) < 5 * se
    ok = abs(est - 0.14) <= 0.02 and within >= 99
    verdict(10, ok, f"estimate {est:.4f} ± {err:.4f}; {within} of 100 seeds within 5 standard errors")
