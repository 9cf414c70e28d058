from collections import Counter
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from pmps import ast as A
from pmps import semantics as M
from pmps.generate import generate_system
from pmps.metatheory import equiv_rewrites
from pmps.syntax import ParseError, parse_process
from tests.strategies import processes, values

seeds = st.integers(0, 10 ** 6)


def P(text):
    return parse_process(text)


def test_par_inaction_drops():
    p = P("k!<1>")
    assert M.canonicalize(A.Par(p, A.INACT)) == M.canonicalize(p)


def test_par_associates():
    p, q, r = P("k!<1>"), P("m!<2>"), P("r!<3>")
    assert M.canonicalize(A.Par(A.Par(p, q), r)) == M.canonicalize(A.Par(p, A.Par(q, r)))


def test_mu_inaction():
    assert M.canonicalize(A.Rec("X", A.INACT)) == A.INACT


def test_par_commutes():
    assert M.struct_equiv(P("k!<1> | m!<2>"), P("m!<2> | k!<1>"))


def test_hides_commute():
    assert M.struct_equiv(P("new n in new m in n!<1> | m!<2>"), P("new m in new n in n!<1> | m!<2>"))


def test_duplicate_is_not_equivalent():
    p = P("k!<1>")
    assert not M.struct_equiv(p, A.Par(p, p))


def test_alice_seller_isbn_step(twobuyers):
    procs = twobuyers.procs
    expected = A.par(procs["Alice3"], A.subst_values(procs["Seller2"], {"ISBN": 195014766}))
    steps = M.enabled_steps(A.par(procs["Alice"], procs["Seller"]))
    hits = [(lab, q) for lab, q in steps if lab.probability == F(1, 5) and M.struct_equiv(q, expected)]
    assert len(hits) == 1
    assert hits[0][0].rule == "Com"


def test_bob_carried_by_par1(twobuyers):
    procs = twobuyers.procs
    expected = A.par(procs["Alice3"], A.subst_values(procs["Seller2"], {"ISBN": 195014766}), procs["Bob"])
    steps = M.enabled_steps(twobuyers.systems["Open"])
    hits = [lab for lab, q in steps if lab.probability == F(1, 5) and M.struct_equiv(q, expected)]
    assert len(hits) == 1
    assert hits[0].rule == "Com" and "Par1" in hits[0].via


def test_inaction_has_no_steps():
    assert M.enabled_steps(A.INACT) == []


def test_graph_of_inaction():
    g = M.build_graph(A.INACT, 5)
    assert len(g.nodes) == 1 and not g.edges


def test_twobuyers_graph(twobuyers):
    g = M.build_graph(twobuyers.systems["TwoBuyers"], 20)
    assert g.is_acyclic() and not g.truncated and not g.has_error()
    (link,) = g.successors(g.root)
    assert link.label.rule == "Link"
    probs = sorted(e.label.probability for e in g.successors(link.dst))
    assert probs == [F(1, 5), F(3, 10), F(1, 2)]
    assert all(e.label.rule == "Com" for e in g.successors(link.dst))


def test_probability_deficit_gives_error_edge():
    p = P("(0.5: k!<1> + 0.4: k!<2>) | k?(x: nat)")
    g = M.build_graph(p, 3)
    assert [e.label.rule for e in g.error_edges()] == ["ECom"]
    assert g.has_error()


def test_label_deficit_gives_error_edge():
    g = M.build_graph(P("(0.5: k <+ ok + 0.6: k <+ no) | k >> { ok: 0, no: 0 }"), 3)
    assert [e.label.rule for e in g.error_edges()] == ["ELabel"]


def test_unmatched_receive_is_stuck():
    assert M.is_stuck(P("k!<true> | k?(x: nat)"))


def test_recursion_unfolds_by_call():
    g = M.build_graph(P("mu X. k!<1>; X | mu Y. k?(x: nat); Y"), 6)
    assert len(g.nodes) <= 3
    assert not g.is_acyclic()


@given(processes())
def test_struct_equiv_reflexive(p):
    assert M.struct_equiv(p, p)


@given(processes(), processes())
def test_struct_equiv_symmetric(p, q):
    assert M.struct_equiv(p, q) == M.struct_equiv(q, p)


@given(processes(), st.data())
def test_struct_equiv_transitive_along_rewrites(p, data):
    rewrites = list(equiv_rewrites(p))
    _, q = data.draw(st.sampled_from(rewrites))
    rewrites2 = list(equiv_rewrites(q))
    _, r = data.draw(st.sampled_from(rewrites2))
    assert M.struct_equiv(p, q) and M.struct_equiv(q, r) and M.struct_equiv(p, r)


def _labels(p):
    return Counter((lab.rule, lab.probability, A.alpha_key(q)) for lab, q in M.enabled_steps(p))


def _advance(p, k):
    for _ in range(k):
        steps = M.enabled_steps(p)
        if not steps:
            break
        p = steps[0][1]
    return p


@given(seeds, st.integers(0, 3), st.data())
def test_equivalent_terms_have_same_steps(seed, k, data):
    p = _advance(generate_system(seed, max_fuel=3).process, k)
    _, q = data.draw(st.sampled_from(list(equiv_rewrites(p))))
    assert _labels(p) == _labels(q)


@given(seeds, st.integers(1, 4))
def test_family_probabilities_sum_to_one(seed, k):
    p = _advance(generate_system(seed, max_fuel=3).process, k)
    fams = {}
    for lab, _ in M.enabled_steps(p):
        fams[lab.family] = fams.get(lab.family, 0) + lab.probability
    assert all(total == 1 for total in fams.values())


@given(seeds, seeds)
def test_par2_iff_both_sides_move(s1, s2):
    p = generate_system(s1, max_fuel=3).process
    q = A.rename(generate_system(s2, max_fuel=3).process, {"a": "b"})
    left, right = M.enabled_steps(p), M.enabled_steps(q)
    both = M.enabled_steps(A.Par(p, q))
    if left and right:
        assert both and all(lab.rule == "Par2" for lab, _ in both)
        assert len(both) == len(left) * len(right)
    else:
        assert all(lab.rule != "Par2" for lab, _ in both)


@given(st.lists(st.sampled_from(["nat", "bool", "string", "int"]), min_size=1, max_size=3), values())
def test_reception_is_deterministic(sorts, v):
    text = " + ".join(f"k?(x: {s}); m!<{i}>" for i, s in enumerate(sorts))
    try:
        recv = parse_process(text)
    except ParseError:
        # same-class branches are rejected when parsing
        assert len({A.sort_class(s) for s in sorts}) < len(sorts)
        return
    send = A.Send("k", (A.SendBranch(F(1), (A.Lit(v),), A.INACT),))
    steps = M.enabled_steps(A.Par(send, recv))
    assert len(steps) == int(A.value_kind(v) in {A.sort_class(s) for s in sorts})


def test_to_dot_mentions_every_edge(twobuyers):
    g = M.build_graph(twobuyers.systems["TwoBuyers"], 20)
    dot = M.to_dot(g)
    assert dot.count("->") == len(g.edges)
