from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from pmps import ast as A
from pmps import query as Q
from pmps import semantics as M
from pmps.generate import generate_system, perturb
from pmps.syntax import parse_process

QUERY = 'sent(as,"The Art of War") | sent(as,0195014766) & chose(ab, quote/3)'
BOOKS = [("War and Peace", 'sent(as,"War and Peace")'),
         ("The Art of War", 'sent(as,"The Art of War") | sent(as,0195014766)')]
CONTRIBUTIONS = [(f"quote/{k}", f"chose(ab, quote/{k})") for k in (2, 3, 4)]
seeds = st.integers(0, 10 ** 6)


@pytest.fixture(scope="module")
def graph(twobuyers):
    return M.build_graph(twobuyers.systems["TwoBuyers"], 20, unroll=True)


def test_or_binds_tighter_than_and():
    p = Q.parse_predicate("on(a) | on(b) & on(c)")
    assert p == Q.And(Q.Or(Q.Atom("on", ("a",)), Q.Atom("on", ("b",))), Q.Atom("on", ("c",)))


def test_negation_and_parentheses():
    p = Q.parse_predicate("!(on(a) & not on(b))")
    assert p == Q.Not(Q.And(Q.Atom("on", ("a",)), Q.Not(Q.Atom("on", ("b",)))))


def test_chose_keeps_raw_text():
    assert Q.parse_predicate("chose(ab, quote / (2))").args == ("ab", "quote / (2)")


@pytest.mark.parametrize("text", ["", "sent(as)", "on(a) &", "foo(a)", "sent(as, x)"])
def test_bad_predicates(text):
    with pytest.raises(Q.QueryError):
        Q.parse_predicate(text)


def test_art_of_war_with_a_third(graph):
    r = Q.event_probability(graph, QUERY)
    assert r.kind == "Exact" and r.value == F(7, 50)
    assert r.nondeterministic_nodes == 0 and r.paths_counted > 0


def test_true_has_probability_one(graph):
    assert Q.event_probability(graph, "true").value == 1


def test_art_of_war_with_a_half(graph):
    r = Q.event_probability(graph, '(sent(as,"The Art of War") | sent(as,0195014766)) & chose(ab, quote/2)')
    assert r.value == F(7, 25)


def test_most_probable_choice_of_alice(graph):
    best = Q.most_probable(graph, Q.product_classes(BOOKS, CONTRIBUTIONS))
    assert best.probability == F(7, 25)
    assert best.ties == ("The Art of War & quote/2", "The Art of War & quote/4")
    assert best.best == "The Art of War & quote/2"


def test_single_class(graph):
    best = Q.most_probable(graph, [("all", "true")])
    assert (best.best, best.probability) == ("all", 1)


def test_first_step_by_sort(twobuyers):
    g = M.build_graph(twobuyers.systems["Open"], 1, unroll=True)
    best = Q.most_probable(g, [("string", "sort(as, string)"), ("nat", "sort(as, nat)")])
    assert (best.best, best.probability) == ("string", F(4, 5))


def test_partition_is_checked(graph):
    with pytest.raises(Q.QueryError, match="sum to 3/10"):
        Q.most_probable(graph, [("wp", BOOKS[0][1])])


def test_cyclic_graph_rejected():
    g = M.build_graph(parse_process("mu X. k!<1>; X | mu Y. k?(x: nat); Y"), 5)
    with pytest.raises(Q.QueryError, match="cycles"):
        Q.event_probability(g, "true")


def test_error_graph_rejected():
    g = M.build_graph(parse_process("(0.5: k!<1> + 0.4: k!<2>) | k?(x: nat)"), 3, unroll=True)
    with pytest.raises(Q.QueryError, match="error"):
        Q.event_probability(g, "true")


def test_nondeterminism_gives_range():
    p = parse_process("k!<1> | k?(x: nat); m!<x> | k?(y: nat); r!<y> | m?(z: nat)")
    r = Q.event_probability(M.build_graph(p, 5, unroll=True), "on(m)")
    assert r.kind == "Range" and (r.lo, r.hi) == (0, 1)
    assert r.nondeterministic_nodes == 1
    assert Q.brute_force_probability(M.build_graph(p, 5, unroll=True), "on(m)") == (r.lo, r.hi)


def test_monte_carlo_near_exact(twobuyers):
    est, err = Q.monte_carlo(twobuyers.systems["TwoBuyers"], QUERY, 10000, seed=2024)
    assert abs(est - 0.14) < 0.02
    assert 0 < err < 0.01


def test_monte_carlo_true(twobuyers):
    assert Q.monte_carlo(twobuyers.systems["TwoBuyers"], "true", 200, seed=1).estimate == 1.0


def test_monte_carlo_single_run(twobuyers):
    assert Q.monte_carlo(twobuyers.systems["TwoBuyers"], QUERY, 1, seed=5).estimate in (0.0, 1.0)


def test_monte_carlo_reproducible(twobuyers):
    p = twobuyers.systems["TwoBuyers"]
    assert Q.monte_carlo(p, QUERY, 500, seed=9) == Q.monte_carlo(p, QUERY, 500, seed=9)


def test_monte_carlo_counts_divergence():
    p = parse_process("mu X. k!<1>; X | mu Y. k?(x: nat); Y")
    r = Q.monte_carlo(p, "true", 10, seed=0, max_steps=20)
    assert r.divergent == 10


def test_monte_carlo_needs_runs(twobuyers):
    with pytest.raises(ValueError):
        Q.monte_carlo(twobuyers.systems["TwoBuyers"], "true", 0, seed=0)


# -- properties over generated graphs ---------------------------------------


def _atoms(g):
    out = set()
    for e in g.edges:
        for a in e.label.actions:
            out.add(Q.Atom("rule", (a.rule,)))
            if a.channel:
                out.add(Q.Atom("on", (a.channel,)))
            if a.rule == "Com":
                out.add(Q.Atom("sent", (a.channel, a.values[0])))
            if a.rule == "Label":
                out.add(Q.Atom("label", (a.channel, a.label)))
    return sorted(out, key=str) or [Q.Atom("true", ())]


def predicates(atoms):
    return st.recursive(st.sampled_from(atoms), lambda p: st.one_of(
        st.builds(Q.Not, p), st.builds(Q.And, p, p), st.builds(Q.Or, p, p)), max_leaves=4)


@st.composite
def graph_and_predicate(draw):
    s = generate_system(draw(seeds), max_fuel=4)
    g = M.build_graph(s.process, 12, unroll=True)
    return g, draw(predicates(_atoms(g)))


@given(graph_and_predicate())
def test_complement_sums_to_one(gp):
    g, p = gp
    a, b = Q.event_probability(g, p), Q.event_probability(g, Q.Not(p))
    if a.exact:
        assert a.value + b.value == 1


@given(graph_and_predicate(), st.data())
def test_monotone(gp, data):
    g, p = gp
    q = data.draw(predicates(_atoms(g)))
    weaker = Q.Or(p, q)
    a, b = Q.event_probability(g, p), Q.event_probability(g, weaker)
    assert a.lo <= b.lo and a.hi <= b.hi


@given(graph_and_predicate())
def test_dynamic_programming_matches_path_enumeration(gp):
    g, p = gp
    if Q.count_paths(g) > 10 ** 4:
        return
    r = Q.event_probability(g, p)
    assert (r.lo, r.hi) == Q.brute_force_probability(g, p)


def test_perturbed_graph_is_rejected():
    s = perturb(generate_system(4))
    g = M.build_graph(s.process, 12, unroll=True)
    with pytest.raises(Q.QueryError):
        Q.event_probability(g, "true")


def test_boolean_and_numeric_atoms_differ():
    p = parse_process("(0.5: k!<true> + 0.5: k!<1>) | (k?(x: bool) + k?(y: nat))")
    g = M.build_graph(p, 3, unroll=True)
    pred = Q.And(Q.Atom("sent", ("k", True)), Q.Atom("sent", ("k", 1)))
    assert Q.event_probability(g, pred).value == 0
    assert Q.event_probability(g, Q.Atom("sent", ("k", True))).value == F(1, 2)


def test_scheduler_fallback_is_wider(monkeypatch):
    p = parse_process("k!<1> | k?(x: nat); m!<x> | k?(y: nat); r!<y> | m?(z: nat)")
    g = M.build_graph(p, 5, unroll=True)
    exact = Q.event_probability(g, "on(m)")
    assert exact.schedulers == "memoryless"
    monkeypatch.setattr(Q, "MAX_SCHEDULERS", 0)
    wide = Q.event_probability(g, "on(m)")
    assert wide.schedulers == "history-dependent"
    assert wide.lo <= exact.lo and exact.hi <= wide.hi
    assert Q.brute_force_probability(g, "on(m)") == (wide.lo, wide.hi)
