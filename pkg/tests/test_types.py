from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from pmps import types as T
from pmps.generate import random_global
from pmps.kernel import ProbInterval, interval_sum, point
from pmps.syntax import parse_global, parse_local

ROLES = {"Alice": 1, "Seller": 2, "Bob": 3}


def G(text):
    return parse_global(text, ROLES)


@pytest.fixture
def purchase(twobuyers):
    return twobuyers.globals["Purchase"].gtype


def test_pid_of_end():
    assert T.pid(T.GEND) == frozenset()


def test_pid_and_sid(purchase):
    assert T.pid(purchase) == {1, 2, 3}
    assert T.sid(purchase) == 3
    assert set(T.channels(purchase)) == {"as", "ab", "bs"}


def test_project_alice(purchase):
    expected = parse_local("[0.7,0.9]: as!<string>. as?(int). 1: ab!<int>. end"
                           " + [0.15,0.25]: as!<nat>. as?(int). 1: ab!<int>. end")
    assert T.local_alpha_equal(T.project(purchase, 1), expected)


def test_project_end():
    assert T.project(T.GEND, 4) == T.END


def test_third_party_disagreement_is_undefined():
    g = G("Alice ->0.5 Bob : k { l1: Bob ->1 Seller: m<int>. end } + Alice ->0.5 Bob : k { l2: end }")
    assert isinstance(T.project(g, 2), T.Undefined)
    assert not T.well_formed(g).ok


def test_merge_alice_sends():
    g = G("Alice ->0.3 Seller : as<string>. end + Alice ->0.5 Seller : as<string>. end"
          " + Alice ->0.2 Seller : as<nat>. end")
    s = T.simplify_global(g)
    assert [b.interval for b in s.branches] == [point(F(4, 5)), point(F(1, 5))]


def test_single_branch_unchanged():
    g = G("Alice ->1 Bob : k<int>. end")
    assert T.simplify_global(g) == g


def test_merge_same_label():
    g = G("Alice ->[0.1,0.2] Bob : k { ok: end } + Alice ->0.3 Bob : k { ok: end }")
    s = T.simplify_global(g)
    assert len(s.branches) == 1
    assert s.branches[0].interval == ProbInterval(F(2, 5), F(1, 2))


def test_purchase_well_formed(purchase):
    assert T.well_formed(purchase).ok


def test_reflexive_interaction_rejected():
    assert not T.well_formed(G("Alice ->1 Alice : k<int>. end")).ok


def test_recursion_projects_for_outsider():
    g = G("mu t. Alice ->1 Bob : k<int>. t")
    assert T.project(g, 2) == T.END
    assert isinstance(T.project(g, 1), T.LRec)


def test_outsider_of_an_exiting_loop_is_undefined():
    # the outsider would see both t and end, which plain merging rejects
    g = G("mu t. (Alice ->0.5 Bob : k { again: t } + Alice ->0.5 Bob : k { stop: end })")
    assert isinstance(T.project(g, 2), T.Undefined)


def test_projection_commutes_with_simplify_on_golden(purchase):
    for q in (1, 2, 3):
        a = T.project(T.simplify_global(purchase), q)
        b = T.simplify_local(T.project(purchase, q))
        assert T.types_equal(a, b)


def _sums(g):
    if isinstance(g, (T.GMsg, T.GBranch)):
        yield g
    for c in T._gchildren(g):
        yield from _sums(c)


globals_ = st.integers(0, 10 ** 6).map(lambda s: random_global(__import__("random").Random(s))[0])


@given(globals_)
def test_simplify_idempotent(g):
    once = T.simplify_global(g)
    assert T.simplify_global(once) == once


@given(globals_)
def test_interval_fold_defined(g):
    for s in _sums(g):
        total = interval_sum(b.interval for b in s.branches)
        assert total.lo <= total.hi <= 1


@given(globals_)
def test_sender_and_receiver_agree_on_sorts(g):
    g = T.simplify_global(g)
    for s in _sums(g):
        if not isinstance(s, T.GMsg):
            continue
        sorts = {tuple(b.sorts) for b in s.branches}
        assert len(sorts) == len(s.branches)


@given(globals_)
def test_generated_globals_project_everywhere(g):
    assert T.well_formed(g).ok
    for q in T.pid(g):
        assert not isinstance(T.project(T.simplify_global(g), q), T.Undefined)
