from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from pmps import ast as A
from pmps import types as T
from pmps.generate import generate_system
from pmps.kernel import point
from pmps.syntax import parse_file, parse_process
from pmps.typing import (SessionEnv, SortEnv, TypeCheckError, is_typable, session_reference, type_reduce,
                         typecheck, typecheck_full)
from tests.conftest import TWOBUYERS

seeds = st.integers(0, 10 ** 6)
ALICE = """proc Alice =
    0.3: as!<"War and Peace">; Alice1
  + 0.5: as!<"The Art of War">; Alice2
  + 0.2: as!<0195014766>; Alice3"""


def with_alice(p1, p2, p3):
    text = TWOBUYERS.read_text()
    assert ALICE in text
    new = (f'proc Alice =\n    {p1}: as!<"War and Peace">; Alice1\n  + {p2}: as!<"The Art of War">; Alice2\n'
           f'  + {p3}: as!<0195014766>; Alice3')
    src = parse_file(text.replace(ALICE, new))
    return src.gamma(), src.systems["TwoBuyers"]


def test_two_buyers_well_typed(twobuyers, gamma):
    res = typecheck_full(gamma, twobuyers.systems["TwoBuyers"])
    assert res.delta == SessionEnv()
    assert res.warnings == []


def test_variant_uses_the_same_global_type(twobuyers, gamma):
    assert typecheck(gamma, twobuyers.systems["TwoBuyersVariant"]) == typecheck(gamma, twobuyers.systems["TwoBuyers"])


def test_probabilities_must_sum_to_one():
    gamma, p = with_alice("0.3", "0.5", "0.3")
    with pytest.raises(TypeCheckError) as e:
        typecheck(gamma, p)
    assert e.value.kind == "probability-sum"
    assert "11/10" in str(e.value)


def test_regrouped_probabilities_accepted():
    gamma, p = with_alice("0.5", "0.3", "0.2")
    assert typecheck(gamma, p) == SessionEnv()


def test_group_outside_interval_rejected():
    # strings 0.6 + 0.3 = 0.9 fit, the nat send 0.1 is below 0.15
    gamma, p = with_alice("0.6", "0.3", "0.1")
    with pytest.raises(TypeCheckError) as e:
        typecheck(gamma, p)
    assert e.value.kind == "interval"


def test_fresh_session_reduces_by_both_branches(twobuyers):
    ref = session_reference(twobuyers.globals["Purchase"])
    delta = SessionEnv.of({("ab", "as", "bs"): ref.family})
    intervals = sorted(((d.lo, d.hi) for d, _ in type_reduce(delta)))
    assert intervals == [(F(3, 20), F(1, 4)), (F(7, 10), F(9, 10))]


def test_end_only_environment_is_final():
    assert type_reduce(SessionEnv.of({("k",): {1: T.END, 2: T.END}})) == []


def test_delegation_pair_reduces_with_probability_one():
    carried = T.LSend("c", (T.LSendBranch(point(1), ("nat",), T.END),))
    delta = SessionEnv.of({("k",): {1: T.LDeleg("k", carried, 1, T.END), 2: T.LSessRecv("k", carried, 1, T.END)}})
    (step,) = type_reduce(delta)
    assert step[0] == point(1)
    assert step[1].is_end_only()


def test_unbound_variable():
    with pytest.raises(TypeCheckError) as e:
        typecheck(SortEnv(), parse_process("k!<x>"))
    assert e.value.kind == "unbound"


def test_sort_error_in_condition():
    with pytest.raises(TypeCheckError) as e:
        typecheck(SortEnv(), parse_process("if 3 then 0 else 0"))
    assert e.value.kind == "sort"


def test_conditional_arms_must_agree():
    with pytest.raises(TypeCheckError):
        typecheck(SortEnv(), parse_process("if true then k!<1> else k!<true>"))


def test_error_process_is_untypable():
    assert not is_typable(SortEnv(), A.ERROR)


def test_open_system_synthesizes_sessions(twobuyers, gamma):
    delta = typecheck(gamma, twobuyers.systems["Open"])
    assert set(delta.vectors()) == {("ab",), ("as",), ("bs",)}
    alice_as = [m.type for m in delta.family(("as",)) if isinstance(m.type, T.LSend)]
    assert [b.interval for b in alice_as[0].branches] == [point(F(4, 5)), point(F(1, 5))]


@given(seeds)
def test_typecheck_is_deterministic(seed):
    s = generate_system(seed, max_fuel=3)
    assert typecheck(s.gamma, s.process) == typecheck(s.gamma, s.process)


@given(seeds)
def test_closed_systems_have_end_only_environment(seed):
    s = generate_system(seed, max_fuel=3)
    assert typecheck(s.gamma, s.process).is_end_only()


def _prob_sums(p):
    for q in A.subterms(p):
        if isinstance(q, (A.Send, A.Select)):
            yield q


@given(seeds)
def test_accepted_sends_sum_to_one(seed):
    s = generate_system(seed, max_fuel=3)
    typecheck(s.gamma, s.process)
    for q in _prob_sums(s.process):
        assert sum(b.prob for b in q.branches) == 1


@given(seeds, st.sampled_from([F(1, 2), F(3, 2)]))
def test_scaled_probability_rejected(seed, factor):
    from pmps.generate import perturb
    s = perturb(generate_system(seed, max_fuel=3), factor)
    with pytest.raises(TypeCheckError) as e:
        typecheck(s.gamma, s.process)
    assert e.value.kind in ("probability-sum", "interval")
